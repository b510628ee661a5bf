#include "fbev/loss/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace fbev::loss {

void ConfusionCounts::add(const std::vector<double>& pred, const std::vector<double>& gt, int rows, int cols,
                          double threshold, const std::vector<double>* cell_mask) {
    if (!(threshold > 0.0 && threshold < 1.0)) throw std::invalid_argument("metric threshold must be in (0,1)");
    const std::size_t plane = static_cast<std::size_t>(rows) * cols;
    if (pred.size() != gt.size() || pred.size() != plane * counts_.size()) {
        throw std::invalid_argument("metric: prediction (" + std::to_string(pred.size()) +
                                    "), ground truth (" + std::to_string(gt.size()) + ") and " +
                                    std::to_string(counts_.size()) + " classes of " + std::to_string(rows) +
                                    "x" + std::to_string(cols) + " disagree");
    }
    if (cell_mask && cell_mask->size() != plane) throw std::invalid_argument("metric: mask must be [H,W]");
    for (std::size_t k = 0; k < counts_.size(); ++k) {
        auto& c = counts_[k];
        for (std::size_t i = 0; i < plane; ++i) {
            if (cell_mask && (*cell_mask)[i] == 0.0) continue;
            const bool p = pred[k * plane + i] > threshold;
            const bool y = gt[k * plane + i] > 0.5;
            c.tp += p && y;
            c.fp += p && !y;
            c.fn += !p && y;
        }
    }
}

std::vector<double> ConfusionCounts::iou() const {
    std::vector<double> out;
    for (const auto& c : counts_) {
        const std::int64_t uni = c.tp + c.fp + c.fn;
        out.push_back(uni == 0 ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(uni));
    }
    return out;
}

void ConfusionCounts::merge(const ConfusionCounts& other) {
    if (other.counts_.size() != counts_.size()) throw std::invalid_argument("metric: class count mismatch");
    for (std::size_t k = 0; k < counts_.size(); ++k) {
        counts_[k].tp += other.counts_[k].tp;
        counts_[k].fp += other.counts_[k].fp;
        counts_[k].fn += other.counts_[k].fn;
    }
}

std::vector<double> iou_metric(const std::vector<double>& pred, const std::vector<double>& gt, int classes,
                               int rows, int cols, double threshold) {
    ConfusionCounts cc(classes);
    cc.add(pred, gt, rows, cols, threshold);
    return cc.iou();
}

double miou(const std::vector<double>& per_class) {
    if (per_class.empty()) return 0.0;
    return std::accumulate(per_class.begin(), per_class.end(), 0.0) / static_cast<double>(per_class.size());
}

std::vector<double> resize_bilinear(const std::vector<double>& maps, int classes, int rows, int cols,
                                    int out_rows, int out_cols) {
    std::vector<double> out(static_cast<std::size_t>(classes) * out_rows * out_cols);
    const double sy = static_cast<double>(rows) / out_rows;
    const double sx = static_cast<double>(cols) / out_cols;
    for (int k = 0; k < classes; ++k) {
        const double* src = maps.data() + static_cast<std::size_t>(k) * rows * cols;
        for (int r = 0; r < out_rows; ++r) {
            const double fy = std::clamp((r + 0.5) * sy - 0.5, 0.0, rows - 1.0);
            const int y0 = static_cast<int>(fy);
            const int y1 = std::min(y0 + 1, rows - 1);
            const double ty = fy - y0;
            for (int c = 0; c < out_cols; ++c) {
                const double fx = std::clamp((c + 0.5) * sx - 0.5, 0.0, cols - 1.0);
                const int x0 = static_cast<int>(fx);
                const int x1 = std::min(x0 + 1, cols - 1);
                const double tx = fx - x0;
                const double top = (1 - tx) * src[y0 * cols + x0] + tx * src[y0 * cols + x1];
                const double bot = (1 - tx) * src[y1 * cols + x0] + tx * src[y1 * cols + x1];
                out[(static_cast<std::size_t>(k) * out_rows + r) * out_cols + c] = (1 - ty) * top + ty * bot;
            }
        }
    }
    return out;
}

std::vector<double> resize_nearest(const std::vector<double>& maps, int classes, int rows, int cols,
                                   int out_rows, int out_cols) {
    std::vector<double> out(static_cast<std::size_t>(classes) * out_rows * out_cols);
    for (int k = 0; k < classes; ++k) {
        for (int r = 0; r < out_rows; ++r) {
            const int sr = std::min(rows - 1, static_cast<int>((r + 0.5) * rows / out_rows));
            for (int c = 0; c < out_cols; ++c) {
                const int sc = std::min(cols - 1, static_cast<int>((c + 0.5) * cols / out_cols));
                out[(static_cast<std::size_t>(k) * out_rows + r) * out_cols + c] =
                    maps[(static_cast<std::size_t>(k) * rows + sr) * cols + sc];
            }
        }
    }
    return out;
}

MetricReport MetricReport::from_counts(const ConfusionCounts& counts, std::vector<std::string> names,
                                       std::vector<bool> is_static) {
    if (static_cast<int>(names.size()) != counts.classes() || names.size() != is_static.size()) {
        throw std::invalid_argument("metric report: class names do not match the class count");
    }
    MetricReport r;
    r.class_names = std::move(names);
    r.is_static = std::move(is_static);
    r.iou = counts.iou();
    r.miou = loss::miou(r.iou);
    std::vector<double> layout, object;
    for (std::size_t k = 0; k < r.iou.size(); ++k) (r.is_static[k] ? layout : object).push_back(r.iou[k]);
    r.layout_miou = loss::miou(layout);
    r.object_miou = loss::miou(object);
    return r;
}

std::string MetricReport::to_text() const {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4);
    os << std::left << std::setw(16) << "class" << std::setw(8) << "group" << "IoU\n";
    for (std::size_t k = 0; k < iou.size(); ++k) {
        os << std::setw(16) << class_names[k] << std::setw(8) << (is_static[k] ? "layout" : "object") << iou[k]
           << '\n';
    }
    os << "layout mIoU " << layout_miou << '\n';
    os << "object mIoU " << object_miou << '\n';
    os << "mIoU " << miou << '\n';
    return os.str();
}

std::string MetricReport::to_csv() const {
    std::ostringstream os;
    os << std::setprecision(10);
    os << "class,group,iou\n";
    for (std::size_t k = 0; k < iou.size(); ++k) {
        os << class_names[k] << ',' << (is_static[k] ? "layout" : "object") << ',' << iou[k] << '\n';
    }
    os << "layout_miou,layout," << layout_miou << '\n';
    os << "object_miou,object," << object_miou << '\n';
    os << "miou,all," << miou << '\n';
    return os.str();
}

}  // namespace fbev::loss
