#include "fbev/harness/evaluate.hpp"

#include <stdexcept>

namespace fbev::harness {

MapEvaluator::MapEvaluator(int classes, int rows, int cols, std::vector<double> region, const EvalOptions& opts)
    : classes_(classes), rows_(rows), cols_(cols), region_(std::move(region)), opts_(opts), counts_(classes) {
    if (!region_.empty() && region_.size() != static_cast<std::size_t>(rows) * cols)
        throw std::invalid_argument("evaluation region does not match the map size");
}

void MapEvaluator::add(const std::vector<double>& probs, const world::GroundTruth& gt) {
    const std::size_t cells = static_cast<std::size_t>(rows_) * cols_;
    if (gt.classes != classes_ || gt.rows != rows_ || gt.cols != cols_ || probs.size() != cells * classes_)
        throw std::invalid_argument("evaluation maps do not match the configured size or class count");
    std::vector<double> mask(cells, 1.0);
    for (std::size_t i = 0; i < cells; ++i) {
        if (!region_.empty() && region_[i] == 0.0) mask[i] = 0.0;
        if (opts_.subset == CellSubset::Visible && gt.visibility[i] == 0.0) mask[i] = 0.0;
        if (opts_.subset == CellSubset::Occluded && gt.visibility[i] != 0.0) mask[i] = 0.0;
    }
    if (opts_.paper_protocol) {
        const int R = loss::kProtocolRows, C = loss::kProtocolCols;
        const auto p = loss::resize_bilinear(probs, classes_, rows_, cols_, R, C);
        const auto g = loss::resize_nearest(gt.maps, classes_, rows_, cols_, R, C);
        const auto m = loss::resize_nearest(mask, 1, rows_, cols_, R, C);
        counts_.add(p, g, R, C, opts_.threshold, &m);
        counted_rows_ = R;
        counted_cols_ = C;
    } else {
        counts_.add(probs, gt.maps, rows_, cols_, opts_.threshold, &mask);
        counted_rows_ = rows_;
        counted_cols_ = cols_;
    }
    ++frames_;
}

loss::MetricReport make_report(const loss::ConfusionCounts& counts, const std::vector<world::ClassKind>& classes) {
    std::vector<std::string> names;
    std::vector<bool> is_static;
    for (auto k : classes) {
        names.push_back(world::class_name(k));
        is_static.push_back(world::is_static_class(k));
    }
    return loss::MetricReport::from_counts(counts, names, is_static);
}

EvalResult evaluate(const model::Network& net, const std::vector<world::Sequence>& data,
                    const std::vector<world::ClassKind>& classes, const EvalOptions& opts) {
    const int nc = net.config().classes;
    if (static_cast<int>(classes.size()) != nc)
        throw std::runtime_error("dataset has " + std::to_string(classes.size()) + " classes, checkpoint has " +
                                 std::to_string(nc));
    const auto spec = net.output_spec();
    MapEvaluator ev(nc, spec.Z, spec.X, model::field_of_view_mask(net.config().vt), opts);
    diff::NoGradGuard no_grad;
    for (const auto& seq : data) {
        temporal::MemoryBank bank(std::max(net.config().history, 1));
        for (const auto& f : seq.frames) {
            const Value image = Value::constant({3, f.image.height, f.image.width}, f.image.planar());
            const auto out = net.forward(image, f.pose, bank.read());
            ev.add(out.probs.data(), f.gt);
            bank.push(out.calibrated, f.pose);
        }
    }
    EvalResult r;
    r.counts = ev.counts();
    r.report = make_report(r.counts, classes);
    r.frames = ev.frames();
    r.counted_rows = ev.counted_rows();
    r.counted_cols = ev.counted_cols();
    return r;
}

}  // namespace fbev::harness
