#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fbev::loss {

struct ClassCounts {
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;
};

// Confusion counts accumulated over many maps, IoU = tp / (tp + fp + fn),
// taken as 1 when the union is empty.
class ConfusionCounts {
  public:
    explicit ConfusionCounts(int classes = 0) : counts_(static_cast<std::size_t>(classes)) {}

    // Binarizes `pred` at `threshold`; `gt` is binary. `cell_mask` ([H, W],
    // nonzero = counted) is optional.
    void add(const std::vector<double>& pred, const std::vector<double>& gt, int rows, int cols,
             double threshold = 0.5, const std::vector<double>* cell_mask = nullptr);

    int classes() const { return static_cast<int>(counts_.size()); }
    const std::vector<ClassCounts>& counts() const { return counts_; }
    std::vector<double> iou() const;
    void merge(const ConfusionCounts& other);

  private:
    std::vector<ClassCounts> counts_;
};

std::vector<double> iou_metric(const std::vector<double>& pred, const std::vector<double>& gt, int classes,
                               int rows, int cols, double threshold = 0.5);
double miou(const std::vector<double>& per_class);

// Resizing for the fixed evaluation resolution: probabilities bilinearly
// (half-pixel centers, edge clamped), binary ground truth by nearest cell.
std::vector<double> resize_bilinear(const std::vector<double>& maps, int classes, int rows, int cols,
                                    int out_rows, int out_cols);
std::vector<double> resize_nearest(const std::vector<double>& maps, int classes, int rows, int cols,
                                   int out_rows, int out_cols);

inline constexpr int kProtocolRows = 196;
inline constexpr int kProtocolCols = 200;

struct MetricReport {
    std::vector<std::string> class_names;
    std::vector<bool> is_static;
    std::vector<double> iou;
    double miou = 0.0;
    double layout_miou = 0.0;
    double object_miou = 0.0;

    static MetricReport from_counts(const ConfusionCounts& counts, std::vector<std::string> names,
                                    std::vector<bool> is_static);
    std::string to_text() const;
    std::string to_csv() const;
};

}  // namespace fbev::loss
