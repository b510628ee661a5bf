#pragma once

#include <string>
#include <vector>

#include "fbev/loss/metrics.hpp"
#include "fbev/model/network.hpp"
#include "fbev/world/dataset.hpp"

namespace fbev::harness {

using diff::Value;

enum class CellSubset { All, Visible, Occluded };

struct EvalOptions {
    bool paper_protocol = false;  // resize maps to 196 x 200 before counting
    CellSubset subset = CellSubset::All;
    double threshold = 0.5;
};

// Pools confusion counts over frames. Cells outside `region` (the camera's
// field of view, [rows, cols]; empty = everywhere) are not counted.
class MapEvaluator {
  public:
    MapEvaluator(int classes, int rows, int cols, std::vector<double> region, const EvalOptions& opts);

    // probs: [N_c, rows, cols]; gt from the same frame.
    void add(const std::vector<double>& probs, const world::GroundTruth& gt);

    const loss::ConfusionCounts& counts() const { return counts_; }
    int frames() const { return frames_; }
    // Size of the maps counted by the last add (196 x 200 in protocol mode).
    int counted_rows() const { return counted_rows_; }
    int counted_cols() const { return counted_cols_; }

  private:
    int classes_, rows_, cols_;
    std::vector<double> region_;
    EvalOptions opts_;
    loss::ConfusionCounts counts_;
    int frames_ = 0;
    int counted_rows_ = 0;
    int counted_cols_ = 0;
};

struct EvalResult {
    loss::MetricReport report;
    loss::ConfusionCounts counts;
    int frames = 0;
    int counted_rows = 0;
    int counted_cols = 0;
};

loss::MetricReport make_report(const loss::ConfusionCounts& counts, const std::vector<world::ClassKind>& classes);

// Runs the network over every sequence in order with a fresh memory bank per
// sequence. Fails when the data's class count differs from the network's.
EvalResult evaluate(const model::Network& net, const std::vector<world::Sequence>& data,
                    const std::vector<world::ClassKind>& classes, const EvalOptions& opts = {});

}  // namespace fbev::harness
