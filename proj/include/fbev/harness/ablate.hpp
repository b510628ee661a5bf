#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "fbev/harness/config.hpp"
#include "fbev/loss/metrics.hpp"
#include "fbev/world/dataset.hpp"

namespace fbev::harness {

enum class AblationAxis { DecoderLayers, History };
AblationAxis parse_axis(const std::string& name);  // "n_dec" or "n_his"
std::string axis_name(AblationAxis axis);

// The base config with one axis set to `value`; validates the value.
ExperimentConfig with_axis_value(const ExperimentConfig& base, AblationAxis axis, int value);

struct AblationTable {
    AblationAxis axis = AblationAxis::DecoderLayers;
    std::vector<int> values;
    std::vector<loss::MetricReport> all_cells;  // one per value
    std::vector<loss::MetricReport> occluded;   // same, counted on occluded cells only

    // Rows Layout / Object / Total mIoU (and occluded Layout), one column per value.
    std::string to_text() const;
};

// Trains one run per value from the same seed and data, then evaluates each.
AblationTable ablate(const ExperimentConfig& base, AblationAxis axis, const std::vector<int>& values,
                     const std::vector<world::Sequence>& train, const std::vector<world::Sequence>& eval,
                     std::ostream* log = nullptr);

}  // namespace fbev::harness
