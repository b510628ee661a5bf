#pragma once

#include <iosfwd>
#include <stdexcept>
#include <vector>

#include "fbev/harness/config.hpp"
#include "fbev/harness/optimizer.hpp"
#include "fbev/model/network.hpp"
#include "fbev/temporal/fusion.hpp"
#include "fbev/world/dataset.hpp"

namespace fbev::harness {

using diff::Value;

class NonFiniteLoss : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Training frames for a config: loaded from data_dir when set, generated
// from train_seeds otherwise.
std::vector<world::Sequence> training_data(const ExperimentConfig& cfg);
std::vector<world::Sequence> evaluation_data(const ExperimentConfig& cfg);

struct StepLog {
    int step = 0;
    double lr = 0.0;
    double total = 0.0;
    double bce = 0.0;
    double uncert = 0.0;
    double iou = 0.0;
    double grad_norm = 0.0;
};

std::string format_step_log(const StepLog& log);

// One training loop: `batch` streams walk the sequence-major frame list from
// evenly spaced offsets, each with its own memory bank.
class Trainer {
  public:
    Trainer(const ExperimentConfig& cfg, const std::vector<world::Sequence>& data);

    // Runs optimizer step steps_done() + 1.
    StepLog step();
    // Runs until `last_step` (defaults to the configured total), logging every
    // log_every steps and the final one.
    std::vector<StepLog> run(std::ostream* log = nullptr, int last_step = -1);

    const ExperimentConfig& config() const { return cfg_; }
    model::Network& network() { return net_; }
    const model::Network& network() const { return net_; }
    AdamW& optimizer() { return opt_; }
    const AdamW& optimizer() const { return opt_; }
    int steps_done() const { return opt_.steps_taken(); }
    std::vector<temporal::MemoryBank>& banks() { return banks_; }
    const std::vector<temporal::MemoryBank>& banks() const { return banks_; }
    std::vector<std::size_t>& cursors() { return cursors_; }
    const std::vector<std::size_t>& cursors() const { return cursors_; }
    const std::vector<double>& class_weights() const { return weights_.class_weights; }
    std::size_t frame_count() const { return frames_.size(); }

  private:
    struct Frame {
        Value image;
        Value gt;
        std::vector<double> visibility;
        temporal::EgoPose pose;
        bool starts_sequence = false;
    };

    ExperimentConfig cfg_;
    model::Network net_;
    AdamW opt_;
    loss::LossWeights weights_;
    std::vector<Frame> frames_;
    std::vector<temporal::MemoryBank> banks_;
    std::vector<std::size_t> cursors_;
};

}  // namespace fbev::harness
