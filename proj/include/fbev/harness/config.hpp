#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fbev/loss/losses.hpp"
#include "fbev/model/network.hpp"
#include "fbev/world/dataset.hpp"

namespace fbev::harness {

class ConfigError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

struct OptimConfig {
    double lr = 2e-3;
    int warmup_steps = 150;
    int steps = 2000;
    int batch = 4;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double grad_clip = 5.0;  // global L2 norm; 0 disables
};

// Everything a run depends on. Flat key = value text round-trips exactly.
struct ExperimentConfig {
    std::string preset = "desk";
    model::NetworkConfig net;
    world::WorldConfig world;
    world::TrajectoryConfig trajectory;
    double camera_v0 = 28.0;
    double camera_height = 1.5;
    int frames_per_sequence = 10;
    std::string train_seeds = "5";
    std::string eval_seeds = "1001..1004";
    std::string data_dir;  // load frames from here instead of generating
    OptimConfig optim;
    double alpha = 0.001;
    double beta = 0.01;
    bool class_weighting = true;
    std::uint64_t seed = 1;
    int log_every = 10;

    void validate() const;
    std::string to_text() const;
    int num_classes() const { return world.num_classes(); }
    world::DatasetConfig dataset_config() const;
    model::NetworkConfig network_config() const;
};

ExperimentConfig desk_preset();
ExperimentConfig paper_preset();

// Applies one key; throws ConfigError naming the key on unknown keys or bad values.
void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value);

// Parses "key = value" lines ('#' starts a comment). A `preset` key selects the
// starting point regardless of where it appears; other keys override it.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

}  // namespace fbev::harness
