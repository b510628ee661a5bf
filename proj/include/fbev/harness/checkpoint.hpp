#pragma once

#include <string>
#include <vector>

#include "fbev/diff/value.hpp"
#include "fbev/harness/config.hpp"
#include "fbev/harness/trainer.hpp"

namespace fbev::harness {

struct NamedArray {
    std::string name;
    diff::Shape shape;
    std::vector<double> data;
};

// Ordered named arrays plus the run config. On disk: `path` holds the blob
// ("FBEVCKPT", u64 array count, then per array u64 byte length and raw
// little-endian doubles); `path`.manifest lists name, shape and byte offset
// of each payload, with the config embedded as "# key = value" lines.
struct Checkpoint {
    ExperimentConfig config;
    std::vector<NamedArray> arrays;

    const NamedArray& get(const std::string& name) const;
    const NamedArray* find(const std::string& name) const;
};

std::string manifest_path(const std::string& path);
void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::string& path);

// Parameters, optimizer moments, step count, memory banks and stream cursors.
Checkpoint capture(const Trainer& trainer);
// Rebuilds a trainer from a checkpoint so the next step matches the run that
// wrote it. `data` must be the same training frames.
Trainer restore_trainer(const Checkpoint& ckpt, const std::vector<world::Sequence>& data);
// Network with the checkpoint's parameters.
model::Network restore_network(const Checkpoint& ckpt);

}  // namespace fbev::harness
