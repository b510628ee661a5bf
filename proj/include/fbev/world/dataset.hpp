#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fbev/world/world.hpp"

namespace fbev::world {

struct FrameSample {
    Image image;
    GroundTruth gt;
    EgoPose pose;
};

struct Sequence {
    std::int64_t scene_id = 0;
    std::vector<FrameSample> frames;
};

struct DatasetConfig {
    WorldConfig world;
    TrajectoryConfig trajectory;
    RenderCamera camera;
    geometry::BevGridSpec gt_spec;  // resolution of the ground truth maps
    int frames_per_sequence = 8;
};

Sequence generate_sequence(const DatasetConfig& cfg, std::uint64_t seed);
std::vector<Sequence> generate_dataset(const DatasetConfig& cfg, const std::vector<std::uint64_t>& seeds);

// One directory per sequence (seq_<scene_id>/) with frame_NNNN.png,
// frame_NNNN_<class>.pgm, frame_NNNN_visibility.pgm and poses.txt; manifest.txt
// at the root lists the classes, then "<dir> <frames>" per sequence.
void dump_dataset(const std::string& dir, const std::vector<Sequence>& data, const WorldConfig& world);

struct LoadedDataset {
    std::vector<ClassKind> classes;
    std::vector<Sequence> sequences;
};
LoadedDataset load_dataset(const std::string& dir);
// One seq_<id>/ directory; `classes` names the map files to read.
Sequence load_sequence(const std::string& dir, const std::vector<ClassKind>& classes);

// "a..b" (inclusive) or a comma list.
std::vector<std::uint64_t> parse_seed_range(const std::string& text);

}  // namespace fbev::world
