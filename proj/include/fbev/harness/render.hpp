#pragma once

#include <string>
#include <vector>

#include "fbev/model/network.hpp"
#include "fbev/world/dataset.hpp"

namespace fbev::harness {

using diff::Value;

inline constexpr world::Rgb kEmptyCellColor{0, 0, 0};
inline constexpr world::Rgb kPanelGapColor{255, 255, 255};

// One pixel per cell: the palette color of the last class in `classes`
// present at the cell (probability > threshold), kEmptyCellColor otherwise.
world::Image colorize_map(const std::vector<double>& maps, const std::vector<world::ClassKind>& classes, int rows,
                          int cols, double threshold = 0.5);

// GT colors with occluded cells halved in brightness.
world::Image occlusion_overlay(const world::GroundTruth& gt, const std::vector<world::ClassKind>& classes);

// Four panels left to right (input, GT, prediction, occlusion overlay), each
// map cell drawn as a scale x scale block, separated by gap-colored columns.
struct PanelLayout {
    int scale = 1;
    int panel_h = 0;
    int image_w = 0;
    int map_w = 0;
    int gap = 4;

    static PanelLayout for_frame(int image_h, int image_w, int map_rows, int map_cols);
    int width() const { return image_w + 3 * map_w + 3 * gap; }
    // Left column of panel i (0 = input image).
    int panel_x(int i) const { return i == 0 ? 0 : image_w + gap + (i - 1) * (map_w + gap); }
};

world::Image compose_panels(const world::Image& input, const world::Image& gt_map, const world::Image& pred_map,
                            const world::Image& overlay, const PanelLayout& layout);

// Runs the network over the sequence with a fresh bank and writes
// <out_dir>/frame_NNNN_panel.png per frame. Returns the written paths.
std::vector<std::string> render_maps(const model::Network& net, const world::Sequence& seq,
                                     const std::vector<world::ClassKind>& classes, const std::string& out_dir);

}  // namespace fbev::harness
