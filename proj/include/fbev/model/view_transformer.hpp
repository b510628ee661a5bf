#pragma once

#include <vector>

#include "fbev/geometry/grid.hpp"
#include "fbev/model/column_decoder.hpp"
#include "fbev/model/params.hpp"

namespace fbev::model {

// Per-level PV features F_i [C_T, H_i, W_i], finest level first.
struct FeaturePyramid {
    std::vector<Value> levels;
};

// Small strided convolutional pyramid standing in for a backbone + FPN: three
// stride-2 stem blocks reach 1/8 resolution, each further level adds one
// stride-2 block, and every level is projected to C_T by a 1x1 convolution.
class ConvPyramid {
  public:
    ConvPyramid() = default;
    ConvPyramid(ParameterSet& ps, int levels, int channels, std::vector<int> stem_widths);

    FeaturePyramid operator()(const Value& image) const;
    int levels() const { return levels_; }
    const Conv& first_conv() const { return blocks_.front(); }

  private:
    int levels_ = 0;
    std::vector<Conv> blocks_;
    std::vector<Conv> laterals_;
};

struct ViewTransformerConfig {
    geometry::CameraModel camera;
    geometry::BevGridSpec bev;
    int levels = 3;
    int channels = 32;
    int decoder_layers = 2;
    int heads = 4;
};

struct LevelModules {
    geometry::LevelSpec spec;
    int feat_h = 0;
    int feat_w = 0;
    Value emb_bev;        // [C, Z_i, W_i], query of the first PV->BEV pass
    Value emb_bev_calib;  // [C, Z_i, W_i], query of the second PV->BEV pass
    Value emb_pv;         // [C, H_i, W_i], query of the BEV->PV pass
    ColumnDecoder pv_to_bev;
    ColumnDecoder bev_to_pv;
};

// Switches used by tests and audits to isolate the paths of the cycle.
struct CycleOptions {
    bool detach_first_pass = false;   // first PV->BEV pass uses detached weights
    bool detach_second_pass = false;  // second PV->BEV pass uses detached weights
    bool zero_second_pass = false;    // second PV->BEV output replaced by zeros
    bool zero_calibrated_pv = false;  // BEV->PV output replaced by zeros
};

struct CycleResult {
    Value initial;      // P_i        [C, Z_i, W_i]
    Value calibrated_pv;  // F_i^calib [C, H_i, W_i]
    Value calibrated;   // P_i^calib  [C, Z_i, W_i]
};

class ViewTransformer {
  public:
    ViewTransformer() = default;
    ViewTransformer(ParameterSet& ps, const ViewTransformerConfig& cfg);

    const ViewTransformerConfig& config() const { return cfg_; }
    const std::vector<LevelModules>& levels() const { return levels_; }
    const LevelModules& level(int i) const;  // i is 1-based

    Value pv_to_bev_initial(int level, const Value& features, DecoderTrace* trace = nullptr) const;
    Value bev_to_pv(int level, const Value& polar, DecoderTrace* trace = nullptr) const;
    CycleResult cycle_calibrate(int level, const Value& features, const CycleOptions& opts = {}) const;
    // Calibrated Cartesian BEV features [C, Z, X].
    Value cycle_view_transform(const FeaturePyramid& pyramid, const CycleOptions& opts = {}) const;

  private:
    ViewTransformerConfig cfg_;
    std::vector<LevelModules> levels_;
};

}  // namespace fbev::model
