#pragma once

#include <vector>

#include "fbev/model/params.hpp"
#include "fbev/model/view_transformer.hpp"
#include "fbev/temporal/fusion.hpp"

namespace fbev::model {

// [4C, Z, X] -> [C, 2Z, 2X]; channel block (dz, dx) fills sub-cell (dz, dx).
Value depth_to_space2(const Value& x);

struct Bottleneck {
    Conv reduce, spatial, expand;

    static Bottleneck create(ParameterSet& ps, const std::string& name, int channels, int mid);
    // relu(x + expand(relu(spatial(relu(reduce(x))))))
    Value operator()(const Value& x) const;
};

// Two residual bottlenecks on the BEV grid, a learned 2x upsampling, and a
// 3x3 convolution to per-class logits at twice the grid resolution.
class TopDownHead {
  public:
    TopDownHead() = default;
    TopDownHead(ParameterSet& ps, int channels, int mid, int up_channels, int classes);

    // [C, Z, X] -> [N_c, 2Z, 2X] logits.
    Value operator()(const Value& bev) const;

  private:
    Bottleneck block1_, block2_;
    Conv up_, logits_;
};

struct NetworkConfig {
    ViewTransformerConfig vt;
    std::vector<int> stem_widths{16, 24, 32};
    int history = 2;
    int classes = 4;
    int head_mid = 32;
    int head_up = 32;
};

struct NetworkOutput {
    Value calibrated;  // B_calib [C, Z, X], pushed to the memory bank
    Value fused;       // B_temp [C, Z, X]
    Value logits;      // [N_c, 2Z, 2X]
    Value probs;
};

class Network {
  public:
    Network(const NetworkConfig& cfg, std::uint64_t seed);

    const NetworkConfig& config() const { return cfg_; }
    ParameterSet& params() { return ps_; }
    const ParameterSet& params() const { return ps_; }
    const ViewTransformer& view_transformer() const { return vt_; }
    const temporal::TemporalFusion& fusion() const { return fusion_; }
    geometry::BevGridSpec output_spec() const { return cfg_.vt.bev.upsampled(2); }

    NetworkOutput forward(const Value& image, const temporal::EgoPose& pose,
                          const std::vector<temporal::BankEntry>& bank, const CycleOptions& opts = {}) const;

  private:
    NetworkConfig cfg_;
    ParameterSet ps_;
    ConvPyramid pyramid_;
    ViewTransformer vt_;
    temporal::TemporalFusion fusion_;
    TopDownHead head_;
};

// 1 where the output-resolution cell is covered by some pyramid level's
// camera frustum ([2Z, 2X], nearest upsampling of the BEV grid mask).
std::vector<double> field_of_view_mask(const ViewTransformerConfig& cfg);

}  // namespace fbev::model
