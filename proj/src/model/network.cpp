#include "fbev/model/network.hpp"

#include "fbev/diff/ops.hpp"

namespace fbev::model {

using namespace fbev::diff;

Value depth_to_space2(const Value& x) {
    if (x.rank() != 3 || x.dim(0) % 4 != 0) {
        throw ShapeError("depth_to_space2: expected [4C,Z,X], got " + shape_str(x.shape()));
    }
    const int C = x.dim(0) / 4, Z = x.dim(1), X = x.dim(2);
    const Value split = reshape(x, {C, 2, 2, Z, X});
    return reshape(permute(split, {0, 3, 1, 4, 2}), {C, 2 * Z, 2 * X});
}

Bottleneck Bottleneck::create(ParameterSet& ps, const std::string& name, int channels, int mid) {
    return {Conv::create(ps, name + ".reduce", channels, mid, 1, 1),
            Conv::create(ps, name + ".spatial", mid, mid, 3, 1),
            Conv::create(ps, name + ".expand", mid, channels, 1, 1)};
}

Value Bottleneck::operator()(const Value& x) const {
    return relu(add(x, expand(relu(spatial(relu(reduce(x)))))));
}

TopDownHead::TopDownHead(ParameterSet& ps, int channels, int mid, int up_channels, int classes)
    : block1_(Bottleneck::create(ps, "head.block1", channels, mid)),
      block2_(Bottleneck::create(ps, "head.block2", channels, mid)),
      up_(Conv::create(ps, "head.up", channels, 4 * up_channels, 1, 1)),
      logits_(Conv::create(ps, "head.logits", up_channels, classes, 3, 1)) {}

Value TopDownHead::operator()(const Value& bev) const {
    const Value x = block2_(block1_(bev));
    return logits_(relu(depth_to_space2(up_(x))));
}

Network::Network(const NetworkConfig& cfg, std::uint64_t seed)
    : cfg_(cfg),
      ps_(seed),
      pyramid_(ps_, cfg.vt.levels, cfg.vt.channels, cfg.stem_widths),
      vt_(ps_, cfg.vt),
      fusion_(ps_, cfg.history, cfg.vt.channels),
      head_(ps_, cfg.vt.channels, cfg.head_mid, cfg.head_up, cfg.classes) {}

NetworkOutput Network::forward(const Value& image, const temporal::EgoPose& pose,
                               const std::vector<temporal::BankEntry>& bank, const CycleOptions& opts) const {
    NetworkOutput out;
    out.calibrated = vt_.cycle_view_transform(pyramid_(image), opts);
    out.fused = fusion_(out.calibrated, pose, bank, cfg_.vt.bev);
    out.logits = head_(out.fused);
    out.probs = sigmoid(out.logits);
    return out;
}

std::vector<double> field_of_view_mask(const ViewTransformerConfig& cfg) {
    const auto parts = geometry::depth_partition(cfg.bev, cfg.camera, cfg.levels);
    std::vector<Value> grids;
    for (const auto& part : parts) {
        const int width = cfg.camera.image_w / part.factor;
        const Value ones = Value::full({1, part.rows(), width}, 1.0);
        grids.push_back(geometry::polar_to_cartesian(ones, cfg.camera, part.factor, cfg.bev, part));
    }
    const Value mask = geometry::concat_depth(grids, parts, cfg.bev);
    const int Z = cfg.bev.Z, X = cfg.bev.X;
    std::vector<double> out(static_cast<std::size_t>(4) * Z * X);
    for (int r = 0; r < 2 * Z; ++r) {
        for (int c = 0; c < 2 * X; ++c) {
            // Polar samples inside [0, W-1] reproduce a constant field exactly.
            out[static_cast<std::size_t>(r) * 2 * X + c] = mask.at((r / 2) * X + c / 2) > 1.0 - 1e-9 ? 1.0 : 0.0;
        }
    }
    return out;
}

}  // namespace fbev::model
