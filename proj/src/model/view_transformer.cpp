#include "fbev/model/view_transformer.hpp"

#include <stdexcept>
#include <string>

#include "fbev/diff/ops.hpp"

namespace fbev::model {

using namespace fbev::diff;

ConvPyramid::ConvPyramid(ParameterSet& ps, int levels, int channels, std::vector<int> stem_widths)
    : levels_(levels) {
    if (levels < 1 || levels > 5) throw std::invalid_argument("pyramid: levels must be 1..5");
    if (stem_widths.size() != 3) throw std::invalid_argument("pyramid: expected three stem widths");
    int in = 3;
    for (int s = 0; s < 3; ++s) {
        blocks_.push_back(Conv::create(ps, "pyramid.stem" + std::to_string(s), in, stem_widths[s], 3, 2));
        in = stem_widths[s];
    }
    for (int l = 2; l <= levels; ++l) {
        blocks_.push_back(Conv::create(ps, "pyramid.down" + std::to_string(l), in, in, 3, 2));
    }
    for (int l = 1; l <= levels; ++l) {
        laterals_.push_back(Conv::create(ps, "pyramid.lateral" + std::to_string(l), in, channels, 1, 1));
    }
}

FeaturePyramid ConvPyramid::operator()(const Value& image) const {
    if (image.rank() != 3 || image.dim(0) != 3) {
        throw ShapeError("extract_pyramid: expected a [3,H,W] image, got " + shape_str(image.shape()));
    }
    const int largest = geometry::level_downsample_factor(levels_);
    if (image.dim(1) % largest != 0 || image.dim(2) % largest != 0) {
        throw ShapeError("extract_pyramid: image " + shape_str(image.shape()) +
                         " not divisible by the largest downsample factor " + std::to_string(largest));
    }
    FeaturePyramid out;
    Value x = image;
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
        x = relu(blocks_[b](x));
        if (b >= 2) out.levels.push_back(laterals_[b - 2](x));
    }
    return out;
}

ViewTransformer::ViewTransformer(ParameterSet& ps, const ViewTransformerConfig& cfg) : cfg_(cfg) {
    const auto parts = geometry::depth_partition(cfg.bev, cfg.camera, cfg.levels);
    const int C = cfg.channels;
    for (const auto& part : parts) {
        const std::string name = "vt.level" + std::to_string(part.level);
        LevelModules m;
        m.spec = part;
        m.feat_h = cfg.camera.image_h / part.factor;
        m.feat_w = cfg.camera.image_w / part.factor;
        m.emb_bev = ps.normal(name + ".emb_bev", {C, part.rows(), m.feat_w}, 0.02);
        m.emb_bev_calib = ps.normal(name + ".emb_bev_calib", {C, part.rows(), m.feat_w}, 0.02);
        m.emb_pv = ps.normal(name + ".emb_pv", {C, m.feat_h, m.feat_w}, 0.02);
        m.pv_to_bev = ColumnDecoder(ps, name + ".pv_to_bev",
                                    {cfg.decoder_layers, cfg.heads, C, part.rows(), m.feat_h});
        m.bev_to_pv = ColumnDecoder(ps, name + ".bev_to_pv",
                                    {cfg.decoder_layers, cfg.heads, C, m.feat_h, part.rows()});
        levels_.push_back(std::move(m));
    }
}

const LevelModules& ViewTransformer::level(int i) const {
    if (i < 1 || i > static_cast<int>(levels_.size())) {
        throw std::out_of_range("view transformer has no level " + std::to_string(i));
    }
    return levels_[static_cast<std::size_t>(i - 1)];
}

Value ViewTransformer::pv_to_bev_initial(int i, const Value& features, DecoderTrace* trace) const {
    const auto& m = level(i);
    return m.pv_to_bev(m.emb_bev, features, trace);
}

Value ViewTransformer::bev_to_pv(int i, const Value& polar, DecoderTrace* trace) const {
    const auto& m = level(i);
    return m.bev_to_pv(m.emb_pv, polar, trace);
}

CycleResult ViewTransformer::cycle_calibrate(int i, const Value& features, const CycleOptions& opts) const {
    const auto& m = level(i);
    CycleResult r;
    const ColumnDecoder first = opts.detach_first_pass ? m.pv_to_bev.detached() : m.pv_to_bev;
    const ColumnDecoder second = opts.detach_second_pass ? m.pv_to_bev.detached() : m.pv_to_bev;
    r.initial = first(m.emb_bev, features);
    r.calibrated_pv = m.bev_to_pv(m.emb_pv, r.initial);
    if (opts.zero_calibrated_pv) r.calibrated_pv = scale(r.calibrated_pv, 0.0);
    Value refined = second(m.emb_bev_calib, r.calibrated_pv);
    if (opts.zero_second_pass) refined = scale(refined, 0.0);
    r.calibrated = add(refined, r.initial);
    return r;
}

Value ViewTransformer::cycle_view_transform(const FeaturePyramid& pyramid, const CycleOptions& opts) const {
    if (pyramid.levels.size() != levels_.size()) {
        throw ShapeError("cycle_view_transform: pyramid has " + std::to_string(pyramid.levels.size()) +
                         " levels, transformer expects " + std::to_string(levels_.size()));
    }
    std::vector<Value> cartesian;
    std::vector<geometry::LevelSpec> specs;
    for (std::size_t k = 0; k < levels_.size(); ++k) {
        const auto& m = levels_[k];
        const Value polar = cycle_calibrate(m.spec.level, pyramid.levels[k], opts).calibrated;
        cartesian.push_back(geometry::polar_to_cartesian(polar, cfg_.camera, m.spec.factor, cfg_.bev, m.spec));
        specs.push_back(m.spec);
    }
    return geometry::concat_depth(cartesian, specs, cfg_.bev);
}

}  // namespace fbev::model
