#include "fbev/model/column_decoder.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "fbev/diff/ops.hpp"

namespace fbev::model {

using namespace fbev::diff;

Value column_collapse(const Value& grid) {
    if (grid.rank() != 3) throw ShapeError("column_collapse: expected [C,L,W], got " + shape_str(grid.shape()));
    return permute(grid, {2, 1, 0});
}

Value ray_expand(const Value& seq) {
    if (seq.rank() != 3) throw ShapeError("ray_expand: expected [W,L,C], got " + shape_str(seq.shape()));
    return permute(seq, {2, 1, 0});
}

ColumnDecoder::ColumnDecoder(ParameterSet& ps, const std::string& name, const DecoderConfig& cfg)
    : cfg_(cfg) {
    const int C = cfg.channels;
    if (cfg.layers < 0 || cfg.heads <= 0 || C <= 0 || C % cfg.heads != 0) {
        throw std::invalid_argument("decoder " + name + ": channels " + std::to_string(C) +
                                    " must be divisible by heads " + std::to_string(cfg.heads));
    }
    if (cfg.query_len <= 0 || cfg.key_len <= 0) {
        throw std::invalid_argument("decoder " + name + ": sequence lengths must be positive");
    }
    if (cfg.layers == 0) {
        fallback_in_ = Linear::create(ps, name + ".mlp_in", cfg.key_len * C, 2 * C);
        fallback_out_ = Linear::create(ps, name + ".mlp_out", 2 * C, cfg.query_len * C);
        return;
    }
    pos_q_ = ps.normal(name + ".pos_q", {cfg.query_len, C}, 0.02);
    pos_k_ = ps.normal(name + ".pos_k", {cfg.key_len, C}, 0.02);
    for (int l = 0; l < cfg.layers; ++l) {
        const std::string p = name + ".layer" + std::to_string(l);
        DecoderLayer layer;
        layer.wq = Linear::create(ps, p + ".wq", C, C);
        layer.wk = Linear::create(ps, p + ".wk", C, C);
        layer.wv = Linear::create(ps, p + ".wv", C, C);
        layer.wo = Linear::create(ps, p + ".wo", C, C);
        layer.norm_attn = LayerNormParams::create(ps, p + ".norm_attn", C);
        layer.mlp_in = Linear::create(ps, p + ".mlp_in", C, 2 * C);
        layer.mlp_out = Linear::create(ps, p + ".mlp_out", 2 * C, C);
        layer.norm_mlp = LayerNormParams::create(ps, p + ".norm_mlp", C);
        layers_.push_back(layer);
    }
}

ColumnDecoder ColumnDecoder::detached() const {
    ColumnDecoder d;
    d.cfg_ = cfg_;
    if (pos_q_.defined()) {
        d.pos_q_ = pos_q_.detach();
        d.pos_k_ = pos_k_.detach();
    }
    for (const auto& l : layers_) {
        d.layers_.push_back({l.wq.detached(), l.wk.detached(), l.wv.detached(), l.wo.detached(),
                             l.norm_attn.detached(), l.norm_mlp.detached(), l.mlp_in.detached(),
                             l.mlp_out.detached()});
    }
    if (fallback_in_.weight.defined()) {
        d.fallback_in_ = fallback_in_.detached();
        d.fallback_out_ = fallback_out_.detached();
    }
    return d;
}

Value ColumnDecoder::collapse(const Value& grid) const { return column_collapse(grid); }

Value ColumnDecoder::with_pos(const Value& seq, const Value& table) const {
    std::vector<int> idx(static_cast<std::size_t>(seq.dim(1)));
    std::iota(idx.begin(), idx.end(), 0);
    return add_trailing(seq, embedding_lookup(table, idx));
}

ColumnDecoder::Qkv ColumnDecoder::build_qkv(const Value& query_grid, const Value& memory_grid) const {
    if (layers_.empty()) throw std::logic_error("build_qkv: decoder has no attention layers");
    const Value qs = collapse(query_grid);
    const Value ms = collapse(memory_grid);
    const auto& l0 = layers_.front();
    return {l0.wq(with_pos(qs, pos_q_)), l0.wk(with_pos(ms, pos_k_)), l0.wv(ms)};
}

Value ColumnDecoder::attend(const DecoderLayer& layer, const Value& q, const Value& k,
                            const Value& v, DecoderTrace* trace) const {
    const int W = q.dim(0);
    const int Lq = q.dim(1);
    const int Lk = k.dim(1);
    const int h = cfg_.heads;
    const int dh = cfg_.channels / h;
    auto split = [&](const Value& x, int L) {
        return reshape(permute(reshape(x, {W, L, h, dh}), {0, 2, 1, 3}), {W * h, L, dh});
    };
    const Value qh = split(q, Lq);
    const Value kh = split(k, Lk);
    const Value vh = split(v, Lk);
    const Value scores = scale(matmul(qh, transpose(kh, 1, 2)), 1.0 / std::sqrt(static_cast<double>(dh)));
    const Value weights = softmax(scores, 2);
    if (trace) trace->attention.push_back(weights);
    const Value mixed = matmul(weights, vh);  // [W*h, Lq, dh]
    const Value merged = reshape(permute(reshape(mixed, {W, h, Lq, dh}), {0, 2, 1, 3}), {W, Lq, cfg_.channels});
    return layer.wo(merged);
}

Value ColumnDecoder::operator()(const Value& query_grid, const Value& memory_grid,
                                DecoderTrace* trace) const {
    const int C = cfg_.channels;
    if (query_grid.rank() != 3 || memory_grid.rank() != 3 || query_grid.dim(0) != C ||
        memory_grid.dim(0) != C || query_grid.dim(2) != memory_grid.dim(2)) {
        shape_fail("column_decoder", query_grid.shape(), memory_grid.shape(),
                   "query and memory must be [C,L,W] with equal C and W");
    }
    if (query_grid.dim(1) != cfg_.query_len || memory_grid.dim(1) != cfg_.key_len) {
        shape_fail("column_decoder", query_grid.shape(), memory_grid.shape(),
                   "sequence lengths differ from the configured " + std::to_string(cfg_.query_len) +
                       "/" + std::to_string(cfg_.key_len));
    }
    const int W = query_grid.dim(2);
    const Value qs = collapse(query_grid);   // [W, Lq, C]
    const Value ms = collapse(memory_grid);  // [W, Lk, C]

    if (layers_.empty()) {
        const Value flat = reshape(ms, {W, cfg_.key_len * C});
        const Value ray = fallback_out_(relu(fallback_in_(flat)));
        return ray_expand(add(qs, reshape(ray, {W, cfg_.query_len, C})));
    }

    const Value keys = with_pos(ms, pos_k_);
    Value x = qs;
    for (const auto& layer : layers_) {
        const Value q = layer.wq(with_pos(x, pos_q_));
        const Value k = layer.wk(keys);
        const Value v = layer.wv(ms);
        const Value e = layer.norm_attn(add(attend(layer, q, k, v, trace), q));
        x = layer.norm_mlp(add(layer.mlp_out(relu(layer.mlp_in(e))), e));
    }
    return ray_expand(x);
}

}  // namespace fbev::model
