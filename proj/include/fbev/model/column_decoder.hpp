#pragma once

#include <string>
#include <vector>

#include "fbev/model/params.hpp"

namespace fbev::model {

struct DecoderConfig {
    int layers = 2;
    int heads = 4;
    int channels = 32;   // C_T
    int query_len = 0;   // rows of the query grid (per column)
    int key_len = 0;     // rows of the memory grid (per column)
};

// Attention weights recorded during a forward pass, one [W*heads, Lq, Lk]
// array per layer.
struct DecoderTrace {
    std::vector<Value> attention;
};

struct DecoderLayer {
    Linear wq, wk, wv, wo;
    LayerNormParams norm_attn, norm_mlp;
    Linear mlp_in, mlp_out;
};

// Column-wise transformer decoder. The query grid [C, Lq, W] and the memory
// grid [C, Lk, W] are collapsed per column into sequences; attention never
// mixes columns. With zero layers a per-column two-layer MLP maps the
// flattened memory column onto the query ray instead.
class ColumnDecoder {
  public:
    ColumnDecoder() = default;
    ColumnDecoder(ParameterSet& ps, const std::string& name, const DecoderConfig& cfg);

    const DecoderConfig& config() const { return cfg_; }

    // Returns [C, Lq, W].
    Value operator()(const Value& query_grid, const Value& memory_grid,
                     DecoderTrace* trace = nullptr) const;

    // Same weights with the gradient path cut.
    ColumnDecoder detached() const;

    // Per-column query/key/value sequences of the first layer:
    // Q [W, Lq, C], K and V [W, Lk, C].
    struct Qkv {
        Value q, k, v;
    };
    Qkv build_qkv(const Value& query_grid, const Value& memory_grid) const;

    const std::vector<DecoderLayer>& layers() const { return layers_; }
    const Value& query_pos() const { return pos_q_; }
    const Value& key_pos() const { return pos_k_; }
    const Linear& fallback_in() const { return fallback_in_; }
    const Linear& fallback_out() const { return fallback_out_; }

  private:
    Value collapse(const Value& grid) const;  // [C, L, W] -> [W, L, C]
    Value with_pos(const Value& seq, const Value& table) const;
    Value attend(const DecoderLayer& layer, const Value& q, const Value& k, const Value& v,
                 DecoderTrace* trace) const;

    DecoderConfig cfg_;
    Value pos_q_;  // [Lq, C]
    Value pos_k_;  // [Lk, C]
    std::vector<DecoderLayer> layers_;
    Linear fallback_in_, fallback_out_;
};

// [C, L, W] -> [W, L, C]
Value column_collapse(const Value& grid);
// [W, L, C] -> [C, L, W]
Value ray_expand(const Value& seq);

}  // namespace fbev::model
