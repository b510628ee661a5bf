#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fbev/diff/grad_check.hpp"
#include "fbev/diff/ops.hpp"
#include "fbev/model/column_decoder.hpp"
#include "fbev/model/view_transformer.hpp"
#include "test_util.hpp"

using namespace fbev::model;
using fbev::diff::Value;

namespace {

double at3(const Value& v, int c, int r, int w) {
    return v.at((static_cast<std::size_t>(c) * v.dim(1) + r) * v.dim(2) + w);
}

// Columns (last axis) where a and b differ.
std::vector<int> changed_columns(const Value& a, const Value& b) {
    std::vector<int> cols;
    for (int w = 0; w < a.dim(2); ++w) {
        bool diff = false;
        for (int c = 0; c < a.dim(0) && !diff; ++c) {
            for (int r = 0; r < a.dim(1) && !diff; ++r) diff = at3(a, c, r, w) != at3(b, c, r, w);
        }
        if (diff) cols.push_back(w);
    }
    return cols;
}

Value with_column_scaled(const Value& v, int w, double s) {
    std::vector<double> d = v.data();
    for (int c = 0; c < v.dim(0); ++c) {
        for (int r = 0; r < v.dim(1); ++r) d[(static_cast<std::size_t>(c) * v.dim(1) + r) * v.dim(2) + w] *= s;
    }
    return Value::constant(v.shape(), std::move(d));
}

ViewTransformerConfig desk_config() { return {}; }

// Fixed random projection to a scalar. A plain sum is constant at
// initialization because every decoder ends in a zero-mean layer norm.
Value probe(const Value& x, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return fbev::diff::sum_all(fbev::diff::mul(x, fbev::testing::random_const(x.shape(), rng)));
}

std::size_t decoder_count(int layers, int C, int Lq, int Lk) {
    if (layers == 0) return (static_cast<std::size_t>(Lk) * C * 2 * C + 2 * C) + (2 * C * Lq * C + Lq * C);
    const std::size_t per_layer = 4 * (C * C + C) + 2 * (2 * C) + (C * 2 * C + 2 * C) + (2 * C * C + C);
    return static_cast<std::size_t>(Lq + Lk) * C + layers * per_layer;
}

}  // namespace

TEST(ConvPyramid, DeskShapes) {
    ParameterSet ps(1);
    ConvPyramid pyr(ps, 3, 32, {16, 24, 32});
    std::mt19937_64 rng(1);
    const auto f = pyr(fbev::testing::random_const({3, 128, 128}, rng, 0.0, 1.0));
    ASSERT_EQ(f.levels.size(), 3u);
    EXPECT_EQ(f.levels[0].shape(), (fbev::diff::Shape{32, 16, 16}));
    EXPECT_EQ(f.levels[1].shape(), (fbev::diff::Shape{32, 8, 8}));
    EXPECT_EQ(f.levels[2].shape(), (fbev::diff::Shape{32, 4, 4}));
}

TEST(ConvPyramid, ZeroImageIsFinite) {
    ParameterSet ps(2);
    ConvPyramid pyr(ps, 3, 8, {4, 4, 8});
    for (const auto& l : pyr(Value::zeros({3, 64, 64})).levels) {
        for (double v : l.data()) EXPECT_TRUE(std::isfinite(v));
    }
}

TEST(ConvPyramid, RejectsIndivisibleImage) {
    ParameterSet ps(3);
    ConvPyramid pyr(ps, 3, 8, {4, 4, 8});
    EXPECT_THROW(pyr(Value::zeros({3, 64, 72})), fbev::diff::ShapeError);
}

TEST(ConvPyramid, GradCheckFirstConv) {
    ParameterSet ps(4);
    ConvPyramid pyr(ps, 1, 4, {3, 4, 4});
    std::mt19937_64 rng(4);
    const Value image = fbev::testing::random_const({3, 16, 16}, rng, 0.0, 1.0);
    auto f = [&] { return fbev::diff::sum_all(pyr(image).levels[0]); };
    const auto report =
        fbev::diff::grad_check(f, {{"stem0.w", pyr.first_conv().weight}}, {1e-5, 1e-4, 0});
    EXPECT_TRUE(report.passed) << report.worst();
}

TEST(ColumnDecoder, QkvShapes) {
    ParameterSet ps(5);
    ColumnDecoder dec(ps, "d", {2, 4, 32, 6, 16});
    std::mt19937_64 rng(5);
    const auto qkv = dec.build_qkv(fbev::testing::random_const({32, 6, 8}, rng),
                                   fbev::testing::random_const({32, 16, 8}, rng));
    EXPECT_EQ(qkv.q.shape(), (fbev::diff::Shape{8, 6, 32}));
    EXPECT_EQ(qkv.k.shape(), (fbev::diff::Shape{8, 16, 32}));
    EXPECT_EQ(qkv.v.shape(), (fbev::diff::Shape{8, 16, 32}));
}

TEST(ColumnDecoder, IdentityProjectionKeepsEmbedding) {
    ParameterSet ps(6);
    ColumnDecoder dec(ps, "d", {1, 2, 4, 3, 5});
    auto& wq = const_cast<Value&>(dec.layers()[0].wq.weight);
    std::fill(wq.mutable_data().begin(), wq.mutable_data().end(), 0.0);
    for (int i = 0; i < 4; ++i) wq.mutable_data()[i * 4 + i] = 1.0;
    auto& pq = const_cast<Value&>(dec.query_pos());
    std::fill(pq.mutable_data().begin(), pq.mutable_data().end(), 0.0);
    std::mt19937_64 rng(6);
    const Value e = fbev::testing::random_const({4, 3, 7}, rng);
    const auto qkv = dec.build_qkv(e, fbev::testing::random_const({4, 5, 7}, rng));
    for (int w = 0; w < 7; ++w) {
        for (int z = 0; z < 3; ++z) {
            for (int c = 0; c < 4; ++c) EXPECT_EQ(qkv.q.at((w * 3 + z) * 4 + c), at3(e, c, z, w));
        }
    }
}

TEST(ColumnDecoder, ColumnPermutationPermutesKeysAndValues) {
    ParameterSet ps(7);
    ColumnDecoder dec(ps, "d", {2, 4, 8, 3, 5});
    std::mt19937_64 rng(7);
    const Value e = fbev::testing::random_const({8, 3, 6}, rng);
    const Value f = fbev::testing::random_const({8, 5, 6}, rng);
    std::vector<double> swapped = f.data();
    for (int c = 0; c < 8; ++c) {
        for (int r = 0; r < 5; ++r) std::swap(swapped[(c * 5 + r) * 6 + 1], swapped[(c * 5 + r) * 6 + 4]);
    }
    const auto a = dec.build_qkv(e, f);
    const auto b = dec.build_qkv(e, Value::constant(f.shape(), swapped));
    const std::size_t col = 5 * 8;
    const int perm[6] = {0, 4, 2, 3, 1, 5};
    for (int w = 0; w < 6; ++w) {
        for (std::size_t i = 0; i < col; ++i) {
            EXPECT_EQ(b.k.at(w * col + i), a.k.at(perm[w] * col + i));
            EXPECT_EQ(b.v.at(w * col + i), a.v.at(perm[w] * col + i));
        }
    }
}

TEST(ColumnDecoder, WidthMismatchFails) {
    ParameterSet ps(8);
    ColumnDecoder dec(ps, "d", {1, 2, 4, 3, 5});
    EXPECT_THROW(dec(Value::zeros({4, 3, 6}), Value::zeros({4, 5, 7})), fbev::diff::ShapeError);
    EXPECT_THROW(dec(Value::zeros({4, 3, 6}), Value::zeros({4, 4, 6})), fbev::diff::ShapeError);
}

TEST(ColumnDecoder, ColumnAblationLocality) {
    for (int layers : {0, 1, 2}) {
        ParameterSet ps(9);
        ColumnDecoder dec(ps, "d", {layers, 2, 8, 4, 6});
        std::mt19937_64 rng(9);
        const Value e = fbev::testing::random_const({8, 4, 9}, rng);
        const Value f = fbev::testing::random_const({8, 6, 9}, rng);
        const Value base = dec(e, f);
        for (int w = 0; w < 9; ++w) {
            EXPECT_EQ(changed_columns(base, dec(e, with_column_scaled(f, w, 0.0))), std::vector<int>{w})
                << "layers " << layers << " column " << w;
        }
    }
}

TEST(ColumnDecoder, AttentionRowsAreDistributions) {
    ParameterSet ps(10);
    ColumnDecoder dec(ps, "d", {2, 4, 8, 3, 7});
    std::mt19937_64 rng(10);
    DecoderTrace trace;
    dec(fbev::testing::random_const({8, 3, 5}, rng, -3, 3), fbev::testing::random_const({8, 7, 5}, rng, -3, 3),
        &trace);
    ASSERT_EQ(trace.attention.size(), 2u);
    for (const auto& a : trace.attention) {
        ASSERT_EQ(a.shape(), (fbev::diff::Shape{5 * 4, 3, 7}));
        for (std::size_t row = 0; row < a.size() / 7; ++row) {
            double s = 0.0;
            for (int k = 0; k < 7; ++k) {
                EXPECT_GE(a.at(row * 7 + k), 0.0);
                s += a.at(row * 7 + k);
            }
            EXPECT_NEAR(s, 1.0, 1e-12);
        }
    }
}

TEST(ColumnDecoder, ZeroLayerFallbackMatchesHandWrittenMap) {
    const int C = 3, Lq = 2, Lk = 4, W = 5;
    ParameterSet ps(11);
    ColumnDecoder dec(ps, "d", {0, 1, C, Lq, Lk});
    std::mt19937_64 rng(11);
    auto& b1 = const_cast<Value&>(dec.fallback_in().bias);
    auto& b2 = const_cast<Value&>(dec.fallback_out().bias);
    b1.mutable_data() = fbev::testing::random_vector(b1.size(), rng);
    b2.mutable_data() = fbev::testing::random_vector(b2.size(), rng);
    const Value e = fbev::testing::random_const({C, Lq, W}, rng);
    const Value f = fbev::testing::random_const({C, Lk, W}, rng);
    const Value out = dec(e, f);
    const auto& w1 = dec.fallback_in().weight.data();
    const auto& w2 = dec.fallback_out().weight.data();
    const int hidden = 2 * C;
    for (int w = 0; w < W; ++w) {
        std::vector<double> x(Lk * C);
        for (int l = 0; l < Lk; ++l) {
            for (int c = 0; c < C; ++c) x[l * C + c] = at3(f, c, l, w);
        }
        std::vector<double> h(hidden);
        for (int j = 0; j < hidden; ++j) {
            double s = b1.at(j);
            for (int i = 0; i < Lk * C; ++i) s += x[i] * w1[i * hidden + j];
            h[j] = std::max(0.0, s);
        }
        for (int l = 0; l < Lq; ++l) {
            for (int c = 0; c < C; ++c) {
                const int o = l * C + c;
                double s = b2.at(o);
                for (int j = 0; j < hidden; ++j) s += h[j] * w2[j * Lq * C + o];
                EXPECT_NEAR(at3(out, c, l, w), at3(e, c, l, w) + s, 1e-12);
            }
        }
    }
}

TEST(ColumnDecoder, DeterministicAcrossCalls) {
    ParameterSet ps(12);
    ColumnDecoder dec(ps, "d", {2, 4, 8, 3, 5});
    std::mt19937_64 rng(12);
    const Value e = fbev::testing::random_const({8, 3, 4}, rng);
    const Value f = fbev::testing::random_const({8, 5, 4}, rng);
    EXPECT_EQ(dec(e, f).data(), dec(e, f).data());
}

class DeskTransformer : public ::testing::Test {
  protected:
    DeskTransformer() : ps(42), vt(ps, desk_config()) {}

    Value features(int level, std::uint64_t seed) const {
        std::mt19937_64 rng(seed);
        const auto& m = vt.level(level);
        return fbev::testing::random_const({32, m.feat_h, m.feat_w}, rng);
    }

    ParameterSet ps;
    ViewTransformer vt;
};

TEST_F(DeskTransformer, LevelShapes) {
    const int rows[3] = {18, 4, 2};
    for (int i = 1; i <= 3; ++i) {
        const auto& m = vt.level(i);
        EXPECT_EQ(m.spec.rows(), rows[i - 1]);
        EXPECT_EQ(m.feat_w, 128 >> (i + 2));
        const Value f = features(i, i);
        const Value p = vt.pv_to_bev_initial(i, f);
        EXPECT_EQ(p.shape(), (fbev::diff::Shape{32, rows[i - 1], m.feat_w}));
        EXPECT_EQ(vt.bev_to_pv(i, p).shape(), f.shape());
        EXPECT_EQ(vt.cycle_calibrate(i, f).calibrated.shape(), p.shape());
    }
}

TEST_F(DeskTransformer, BevToPvLocality) {
    const Value p = vt.pv_to_bev_initial(2, features(2, 3));
    const Value base = vt.bev_to_pv(2, p);
    for (int w = 0; w < p.dim(2); ++w) {
        EXPECT_EQ(changed_columns(base, vt.bev_to_pv(2, with_column_scaled(p, w, 0.0))), std::vector<int>{w});
    }
    DecoderTrace trace;
    vt.bev_to_pv(2, p, &trace);
    const std::size_t keys = static_cast<std::size_t>(p.dim(1));
    for (const auto& a : trace.attention) {
        for (std::size_t row = 0; row < a.size() / keys; ++row) {
            double total = 0.0;
            for (std::size_t k = 0; k < keys; ++k) total += a.at(row * keys + k);
            EXPECT_NEAR(total, 1.0, 1e-12);
        }
    }
}

TEST_F(DeskTransformer, CycleColumnLocalityExhaustive) {
    for (int i = 1; i <= 3; ++i) {
        const Value f = features(i, 10 + i);
        const Value base = vt.cycle_calibrate(i, f).calibrated;
        for (int w = 0; w < f.dim(2); ++w) {
            EXPECT_EQ(changed_columns(base, vt.cycle_calibrate(i, with_column_scaled(f, w, -2.0)).calibrated),
                      std::vector<int>{w})
                << "level " << i << " column " << w;
        }
    }
}

TEST_F(DeskTransformer, ResidualIdentity) {
    CycleOptions opts;
    opts.zero_second_pass = true;
    const auto r = vt.cycle_calibrate(1, features(1, 5), opts);
    EXPECT_EQ(r.calibrated.data(), r.initial.data());
}

TEST_F(DeskTransformer, CalibrationIndependentOfFeaturesWithoutPvPath) {
    CycleOptions opts;
    opts.zero_calibrated_pv = true;
    const auto a = vt.cycle_calibrate(2, features(2, 6), opts);
    const auto b = vt.cycle_calibrate(2, features(2, 7), opts);
    const Value da = fbev::diff::sub(a.calibrated, a.initial);
    const Value db = fbev::diff::sub(b.calibrated, b.initial);
    for (std::size_t k = 0; k < da.size(); ++k) EXPECT_NEAR(da.at(k), db.at(k), 1e-12);
}

TEST_F(DeskTransformer, WeightSharingByIdentity) {
    for (int i = 1; i <= 3; ++i) {
        const auto& m = vt.level(i);
        // Both passes call the same decoder object; the embeddings differ.
        EXPECT_NE(m.emb_bev.node(), m.emb_bev_calib.node());
        EXPECT_NE(m.pv_to_bev.layers()[0].wq.weight.node(), m.bev_to_pv.layers()[0].wq.weight.node());
        const std::string p = "vt.level" + std::to_string(i) + ".pv_to_bev.layer0.wq.w";
        EXPECT_EQ(ps.get(p).node(), m.pv_to_bev.layers()[0].wq.weight.node());
    }
}

TEST_F(DeskTransformer, BothPassesContributeToSharedGradient) {
    const Value f = features(2, 8);
    const Value& w = vt.level(2).pv_to_bev.layers()[1].wv.weight;
    auto grad_with = [&](CycleOptions opts) {
        ps.zero_grad();
        probe(vt.cycle_calibrate(2, f, opts).calibrated, 99).backward();
        return w.grad();
    };
    const auto both = grad_with({});
    CycleOptions first;
    first.detach_first_pass = true;
    CycleOptions second;
    second.detach_second_pass = true;
    const auto only_second = grad_with(first);
    const auto only_first = grad_with(second);
    double d1 = 0.0, d2 = 0.0, dsum = 0.0;
    for (std::size_t k = 0; k < both.size(); ++k) {
        d1 = std::max(d1, std::abs(both[k] - only_second[k]));
        d2 = std::max(d2, std::abs(both[k] - only_first[k]));
        dsum = std::max(dsum, std::abs(both[k] - only_first[k] - only_second[k]));
    }
    EXPECT_GT(d1, 1e-8);
    EXPECT_GT(d2, 1e-8);
    EXPECT_LT(dsum, 1e-10);
}

TEST_F(DeskTransformer, FullTransformShapeAndDeterminism) {
    FeaturePyramid pyr;
    for (int i = 1; i <= 3; ++i) pyr.levels.push_back(features(i, 20 + i));
    const Value b = vt.cycle_view_transform(pyr);
    EXPECT_EQ(b.shape(), (fbev::diff::Shape{32, 24, 20}));
    ParameterSet ps2(42);
    ViewTransformer vt2(ps2, desk_config());
    EXPECT_EQ(vt2.cycle_view_transform(pyr).data(), b.data());
}

TEST_F(DeskTransformer, EndToEndGradCheckOnAttentionWeights) {
    FeaturePyramid pyr;
    for (int i = 1; i <= 3; ++i) pyr.levels.push_back(features(i, 20 + i));
    auto f = [&] { return probe(vt.cycle_view_transform(pyr), 98); };
    std::vector<fbev::diff::NamedParam> params;
    for (int i = 1; i <= 3; ++i) {
        const std::string p = "vt.level" + std::to_string(i);
        params.push_back({p + ".pv_to_bev.layer0.wk.w", ps.get(p + ".pv_to_bev.layer0.wk.w")});
        params.push_back({p + ".bev_to_pv.layer1.wq.w", ps.get(p + ".bev_to_pv.layer1.wq.w")});
    }
    const auto report = fbev::diff::grad_check(f, params, {1e-5, 1e-4, 24});
    for (const auto& p : report.params) EXPECT_LT(p.max_rel_error, 1e-4) << p.name << " scale " << p.grad_scale << " abs " << p.max_abs_error;
    EXPECT_TRUE(report.passed) << report.worst();
}

TEST_F(DeskTransformer, ParameterCountMatchesFormula) {
    const int C = 32;
    const int rows[3] = {18, 4, 2};
    std::size_t expect = 0;
    for (int i = 1; i <= 3; ++i) {
        const int H = 128 >> (i + 2), W = H, Z = rows[i - 1];
        expect += 2 * static_cast<std::size_t>(C) * Z * W + static_cast<std::size_t>(C) * H * W;
        expect += decoder_count(2, C, Z, H) + decoder_count(2, C, H, Z);
    }
    EXPECT_EQ(ps.scalar_count(), expect);
}

TEST(ViewTransformer, ZeroLayerConfigurationBuilds) {
    ParameterSet ps(13);
    ViewTransformerConfig cfg;
    cfg.decoder_layers = 0;
    cfg.channels = 8;
    ViewTransformer vt(ps, cfg);
    std::size_t expect = 0;
    const int rows[3] = {18, 4, 2};
    for (int i = 1; i <= 3; ++i) {
        const int H = 128 >> (i + 2), W = H, Z = rows[i - 1];
        expect += 2 * static_cast<std::size_t>(8) * Z * W + 8 * H * W;
        expect += decoder_count(0, 8, Z, H) + decoder_count(0, 8, H, Z);
    }
    EXPECT_EQ(ps.scalar_count(), expect);
    FeaturePyramid pyr;
    std::mt19937_64 rng(13);
    for (int i = 1; i <= 3; ++i) {
        const int H = 128 >> (i + 2);
        pyr.levels.push_back(fbev::testing::random_const({8, H, H}, rng));
    }
    EXPECT_EQ(vt.cycle_view_transform(pyr).shape(), (fbev::diff::Shape{8, 24, 20}));
}
