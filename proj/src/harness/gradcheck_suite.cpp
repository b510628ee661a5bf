#include "fbev/harness/gradcheck_suite.hpp"

#include <functional>
#include <random>
#include <stdexcept>

#include "fbev/diff/grad_check.hpp"
#include "fbev/diff/ops.hpp"
#include "fbev/loss/losses.hpp"
#include "fbev/model/view_transformer.hpp"
#include "fbev/temporal/fusion.hpp"

namespace fbev::harness {

namespace {

using diff::NamedParam;
using diff::Value;

std::vector<double> uniform(std::size_t n, std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(n);
    for (double& x : v) x = u(rng);
    return v;
}

Value param(diff::Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    const std::size_t n = diff::numel(s);
    return Value::parameter(std::move(s), uniform(n, rng, lo, hi));
}

Value constant(diff::Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    const std::size_t n = diff::numel(s);
    return Value::constant(std::move(s), uniform(n, rng, lo, hi));
}

// Random projection to a scalar, rebuilt from a fixed seed on every call.
std::function<Value()> projected(std::function<Value()> build) {
    return [build] {
        Value y = build();
        std::mt19937_64 rng(99);
        return diff::sum_all(diff::mul(y, constant(y.shape(), rng)));
    };
}

struct Suite {
    double tolerance;
    std::vector<GradSuiteEntry> out;

    void check(const std::string& module, const std::string& name, const std::function<Value()>& f,
               std::vector<NamedParam> params, std::size_t max_entries = 0) {
        const auto r = diff::grad_check(f, std::move(params), {1e-5, tolerance, max_entries});
        out.push_back({module, name, r.worst(), r.passed});
    }
};

void ops(Suite& s) {
    using namespace diff;
    std::mt19937_64 rng(2024);
    Value a = param({2, 3, 4}, rng), b = param({2, 3, 4}, rng);
    Value w = param({4, 5}, rng), bw = param({2, 4, 3}, rng);
    Value pos = param({2, 3, 4}, rng, 0.5, 2.0);
    Value vec = param({4}, rng), gamma = param({3}, rng), beta = param({3}, rng);
    const std::string m = "ops";
    s.check(m, "matmul", projected([=] { return matmul(a, w); }), {{"a", a}, {"w", w}});
    s.check(m, "matmul_batched", projected([=] { return matmul(a, bw); }), {{"a", a}, {"b", bw}});
    s.check(m, "add", projected([=] { return add(a, b); }), {{"a", a}, {"b", b}});
    s.check(m, "sub", projected([=] { return sub(a, b); }), {{"a", a}, {"b", b}});
    s.check(m, "mul", projected([=] { return mul(a, b); }), {{"a", a}, {"b", b}});
    s.check(m, "div", projected([=] { return div(a, pos); }), {{"a", a}, {"b", pos}});
    s.check(m, "scale", projected([=] { return scale(a, -1.7); }), {{"a", a}});
    s.check(m, "add_scalar", projected([=] { return add_scalar(a, 0.3); }), {{"a", a}});
    s.check(m, "add_trailing", projected([=] { return add_trailing(a, vec); }), {{"a", a}, {"y", vec}});
    s.check(m, "relu", projected([=] { return relu(a); }), {{"a", a}});
    s.check(m, "sigmoid", projected([=] { return sigmoid(a); }), {{"a", a}});
    s.check(m, "log", projected([=] { return log(pos); }), {{"a", pos}});
    s.check(m, "clamp", projected([=] { return clamp(a, -0.5, 0.5); }), {{"a", a}});
    for (int axis = 0; axis < 3; ++axis) {
        const std::string ax = "_axis" + std::to_string(axis);
        s.check(m, "softmax" + ax, projected([=] { return softmax(a, axis); }), {{"a", a}});
        s.check(m, "layer_norm" + ax, projected([=] { return layer_norm(a, axis); }), {{"a", a}});
        s.check(m, "sum" + ax, projected([=] { return sum(a, axis); }), {{"a", a}});
        s.check(m, "mean" + ax, projected([=] { return mean(a, axis); }), {{"a", a}});
        s.check(m, "concat" + ax, projected([=] { return concat({a, b, a}, axis); }), {{"a", a}, {"b", b}});
        s.check(m, "slice" + ax, projected([=] { return slice(a, axis, 1, a.dim(axis)); }), {{"a", a}});
    }
    s.check(m, "layer_norm_affine", projected([=] { return layer_norm(a, 1, gamma, beta); }),
            {{"a", a}, {"gamma", gamma}, {"beta", beta}});
    s.check(m, "reshape", projected([=] { return reshape(a, {6, 4}); }), {{"a", a}});
    s.check(m, "permute", projected([=] { return permute(a, {2, 0, 1}); }), {{"a", a}});
    s.check(m, "transpose", projected([=] { return transpose(a, 0, 2); }), {{"a", a}});
    s.check(m, "sum_all", projected([=] { return sum_all(a); }), {{"a", a}});
    s.check(m, "mean_all", projected([=] { return mean_all(a); }), {{"a", a}});

    Value img = param({3, 7, 6}, rng);
    Value w1 = param({5, 3}, rng), b1 = param({5}, rng);
    Value wk = param({4, 3, 3, 3}, rng), bk = param({4}, rng);
    s.check(m, "conv1x1", projected([=] { return conv1x1(img, w1, b1); }), {{"x", img}, {"w", w1}, {"b", b1}});
    s.check(m, "conv2d_stride2", projected([=] { return conv2d(img, wk, bk, 2, 1); }),
            {{"x", img}, {"w", wk}, {"b", bk}});
    s.check(m, "conv2d_stride1", projected([=] { return conv2d(img, wk, bk, 1, 1); }),
            {{"x", img}, {"w", wk}, {"b", bk}});
    std::vector<SamplePoint> pts;
    std::uniform_real_distribution<double> u(-1.5, 7.5);
    for (int i = 0; i < 12; ++i) pts.push_back({u(rng), u(rng)});
    s.check(m, "bilinear_sample", projected([=] { return bilinear_sample(img, pts, 3, 4); }), {{"grid", img}});
    Value table = param({6, 4}, rng);
    const std::vector<int> idx{0, 3, 3, 5};
    s.check(m, "embedding_lookup", projected([=] { return embedding_lookup(table, idx); }), {{"table", table}});
}

void losses(Suite& s) {
    std::mt19937_64 rng(7);
    const int nc = 4, Z = 6, X = 5;
    Value logits = param({nc, Z, X}, rng, -3.0, 3.0);
    std::vector<double> y(static_cast<std::size_t>(nc) * Z * X), vis(static_cast<std::size_t>(Z) * X);
    std::bernoulli_distribution coin(0.4);
    for (double& v : y) v = coin(rng) ? 1.0 : 0.0;
    for (double& v : vis) v = coin(rng) ? 0.0 : 1.0;
    const Value gt = Value::constant({nc, Z, X}, y);
    loss::LossWeights weights;
    weights.class_weights = {0.5, 1.5, 1.0, 2.0};
    s.check("loss", "total_loss_wrt_logits",
            [=] { return loss::total_loss(diff::sigmoid(logits), gt, vis, weights).total; }, {{"logits", logits}});
    s.check("loss", "iou_loss_oa",
            [=] { return loss::iou_loss_oa(diff::sigmoid(logits), gt); }, {{"logits", logits}});
}

void view_transformer(Suite& s) {
    // Desk geometry at reduced width: fewer ReLU units keep the finite
    // differences away from kinks.
    model::ParameterSet ps(42);
    model::ViewTransformerConfig cfg;
    cfg.channels = 8;
    cfg.heads = 2;
    model::ViewTransformer vt(ps, cfg);
    std::mt19937_64 rng(31);
    model::FeaturePyramid pyr;
    for (int i = 1; i <= cfg.levels; ++i) {
        const int h = cfg.camera.image_h >> (i + 2), w = cfg.camera.image_w >> (i + 2);
        pyr.levels.push_back(constant({cfg.channels, h, w}, rng));
    }
    std::vector<NamedParam> params;
    for (int i = 1; i <= cfg.levels; ++i) {
        const std::string p = "vt.level" + std::to_string(i);
        params.push_back({p + ".pv_to_bev.layer0.wk.w", ps.get(p + ".pv_to_bev.layer0.wk.w")});
        params.push_back({p + ".bev_to_pv.layer1.wq.w", ps.get(p + ".bev_to_pv.layer1.wq.w")});
    }
    s.check("view_transformer", "cycle_view_transform_attention",
            projected([&vt, pyr] { return vt.cycle_view_transform(pyr); }), params, 24);
}

void fusion(Suite& s) {
    std::mt19937_64 rng(5);
    const int C = 6, Z = 5, X = 4, H = 2;
    std::vector<Value> aligned;
    for (int i = 0; i < H; ++i) aligned.push_back(constant({C, Z, X}, rng));
    const Value ref = constant({C, Z, X}, rng);
    Value w = param({C, (H + 1) * C}, rng), b = param({C}, rng);
    s.check("fusion", "aggregate_wrt_phi", projected([=] { return temporal::aggregate(aligned, ref, w, b); }),
            {{"phi.w", w}, {"phi.b", b}});
}

}  // namespace

std::vector<std::string> gradcheck_modules() { return {"ops", "loss", "view_transformer", "fusion"}; }

std::vector<GradSuiteEntry> run_gradcheck_suite(const std::string& module, double tolerance) {
    Suite s{tolerance, {}};
    bool matched = false;
    auto want = [&](const char* name) {
        const bool yes = module.empty() || module == name;
        matched = matched || yes;
        return yes;
    };
    if (want("ops")) ops(s);
    if (want("loss")) losses(s);
    if (want("view_transformer")) view_transformer(s);
    if (want("fusion")) fusion(s);
    if (!matched) throw std::invalid_argument("unknown gradcheck module '" + module + "'");
    return s.out;
}

}  // namespace fbev::harness
