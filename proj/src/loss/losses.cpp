#include "fbev/loss/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "fbev/diff/ops.hpp"

namespace fbev::loss {

using namespace fbev::diff;

namespace {

constexpr double kEps = 1e-7;

void check_map(const std::string& op, const Value& p, const std::vector<double>& visibility) {
    if (p.rank() != 3) throw ShapeError(op + ": expected [N_c,Z,X], got " + shape_str(p.shape()));
    if (visibility.size() != static_cast<std::size_t>(p.dim(1)) * p.dim(2)) {
        shape_fail(op, p.shape(), {static_cast<int>(visibility.size())}, "visibility must be [Z,X]");
    }
}

// Per-element mask repeated over classes, scaled by per-class weights.
Value class_mask(const Value& p, const std::vector<double>& cell_mask, const std::vector<double>& class_weights) {
    const int K = p.dim(0);
    const std::size_t plane = cell_mask.size();
    std::vector<double> m(static_cast<std::size_t>(K) * plane);
    for (int k = 0; k < K; ++k) {
        const double w = class_weights.empty() ? 1.0 : class_weights[static_cast<std::size_t>(k)];
        for (std::size_t i = 0; i < plane; ++i) m[k * plane + i] = w * cell_mask[i];
    }
    return Value::constant(p.shape(), std::move(m));
}

}  // namespace

void LossWeights::validate(int num_classes) const {
    if (alpha < 0.0 || beta < 0.0) throw std::invalid_argument("loss weights alpha and beta must be >= 0");
    if (!class_weights.empty()) {
        if (static_cast<int>(class_weights.size()) != num_classes) {
            throw std::invalid_argument("loss weights: " + std::to_string(class_weights.size()) +
                                        " class weights for " + std::to_string(num_classes) + " classes");
        }
        for (double w : class_weights) {
            if (!(w > 0.0)) throw std::invalid_argument("loss weights: class weights must be > 0");
        }
    }
}

Value iou_loss_oa(const Value& p, const Value& y) {
    if (p.shape() != y.shape()) shape_fail("iou_loss_oa", p.shape(), y.shape());
    if (p.rank() != 3) throw ShapeError("iou_loss_oa: expected [N_c,Z,X], got " + shape_str(p.shape()));
    const int K = p.dim(0);
    const Value py = mul(p, y);
    const Value flat_py = reshape(py, {K, p.dim(1) * p.dim(2)});
    const Value flat_union = reshape(sub(add(p, y), py), {K, p.dim(1) * p.dim(2)});
    const Value inter = add_scalar(sum(flat_py, 1), 1.0);
    const Value uni = add_scalar(sum(flat_union, 1), 1.0);
    return add_scalar(scale(mean_all(div(inter, uni)), -1.0), 1.0);
}

MaskedLoss weighted_bce(const Value& p, const Value& y, const std::vector<double>& visibility,
                        const std::vector<double>& class_weights) {
    if (p.shape() != y.shape()) shape_fail("weighted_bce", p.shape(), y.shape());
    check_map("weighted_bce", p, visibility);
    if (!class_weights.empty() && static_cast<int>(class_weights.size()) != p.dim(0)) {
        shape_fail("weighted_bce", p.shape(), {static_cast<int>(class_weights.size())}, "one weight per class");
    }
    const double count = std::accumulate(visibility.begin(), visibility.end(), 0.0) * p.dim(0);
    if (count == 0.0) return {Value::scalar(0.0), true};
    const Value pc = clamp(p, kEps, 1.0 - kEps);
    const Value ones = Value::full(p.shape(), 1.0);
    const Value ll = add(mul(y, log(pc)), mul(sub(ones, y), log(sub(ones, pc))));
    const Value weighted = mul(ll, class_mask(p, visibility, class_weights));
    return {scale(sum_all(weighted), -1.0 / count), false};
}

MaskedLoss uncert_loss(const Value& p, const std::vector<double>& visibility) {
    check_map("uncert_loss", p, visibility);
    std::vector<double> occluded(visibility.size());
    for (std::size_t i = 0; i < visibility.size(); ++i) occluded[i] = 1.0 - visibility[i];
    const double count = std::accumulate(occluded.begin(), occluded.end(), 0.0) * p.dim(0);
    if (count == 0.0) return {Value::scalar(0.0), true};
    const Value pc = clamp(p, kEps, 1.0 - kEps);
    const Value ones = Value::full(p.shape(), 1.0);
    const Value ll = scale(add(log(pc), log(sub(ones, pc))), 0.5);
    return {scale(sum_all(mul(ll, class_mask(p, occluded, {}))), -1.0 / count), false};
}

LossTerms total_loss(const Value& p, const Value& y, const std::vector<double>& visibility,
                     const LossWeights& weights) {
    weights.validate(p.dim(0));
    const MaskedLoss bce = weighted_bce(p, y, visibility, weights.class_weights);
    const MaskedLoss unc = uncert_loss(p, visibility);
    const Value iou = iou_loss_oa(p, y);
    LossTerms t;
    t.bce = bce.value.item();
    t.uncert = unc.value.item();
    t.iou = iou.item();
    t.bce_empty = bce.empty_domain;
    t.uncert_empty = unc.empty_domain;
    t.total = add(add(bce.value, scale(unc.value, weights.alpha)), scale(iou, weights.beta));
    return t;
}

std::vector<double> inverse_sqrt_frequency_weights(const std::vector<double>& positives, double total) {
    if (positives.empty() || !(total > 0.0)) {
        throw std::invalid_argument("class weights: need at least one class and a positive cell count");
    }
    std::vector<double> w(positives.size());
    for (std::size_t k = 0; k < w.size(); ++k) {
        // A class never seen gets the weight of a single positive cell.
        const double freq = std::max(positives[k], 1.0) / total;
        w[k] = 1.0 / std::sqrt(freq);
    }
    const double mean = std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(w.size());
    for (double& v : w) v /= mean;
    return w;
}

}  // namespace fbev::loss
