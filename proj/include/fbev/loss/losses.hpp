#pragma once

#include <string>
#include <vector>

#include "fbev/diff/value.hpp"

namespace fbev::loss {

using diff::Value;

struct LossWeights {
    double alpha = 0.001;  // uncertain loss
    double beta = 0.01;    // occupancy-agnostic IoU loss
    std::vector<double> class_weights;  // BCE weight per class; empty = all ones

    void validate(int num_classes) const;
};

// 1 - mean_k (sum p*y + 1) / (sum (p + y - p*y) + 1), over every cell.
// p, y: [N_c, Z, X].
Value iou_loss_oa(const Value& p, const Value& y);

struct MaskedLoss {
    Value value;
    bool empty_domain = false;  // no cell selected; value is 0
};

// Mean over visible cells and classes of -w_k [y log p + (1-y) log(1-p)], with
// p clamped to [1e-7, 1 - 1e-7]. visibility: [Z, X] with 1 = visible.
MaskedLoss weighted_bce(const Value& p, const Value& y, const std::vector<double>& visibility,
                        const std::vector<double>& class_weights);

// Mean over occluded cells and classes of the cross-entropy toward 0.5.
MaskedLoss uncert_loss(const Value& p, const std::vector<double>& visibility);

struct LossTerms {
    Value total;
    double bce = 0.0;
    double uncert = 0.0;
    double iou = 0.0;
    bool bce_empty = false;
    bool uncert_empty = false;
};

// bce + alpha * uncert + beta * iou
LossTerms total_loss(const Value& p, const Value& y, const std::vector<double>& visibility,
                     const LossWeights& weights);

// Inverse square-root class frequency over a training split, normalized to
// mean 1. counts[k] = positive cells of class k, total = cells per class.
std::vector<double> inverse_sqrt_frequency_weights(const std::vector<double>& positives, double total);

}  // namespace fbev::loss
