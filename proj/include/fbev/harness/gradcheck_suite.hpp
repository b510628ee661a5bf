#pragma once

#include <string>
#include <vector>

namespace fbev::harness {

struct GradSuiteEntry {
    std::string module;
    std::string name;
    double worst = 0.0;  // max relative error over the checked parameters
    bool passed = false;
};

// "ops", "loss", "view_transformer", "fusion".
std::vector<std::string> gradcheck_modules();

// Central-difference checks (step 1e-5) against reverse-mode gradients for
// every differentiable op, the total loss w.r.t. logits, the cycle view
// transform w.r.t. one attention projection per decoder, and the temporal
// aggregation w.r.t. its fusion convolution. Empty module = all.
std::vector<GradSuiteEntry> run_gradcheck_suite(const std::string& module = {}, double tolerance = 1e-4);

}  // namespace fbev::harness
