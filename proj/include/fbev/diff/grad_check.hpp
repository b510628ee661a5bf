#pragma once

#include <functional>
#include <string>
#include <vector>

#include "fbev/diff/value.hpp"

namespace fbev::diff {

struct NamedParam {
    std::string name;
    Value value;
};

struct ParamCheck {
    std::string name;
    // max_i |analytic_i - numeric_i| / max(max_i |analytic_i|, max_i |numeric_i|)
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    double grad_scale = 0.0;
    std::size_t checked = 0;
    std::size_t kinks = 0;  // entries whose stencil straddles a kink
};

struct GradCheckReport {
    std::vector<ParamCheck> params;
    double tolerance = 0.0;
    bool passed = false;

    double worst() const;
};

struct GradCheckOptions {
    double step = 1e-5;
    double tolerance = 1e-5;
    // Check at most this many entries per parameter (evenly strided); 0 = all.
    std::size_t max_entries = 0;
    // Entries straddling a kink may make up at most this share of a parameter.
    double max_kink_fraction = 0.1;
};

class NonFiniteError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Compares the reverse-mode gradient of the scalar `f` with central
// differences for every listed parameter. The relative error is measured
// against the parameter's largest gradient magnitude so that tiny entries
// do not amplify rounding noise; a constant function yields zero error.
// Where the one-sided slopes jump (a ReLU or clamp kink within one step) the
// analytic value must lie between them; such entries are counted as kinks.
// Throws NonFiniteError naming the parameter and entry when f is not finite.
GradCheckReport grad_check(const std::function<Value()>& f, std::vector<NamedParam> params,
                           const GradCheckOptions& options = {});

}  // namespace fbev::diff
