#pragma once

#include <vector>

#include "fbev/harness/config.hpp"
#include "fbev/model/params.hpp"

namespace fbev::harness {

// Linear warm-up to `base` over `warmup` steps, then linear decay to 0 at
// `total`. Steps are 1-based.
double scheduled_lr(const OptimConfig& cfg, int step);

// Adam moments with decoupled weight decay on parameters of rank >= 2.
class AdamW {
  public:
    AdamW() = default;
    AdamW(const OptimConfig& cfg, const model::ParameterSet& ps);

    // Applies one update with learning rate `lr` using the accumulated
    // gradients. Returns the global gradient norm before clipping.
    double step(model::ParameterSet& ps, double lr);

    int steps_taken() const { return t_; }
    void set_steps_taken(int t) { t_ = t; }
    std::vector<std::vector<double>>& first_moments() { return m_; }
    std::vector<std::vector<double>>& second_moments() { return v_; }
    const std::vector<std::vector<double>>& first_moments() const { return m_; }
    const std::vector<std::vector<double>>& second_moments() const { return v_; }

  private:
    OptimConfig cfg_;
    int t_ = 0;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
};

}  // namespace fbev::harness
