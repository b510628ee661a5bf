#include "fbev/harness/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace fbev::harness {

double scheduled_lr(const OptimConfig& cfg, int step) {
    if (step < 1) throw std::invalid_argument("scheduled_lr: steps are 1-based");
    if (step <= cfg.warmup_steps) return cfg.lr * static_cast<double>(step) / cfg.warmup_steps;
    if (step >= cfg.steps) return 0.0;
    return cfg.lr * static_cast<double>(cfg.steps - step) / (cfg.steps - cfg.warmup_steps);
}

AdamW::AdamW(const OptimConfig& cfg, const model::ParameterSet& ps) : cfg_(cfg) {
    for (const auto& p : ps.items()) {
        m_.emplace_back(p.value.size(), 0.0);
        v_.emplace_back(p.value.size(), 0.0);
    }
}

double AdamW::step(model::ParameterSet& ps, double lr) {
    auto& items = ps.items();
    if (items.size() != m_.size()) throw std::logic_error("AdamW: parameter set changed since construction");
    double sq = 0.0;
    for (const auto& p : items)
        for (double g : p.value.grad_ref()) sq += g * g;
    const double norm = std::sqrt(sq);
    const double clip = (cfg_.grad_clip > 0.0 && norm > cfg_.grad_clip) ? cfg_.grad_clip / norm : 1.0;

    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (std::size_t i = 0; i < items.size(); ++i) {
        diff::Value& p = items[i].value;
        const auto& g = p.grad_ref();
        auto& w = p.mutable_data();
        auto& m = m_[i];
        auto& v = v_[i];
        const double decay = p.rank() >= 2 ? cfg_.weight_decay : 0.0;
        for (std::size_t j = 0; j < w.size(); ++j) {
            const double gj = g.empty() ? 0.0 : g[j] * clip;
            m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * gj;
            v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * gj * gj;
            const double update = (m[j] / bc1) / (std::sqrt(v[j] / bc2) + cfg_.eps) + decay * w[j];
            w[j] -= lr * update;
        }
    }
    return norm;
}

}  // namespace fbev::harness
