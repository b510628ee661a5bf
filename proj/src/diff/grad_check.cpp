#include "fbev/diff/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fbev::diff {

double GradCheckReport::worst() const {
    double w = 0.0;
    for (const auto& p : params) w = std::max(w, p.max_rel_error);
    return w;
}

namespace {

double eval_scalar(const std::function<Value()>& f, const std::string& where) {
    NoGradGuard guard;
    const double v = f().item();
    if (!std::isfinite(v)) {
        throw NonFiniteError("grad_check: non-finite value " + std::to_string(v) + " at " + where);
    }
    return v;
}

}  // namespace

GradCheckReport grad_check(const std::function<Value()>& f, std::vector<NamedParam> params,
                           const GradCheckOptions& options) {
    GradCheckReport report;
    report.tolerance = options.tolerance;

    for (auto& p : params) p.value.zero_grad();
    Value y = f();
    if (!std::isfinite(y.item())) {
        throw NonFiniteError("grad_check: non-finite value at the unperturbed point");
    }
    y.backward();

    const double f0 = eval_scalar(f, "the unperturbed point");
    for (auto& p : params) {
        ParamCheck pc;
        pc.name = p.name;
        const std::vector<double> analytic = p.value.grad();
        auto& data = p.value.mutable_data();
        const std::size_t n = data.size();
        const std::size_t stride =
            options.max_entries == 0 || n <= options.max_entries ? 1 : n / options.max_entries;

        struct Entry {
            double analytic, central, forward, backward;
        };
        std::vector<Entry> entries;
        double scale = 0.0;
        for (std::size_t i = 0; i < n; i += stride) {
            const double saved = data[i];
            data[i] = saved + options.step;
            const double fp = eval_scalar(f, p.name + "[" + std::to_string(i) + "] + step");
            data[i] = saved - options.step;
            const double fm = eval_scalar(f, p.name + "[" + std::to_string(i) + "] - step");
            data[i] = saved;
            const Entry e{analytic[i], (fp - fm) / (2.0 * options.step), (fp - f0) / options.step,
                          (f0 - fm) / options.step};
            scale = std::max({scale, std::abs(e.central), std::abs(e.analytic)});
            entries.push_back(e);
            ++pc.checked;
        }
        double worst_diff = 0.0;
        const double allowed = options.tolerance * scale;
        for (const auto& e : entries) {
            double diff = std::abs(e.central - e.analytic);
            // A kink of a piecewise-smooth f inside [x - step, x + step] shows
            // as a jump between the one-sided slopes. There the difference
            // quotients only bound the derivative, so the analytic value must
            // lie between them (within tolerance).
            if (diff >= allowed && std::abs(e.forward - e.backward) > 2.0 * allowed) {
                const double lo = std::min(e.forward, e.backward), hi = std::max(e.forward, e.backward);
                diff = e.analytic < lo ? lo - e.analytic : (e.analytic > hi ? e.analytic - hi : 0.0);
                ++pc.kinks;
            }
            worst_diff = std::max(worst_diff, diff);
        }
        pc.max_abs_error = worst_diff;
        pc.grad_scale = scale;
        pc.max_rel_error =
            worst_diff == 0.0 ? 0.0 : worst_diff / std::max(scale, std::numeric_limits<double>::min());
        report.params.push_back(pc);
    }
    report.passed = std::all_of(report.params.begin(), report.params.end(), [&](const ParamCheck& c) {
        return c.max_rel_error < options.tolerance &&
               static_cast<double>(c.kinks) <= options.max_kink_fraction * static_cast<double>(c.checked);
    });
    for (auto& p : params) p.value.zero_grad();
    return report;
}

}  // namespace fbev::diff
