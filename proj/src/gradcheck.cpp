#include "dekan/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "dekan/error.hpp"

namespace dekan {

std::string GradCheckReport::summary() const {
    std::ostringstream os;
    os << (passed ? "PASS" : "FAIL") << " max_rel_error=" << max_rel_error << " checked=" << checked;
    if (!worst_name.empty()) {
        os << " worst=" << worst_name << "[" << worst_index << "] analytic=" << worst_analytic
           << " numeric=" << worst_numeric;
    }
    return os.str();
}

namespace {

double eval_finite(const std::function<double()>& loss, const std::string& where) {
    const double v = loss();
    if (!std::isfinite(v)) throw NumericalError("gradient check aborted: non-finite loss " + where);
    return v;
}

}  // namespace

GradCheckReport gradient_check(const std::function<double()>& loss, const std::function<void()>& backward,
                               const std::vector<GradCheckTarget>& targets, const GradCheckOptions& options) {
    eval_finite(loss, "at the base point");
    backward();
    std::vector<std::vector<double>> analytic;
    analytic.reserve(targets.size());
    for (const auto& t : targets) {
        if (!t.grad || !t.grad->same_shape(*t.value)) {
            throw ConfigError("gradient check target " + t.name + " has no gradient of matching shape");
        }
        analytic.emplace_back(t.grad->storage());
    }

    Rng rng(options.seed);
    GradCheckReport report;
    for (std::size_t ti = 0; ti < targets.size(); ++ti) {
        auto& value = *targets[ti].value;
        std::vector<std::size_t> indices(value.size());
        std::iota(indices.begin(), indices.end(), std::size_t{0});
        if (options.max_entries_per_tensor && indices.size() > options.max_entries_per_tensor) {
            std::shuffle(indices.begin(), indices.end(), rng);
            indices.resize(options.max_entries_per_tensor);
            std::sort(indices.begin(), indices.end());
        }
        for (std::size_t idx : indices) {
            const double a = analytic[ti][idx];
            auto central = [&](double h) {
                const double saved = value[idx];
                value[idx] = saved + h;
                const double up = eval_finite(loss, "probing " + targets[ti].name);
                value[idx] = saved - h;
                const double down = eval_finite(loss, "probing " + targets[ti].name);
                value[idx] = saved;
                return (up - down) / (2.0 * h);
            };
            double h = options.step;
            double numeric = central(h);
            for (int r = 0; r < options.refinements; ++r) {
                if (std::abs(a - numeric) < options.tolerance * std::max({std::abs(a), std::abs(numeric), options.floor})) {
                    break;
                }
                h /= 4.0;
                const double finer = central(h);
                const bool settled =
                    std::abs(finer - numeric) < 0.25 * options.tolerance * std::max({std::abs(finer), options.floor});
                numeric = finer;
                if (settled) break;
            }
            const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
            const double rel = std::abs(a - numeric) / denom;
            ++report.checked;
            if (rel > report.max_rel_error || report.worst_name.empty()) {
                report.max_rel_error = std::max(rel, report.max_rel_error);
                if (rel >= report.max_rel_error) {
                    report.worst_name = targets[ti].name;
                    report.worst_index = idx;
                    report.worst_analytic = a;
                    report.worst_numeric = numeric;
                }
            }
        }
    }
    report.passed = report.max_rel_error < options.tolerance;
    return report;
}

std::vector<GradCheckTarget> trainable_targets(const StateList<double>& state) {
    std::vector<GradCheckTarget> out;
    for (const auto& e : state) {
        if (e.trainable()) out.push_back({e.name, e.value, e.grad});
    }
    return out;
}

}  // namespace dekan
