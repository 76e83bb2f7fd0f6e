#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dekan/tensor.hpp"

namespace dekan {

struct GradCheckOptions {
    double step = 1e-4;
    double tolerance = 1e-4;
    // Denominator floor for the relative error; entries whose analytic and
    // numeric gradients are both below it are effectively compared absolutely.
    double floor = 1e-5;
    // 0 checks every entry; otherwise a seeded sample of this many per tensor.
    std::size_t max_entries_per_tensor = 0;
    std::uint64_t seed = 7;
    // Piecewise-smooth objectives (relu, max-pool): when the estimates at step h
    // and h/4 disagree, keep dividing the step by 4, up to this many times, until
    // two consecutive estimates agree to tolerance/4.
    int refinements = 0;
};

struct GradCheckTarget {
    std::string name;
    Tensor<double>* value;
    const Tensor<double>* grad;
};

struct GradCheckReport {
    bool passed = false;
    double max_rel_error = 0.0;
    std::string worst_name;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t checked = 0;

    std::string summary() const;
};

/// Central-difference check of analytic gradients.
///
/// `loss` evaluates the scalar objective from the current values of the targets.
/// `backward` must zero and then populate every target's gradient for the
/// objective at the current point; it is called once, after one `loss` call.
/// Throws NumericalError when the objective is non-finite at any probe.
GradCheckReport gradient_check(const std::function<double()>& loss, const std::function<void()>& backward,
                               const std::vector<GradCheckTarget>& targets, const GradCheckOptions& options = {});

/// Trainable entries of a module's state as check targets.
std::vector<GradCheckTarget> trainable_targets(const StateList<double>& state);

}  // namespace dekan
