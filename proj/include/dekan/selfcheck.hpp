#pragma once

#include <string>
#include <vector>

#include "dekan/gradcheck.hpp"

namespace dekan {

struct SelfCheckEntry {
    std::string name;
    double tolerance = 0.0;
    GradCheckReport report;
};

/// Double-precision finite-difference checks of every differentiable operation
/// (`tolerance`) and of the whole network on a 32x32 desk-width config
/// (`model_tolerance`).
std::vector<SelfCheckEntry> run_gradient_suite(double tolerance = 1e-4, double model_tolerance = 1e-3);

}  // namespace dekan
