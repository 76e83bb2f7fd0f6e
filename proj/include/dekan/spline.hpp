#pragma once

#include <span>
#include <vector>

#include "dekan/tensor.hpp"

namespace dekan {

/// Uniform knot grid on [lo, hi] with `intervals` spans, extended by `order`
/// knots beyond each end so that all order+1 bases overlapping [lo, hi] exist.
struct SplineGrid {
    double lo = -1.0;
    double hi = 1.0;
    int intervals = 5;
    int order = 3;

    void validate() const;
    int basis_count() const { return intervals + order; }
    double spacing() const { return (hi - lo) / intervals; }
    /// intervals + 2*order + 1 knots, strictly increasing.
    std::vector<double> knots() const;

    bool operator==(const SplineGrid&) const = default;
};

template <typename T>
struct BasisEval {
    Tensor<T> values;       // (n, basis_count)
    Tensor<T> derivatives;  // (n, basis_count); zero where x was clamped
};

/// Cox-de Boor evaluation of every degree-`order` basis function at each x.
/// Inputs are clamped to [lo, hi]; outside that range the derivative is 0.
template <typename T>
BasisEval<T> bspline_basis(std::span<const T> x, const SplineGrid& grid, bool with_derivatives = false);

}  // namespace dekan
