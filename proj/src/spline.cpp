#include "dekan/spline.hpp"

#include <algorithm>
#include <cmath>

#include "dekan/error.hpp"

namespace dekan {

void SplineGrid::validate() const {
    if (intervals < 1) throw ConfigError("spline grid needs at least one interval, got " + std::to_string(intervals));
    if (order < 0) throw ConfigError("spline order must be non-negative");
    if (!(lo < hi)) throw ConfigError("spline grid requires lo < hi");
}

std::vector<double> SplineGrid::knots() const {
    validate();
    std::vector<double> t(static_cast<std::size_t>(intervals + 2 * order + 1));
    const double h = spacing();
    for (std::size_t m = 0; m < t.size(); ++m) t[m] = lo + (static_cast<double>(m) - order) * h;
    return t;
}

template <typename T>
BasisEval<T> bspline_basis(std::span<const T> x, const SplineGrid& grid, bool with_derivatives) {
    const auto t = grid.knots();
    const int k = grid.order;
    const int nb = grid.basis_count();
    const int spans = grid.intervals + 2 * k;
    const double h = grid.spacing();
    const int n = static_cast<int>(x.size());

    BasisEval<T> out{Tensor<T>({n, nb}), Tensor<T>(with_derivatives ? Shape{n, nb} : Shape{0, nb})};
    std::vector<double> cur(spans), prev(spans);
    for (int i = 0; i < n; ++i) {
        const double raw = x[i];
        const bool clamped = raw < grid.lo || raw > grid.hi;
        const double v = std::clamp(raw, grid.lo, grid.hi);
        // Degree 0: indicator of the half-open span containing v; v == hi
        // belongs to the last interior span.
        int span = static_cast<int>(std::floor((v - grid.lo) / h));
        span = std::clamp(span, 0, grid.intervals - 1) + k;
        std::fill(cur.begin(), cur.end(), 0.0);
        cur[span] = 1.0;
        for (int d = 1; d <= k; ++d) {
            prev.swap(cur);
            for (int m = 0; m < spans - d; ++m) {
                const double left = (v - t[m]) / (t[m + d] - t[m]) * prev[m];
                const double right = (t[m + d + 1] - v) / (t[m + d + 1] - t[m + 1]) * prev[m + 1];
                cur[m] = left + right;
            }
            if (with_derivatives && d == k) {
                // prev holds degree k-1 values here.
                T* dst = out.derivatives.data() + static_cast<std::size_t>(i) * nb;
                for (int m = 0; m < nb; ++m) {
                    const double dv = k / (t[m + k] - t[m]) * prev[m] - k / (t[m + k + 1] - t[m + 1]) * prev[m + 1];
                    dst[m] = clamped ? T(0) : static_cast<T>(dv);
                }
            }
        }
        T* dst = out.values.data() + static_cast<std::size_t>(i) * nb;
        for (int m = 0; m < nb; ++m) dst[m] = static_cast<T>(cur[m]);
    }
    return out;
}

template BasisEval<float> bspline_basis(std::span<const float>, const SplineGrid&, bool);
template BasisEval<double> bspline_basis(std::span<const double>, const SplineGrid&, bool);

}  // namespace dekan
