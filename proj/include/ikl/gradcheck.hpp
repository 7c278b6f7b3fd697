#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "ikl/errors.hpp"

namespace ikl {

// Max over coordinates of |analytic_i - central_difference_i| / (|analytic_i| + 1e-8).
// The test-side oracle for every gradient in this library.
inline double check_gradient(const std::function<double(const std::vector<double>&)>& f,
                             const std::vector<double>& point,
                             const std::vector<double>& analytic, double h = 1e-5) {
    if (h <= 0.0) throw NumericError("check_gradient: step must be positive");
    if (analytic.size() != point.size())
        throw DimensionError("check_gradient: gradient length mismatch");
    std::vector<double> p = point;
    double worst = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double saved = p[i];
        p[i] = saved + h;
        const double fp = f(p);
        p[i] = saved - h;
        const double fm = f(p);
        p[i] = saved;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw NumericError("check_gradient: non-finite function value");
        const double fd = (fp - fm) / (2.0 * h);
        const double rel = std::abs(analytic[i] - fd) / (std::abs(analytic[i]) + 1e-8);
        if (rel > worst) worst = rel;
    }
    return worst;
}

}  // namespace ikl
