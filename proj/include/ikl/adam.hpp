#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "ikl/errors.hpp"

namespace ikl {

struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t t = 0;
    std::vector<double> m;  // first moment
    std::vector<double> v;  // second moment

    explicit AdamState(std::size_t n, double lr_ = 1e-3)
        : lr(lr_), m(n, 0.0), v(n, 0.0) {}
};

// One bias-corrected Adam update, in place.
inline void adam_step(AdamState& state, std::vector<double>& params,
                      const std::vector<double>& grads) {
    if (params.size() != state.m.size() || grads.size() != state.m.size())
        throw DimensionError("adam_step: parameter/gradient size mismatch");
    for (std::size_t i = 0; i < grads.size(); ++i)
        if (!std::isfinite(grads[i]))
            throw NumericError("adam_step: non-finite gradient at index " + std::to_string(i));

    state.t += 1;
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
        const double mhat = state.m[i] / c1;
        const double vhat = state.v[i] / c2;
        params[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
}

}  // namespace ikl
