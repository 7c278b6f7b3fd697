#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "ikl/errors.hpp"
#include "ikl/matrix.hpp"
#include "ikl/spectral.hpp"

namespace ikl {

// Random Fourier embedding of a dataset: row i is
//   (1/sqrt(m)) [cos(w_1.x_i), sin(w_1.x_i), ..., cos(w_m.x_i), sin(w_m.x_i)]
// so inner products of rows average cos(w.(x - x')) over the batch. Every
// row has unit norm by the cos^2 + sin^2 identity.
struct FeatureMap {
    DenseMatrix features;  // n x 2m
    std::uint64_t frequency_fingerprint = 0;
    std::size_t frequency_count = 0;
};

inline FeatureMap fourier_features(const DenseMatrix& x, const FrequencyBatch& freqs) {
    if (x.cols() != freqs.dim())
        throw DimensionError("fourier_features: data dim " + std::to_string(x.cols()) +
                             " != frequency dim " + std::to_string(freqs.dim()));
    const std::size_t m = freqs.count();
    const double scale = 1.0 / std::sqrt(static_cast<double>(m));
    DenseMatrix proj = matmul_abt(x, freqs.omegas);  // n x m
    FeatureMap out;
    out.features = DenseMatrix(x.rows(), 2 * m);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const double* pi = proj.row(i);
        double* fi = out.features.row(i);
        for (std::size_t j = 0; j < m; ++j) {
            fi[2 * j] = scale * std::cos(pi[j]);
            fi[2 * j + 1] = scale * std::sin(pi[j]);
        }
    }
    out.frequency_fingerprint = freqs.fingerprint;
    out.frequency_count = m;
    return out;
}

// Monte-Carlo kernel matrix: entry (i, j) = phi(x_i) . phi(y_j). Both maps
// must come from the same frequency batch.
inline DenseMatrix kernel_matrix_approx(const FeatureMap& fx, const FeatureMap& fy) {
    if (fx.frequency_fingerprint != fy.frequency_fingerprint)
        throw ProvenanceError("kernel_matrix_approx: feature maps use different frequency batches");
    return matmul_abt(fx.features, fy.features);
}

// Exact kernel matrix for closed-form kernels.
inline DenseMatrix kernel_matrix_exact(const KernelSpec& spec, const DenseMatrix& x,
                                       const DenseMatrix& y) {
    if (x.cols() != y.cols()) throw DimensionError("kernel_matrix_exact: dimension mismatch");
    if (!has_closed_form(spec))
        throw ValidationError("kernel_matrix_exact: kernel has no closed form");
    DenseMatrix k(x.rows(), y.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const double* xi = x.row(i);
        for (std::size_t j = 0; j < y.rows(); ++j) {
            const double* yj = y.row(j);
            double sq = 0.0;
            for (std::size_t c = 0; c < x.cols(); ++c) {
                const double dd = xi[c] - yj[c];
                sq += dd * dd;
            }
            k(i, j) = kernel_closed_form_sq(spec, sq);
        }
    }
    return k;
}

}  // namespace ikl
