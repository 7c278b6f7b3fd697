#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ikl/errors.hpp"
#include "ikl/features.hpp"
#include "ikl/matrix.hpp"
#include "ikl/mlp.hpp"
#include "ikl/prng.hpp"
#include "ikl/spectral.hpp"

namespace ikl {

struct MmdEstimate {
    double value = 0.0;
    std::size_t n = 0;
    std::size_t n_prime = 0;
    std::string estimator;  // "unbiased-u" or "feature-biased"
};

// U-statistic MMD^2 from precomputed Gram blocks; diagonals of KXX and KYY
// are excluded.
inline MmdEstimate mmd_unbiased(const DenseMatrix& kxx, const DenseMatrix& kxy,
                                const DenseMatrix& kyy) {
    const std::size_t n = kxx.rows();
    const std::size_t np = kyy.rows();
    if (kxx.cols() != n || kyy.cols() != np)
        throw DimensionError("mmd_unbiased: KXX and KYY must be square");
    if (kxy.rows() != n || kxy.cols() != np)
        throw DimensionError("mmd_unbiased: KXY shape mismatch");
    if (n < 2 || np < 2)
        throw ValidationError("mmd_unbiased: need at least 2 samples per side");

    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j) sxx += kxx(i, j);
    for (double v : kxy.data()) sxy += v;
    for (std::size_t i = 0; i < np; ++i)
        for (std::size_t j = 0; j < np; ++j)
            if (i != j) syy += kyy(i, j);

    const double nd = static_cast<double>(n), md = static_cast<double>(np);
    MmdEstimate e;
    e.value = sxx / (nd * (nd - 1.0)) - 2.0 * sxy / (nd * md) + syy / (md * (md - 1.0));
    e.n = n;
    e.n_prime = np;
    e.estimator = "unbiased-u";
    return e;
}

// MMD^2 straight from feature maps. The unbiased variant equals
// mmd_unbiased on the kernel_matrix_approx Gram blocks; the biased variant
// is the squared distance between feature means.
inline MmdEstimate mmd_from_features(const FeatureMap& fx, const FeatureMap& fy, bool unbiased) {
    if (fx.frequency_fingerprint != fy.frequency_fingerprint)
        throw ProvenanceError("mmd_from_features: feature maps use different frequency batches");
    const std::size_t n = fx.features.rows();
    const std::size_t np = fy.features.rows();
    const std::size_t dim = fx.features.cols();

    std::vector<double> sx(dim, 0.0), sy(dim, 0.0);
    double self_x = 0.0, self_y = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* r = fx.features.row(i);
        double sq = 0.0;
        for (std::size_t j = 0; j < dim; ++j) {
            sx[j] += r[j];
            sq += r[j] * r[j];
        }
        self_x += sq;
    }
    for (std::size_t i = 0; i < np; ++i) {
        const double* r = fy.features.row(i);
        double sq = 0.0;
        for (std::size_t j = 0; j < dim; ++j) {
            sy[j] += r[j];
            sq += r[j] * r[j];
        }
        self_y += sq;
    }
    const double nd = static_cast<double>(n), md = static_cast<double>(np);
    MmdEstimate e;
    e.n = n;
    e.n_prime = np;
    if (unbiased) {
        if (n < 2 || np < 2)
            throw ValidationError("mmd_from_features: need at least 2 samples per side");
        e.value = (squared_norm(sx) - self_x) / (nd * (nd - 1.0)) -
                  2.0 * dot(sx, sy) / (nd * md) +
                  (squared_norm(sy) - self_y) / (md * (md - 1.0));
        e.estimator = "unbiased-u";
    } else {
        if (n < 1 || np < 1) throw ValidationError("mmd_from_features: empty sample");
        double v = 0.0;
        for (std::size_t j = 0; j < dim; ++j) {
            const double d = sx[j] / nd - sy[j] / md;
            v += d * d;
        }
        e.value = v;
        e.estimator = "feature-biased";
    }
    return e;
}

// ---------------------------------------------------------------------------
// Variance constraint: lambda_h * (E|h(nu)|^2 - u)^2, the practical stand-in
// for the Lipschitz condition the continuity theorem needs.
// ---------------------------------------------------------------------------

struct PenaltyResult {
    double value = 0.0;
    std::vector<double> grad;  // w.r.t. the sampler / critic parameters
    double second_moment = 0.0;
};

template <typename Sampler>
PenaltyResult variance_penalty(const Sampler& s, const DenseMatrix& nu, double lambda_h,
                               double target_u) {
    if (lambda_h < 0.0) throw ValidationError("variance_penalty: lambda_h must be >= 0");
    if (target_u <= 0.0) throw ValidationError("variance_penalty: target must be positive");
    if (nu.rows() == 0) throw ValidationError("variance_penalty: empty batch");

    const DenseMatrix om = sampler_map_raw(s, nu);
    const double m = static_cast<double>(om.rows());
    double second = 0.0;
    for (double v : om.data()) second += v * v;
    second /= m;

    PenaltyResult r;
    r.second_moment = second;
    const double gap = second - target_u;
    r.value = lambda_h * gap * gap;
    // d/d omega of lambda*(mean|omega|^2 - u)^2 = lambda * 2*gap * 2*omega/m
    DenseMatrix up = om;
    const double c = lambda_h * 4.0 * gap / m;
    for (double& v : up.data()) v *= c;
    r.grad = sampler_vjp(s, nu, up);
    return r;
}

// ---------------------------------------------------------------------------
// Gradient penalty on interpolates, lambda_GP * (|J_f(xhat)|_F - 1)^2
// averaged over the batch. For a scalar-output critic the Frobenius norm of
// the Jacobian is exactly the gradient norm. The parameter gradient needs a
// second-order pass: forward-mode tangents along each input axis, then
// reverse through the tangent computation with the ReLU masks held fixed
// (their derivative vanishes almost everywhere).
// ---------------------------------------------------------------------------

inline PenaltyResult gradient_penalty_at(const Mlp& critic, const DenseMatrix& xhat,
                                         double lambda_gp) {
    if (lambda_gp < 0.0) throw ValidationError("gradient_penalty: lambda_GP must be >= 0");
    const std::size_t B = xhat.rows();
    const std::size_t din = critic.input_dim();
    const std::size_t L = critic.layers.size();
    if (xhat.cols() != din) throw DimensionError("gradient_penalty: input dimension mismatch");

    const auto trace = detail::mlp_trace(critic, xhat);

    // Tangents t_l = d(activation_l)/d(x along axis a), one set per axis.
    // tang[a][l] has the shape of trace.acts[l+1].
    std::vector<std::vector<DenseMatrix>> tang(din);
    for (std::size_t a = 0; a < din; ++a) {
        tang[a].resize(L);
        DenseMatrix t(B, din);
        for (std::size_t i = 0; i < B; ++i) t(i, a) = 1.0;
        for (std::size_t l = 0; l < L; ++l) {
            DenseMatrix u = matmul(t, critic.layers[l].w);
            if (l + 1 < L && critic.hidden_activation == Activation::Relu) {
                const DenseMatrix& act = trace.acts[l + 1];
                for (std::size_t i = 0; i < u.size(); ++i)
                    if (act.data()[i] <= 0.0) u.data()[i] = 0.0;
            }
            tang[a][l] = std::move(u);
            t = tang[a][l];
        }
    }

    // Squared Frobenius norm per row, summed over axes and outputs.
    std::vector<double> sq(B, 0.0);
    for (std::size_t a = 0; a < din; ++a) {
        const DenseMatrix& jl = tang[a][L - 1];
        for (std::size_t i = 0; i < B; ++i) {
            const double* r = jl.row(i);
            for (std::size_t j = 0; j < jl.cols(); ++j) sq[i] += r[j] * r[j];
        }
    }

    PenaltyResult res;
    const double bd = static_cast<double>(B);
    std::vector<double> dsq(B, 0.0);  // d penalty / d sq[i]
    for (std::size_t i = 0; i < B; ++i) {
        const double norm = std::sqrt(sq[i]);
        const double gap = norm - 1.0;
        res.value += lambda_gp * gap * gap / bd;
        dsq[i] = lambda_gp * gap / (std::max(norm, 1e-12) * bd);
    }

    // Reverse pass through each tangent chain. W_l enters tang via
    // u_l = t_{l-1} W_l, so dW_l += t_{l-1}^T tbar_l and tbar_{l-1} =
    // (tbar_l o mask_l) W_l^T. Biases never enter the tangents.
    std::vector<DenseMatrix> dw(L);
    for (std::size_t l = 0; l < L; ++l)
        dw[l] = DenseMatrix(critic.layers[l].w.rows(), critic.layers[l].w.cols());

    for (std::size_t a = 0; a < din; ++a) {
        DenseMatrix tbar = tang[a][L - 1];
        for (std::size_t i = 0; i < B; ++i) {
            double* r = tbar.row(i);
            for (std::size_t j = 0; j < tbar.cols(); ++j) r[j] *= 2.0 * dsq[i];
        }
        for (std::size_t l = L; l-- > 0;) {
            if (l + 1 < L && critic.hidden_activation == Activation::Relu) {
                const DenseMatrix& act = trace.acts[l + 1];
                for (std::size_t i = 0; i < tbar.size(); ++i)
                    if (act.data()[i] <= 0.0) tbar.data()[i] = 0.0;
            }
            DenseMatrix t_prev(B, critic.layers[l].w.rows());
            if (l == 0) {
                for (std::size_t i = 0; i < B; ++i) t_prev(i, a) = 1.0;
            } else {
                t_prev = tang[a][l - 1];
            }
            const DenseMatrix contrib = matmul_atb(t_prev, tbar);
            for (std::size_t i = 0; i < contrib.size(); ++i) dw[l].data()[i] += contrib.data()[i];
            if (l > 0) tbar = matmul_abt(tbar, critic.layers[l].w);
        }
    }

    res.grad.reserve(critic.param_count());
    for (std::size_t l = 0; l < L; ++l) {
        res.grad.insert(res.grad.end(), dw[l].data().begin(), dw[l].data().end());
        res.grad.insert(res.grad.end(), critic.layers[l].b.size(), 0.0);
    }
    return res;
}

inline DenseMatrix interpolate_rows(const DenseMatrix& x_real, const DenseMatrix& x_fake,
                                    const std::vector<double>& eps) {
    if (!x_real.same_shape(x_fake))
        throw DimensionError("gradient_penalty: real/fake shape mismatch");
    if (eps.size() != x_real.rows())
        throw DimensionError("gradient_penalty: one epsilon per row required");
    DenseMatrix xhat(x_real.rows(), x_real.cols());
    for (std::size_t i = 0; i < x_real.rows(); ++i)
        for (std::size_t j = 0; j < x_real.cols(); ++j)
            xhat(i, j) = eps[i] * x_real(i, j) + (1.0 - eps[i]) * x_fake(i, j);
    return xhat;
}

inline PenaltyResult gradient_penalty(const Mlp& critic, const DenseMatrix& x_real,
                                      const DenseMatrix& x_fake, const std::vector<double>& eps,
                                      double lambda_gp) {
    return gradient_penalty_at(critic, interpolate_rows(x_real, x_fake, eps), lambda_gp);
}

inline PenaltyResult gradient_penalty(const Mlp& critic, const DenseMatrix& x_real,
                                      const DenseMatrix& x_fake, Prng& prng, double lambda_gp) {
    std::vector<double> eps(x_real.rows());
    for (double& e : eps) e = prng.next_double();
    return gradient_penalty(critic, x_real, x_fake, eps, lambda_gp);
}

}  // namespace ikl
