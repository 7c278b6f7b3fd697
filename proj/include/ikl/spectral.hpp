#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "ikl/errors.hpp"
#include "ikl/matrix.hpp"
#include "ikl/mlp.hpp"
#include "ikl/prng.hpp"

namespace ikl {

// A batch of sampled frequencies together with where they came from. The
// fingerprint identifies the batch content so feature maps built from
// different batches cannot be silently combined.
struct FrequencyBatch {
    DenseMatrix omegas;  // m x d
    std::string source;
    std::uint64_t seed = 0;
    std::uint64_t fingerprint = 0;

    FrequencyBatch() = default;
    FrequencyBatch(DenseMatrix om, std::string src, std::uint64_t sd)
        : omegas(std::move(om)), source(std::move(src)), seed(sd) {
        if (!omegas.all_finite()) throw NumericError("FrequencyBatch: non-finite frequency");
        std::uint64_t h = fnv1a64(source);
        h = fnv1a64(omegas.data().data(), omegas.data().size() * sizeof(double), h);
        fingerprint = h;
    }

    std::size_t count() const { return omegas.rows(); }
    std::size_t dim() const { return omegas.cols(); }
};

// i.i.d. standard normal base draws.
inline DenseMatrix sample_base(Prng& prng, std::size_t m, std::size_t d) {
    DenseMatrix nu(m, d);
    for (double& v : nu.data()) v = prng.next_normal();
    return nu;
}

inline double sign_pos(double x) { return x < 0.0 ? -1.0 : 1.0; }  // sign(0) := +1

// Implicit spectral sampler: omega = sign(nu) .* net(abs(nu)). The sign/abs
// wrapper makes the sampled density symmetric for any net, so the resulting
// kernel is real-valued.
struct SpectralSampler {
    std::size_t base_dim = 0;
    Mlp net;
    std::string base = "standard_normal";
};

inline SpectralSampler make_sampler(std::size_t dim, const std::vector<std::size_t>& hidden,
                                    Prng prng) {
    std::vector<std::size_t> dims;
    dims.push_back(dim);
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(dim);
    return SpectralSampler{dim, make_mlp(dims, prng)};
}

// Sampler whose realized map is exactly the identity (recovers the Gaussian
// sigma=1 kernel under a standard normal base).
inline SpectralSampler make_identity_sampler(std::size_t dim,
                                             const std::vector<std::size_t>& hidden = {}) {
    return SpectralSampler{dim, make_identity_mlp(dim, hidden)};
}

inline DenseMatrix sampler_map_raw(const SpectralSampler& s, const DenseMatrix& nu) {
    if (nu.cols() != s.base_dim) throw DimensionError("sampler_map: base dimension mismatch");
    if (s.net.input_dim() != s.base_dim || s.net.output_dim() != s.base_dim)
        throw DimensionError("sampler_map: net must map base_dim -> base_dim");
    DenseMatrix a = nu;
    for (double& v : a.data()) v = std::fabs(v);
    DenseMatrix out = mlp_forward(s.net, a);
    for (std::size_t i = 0; i < out.size(); ++i)
        out.data()[i] = sign_pos(nu.data()[i]) * out.data()[i];
    return out;
}

inline FrequencyBatch sampler_map(const SpectralSampler& s, const DenseMatrix& nu,
                                  std::uint64_t seed = 0) {
    return FrequencyBatch(sampler_map_raw(s, nu), "implicit", seed);
}

// Gradient of sum(upstream .* sampler_map(s, nu)) w.r.t. the net parameters,
// flattened in mlp_flatten order.
inline std::vector<double> sampler_vjp(const SpectralSampler& s, const DenseMatrix& nu,
                                       const DenseMatrix& upstream) {
    if (!upstream.same_shape(nu)) throw DimensionError("sampler_vjp: upstream shape mismatch");
    DenseMatrix a = nu;
    for (double& v : a.data()) v = std::fabs(v);
    DenseMatrix up = upstream;
    for (std::size_t i = 0; i < up.size(); ++i) up.data()[i] *= sign_pos(nu.data()[i]);
    return mlp_backprop(s.net, a, up).flatten();
}

inline std::vector<double> sampler_params(const SpectralSampler& s) { return mlp_flatten(s.net); }
inline void sampler_set_params(SpectralSampler& s, const std::vector<double>& p) {
    mlp_unflatten(s.net, p);
}

// ---------------------------------------------------------------------------
// Explicit spectral mixture sampler: omega = mu_q + s_q .* eps with a
// deterministic allocation of rows to components. The trainable counterpart
// of the closed-form mixtures below and the baseline to compare IKL against.
// ---------------------------------------------------------------------------

struct SmSampler {
    DenseMatrix means;    // Q x d
    DenseMatrix stddevs;  // Q x d
    std::vector<double> weights;

    std::size_t components() const { return means.rows(); }
    std::size_t dim() const { return means.cols(); }
};

inline void validate_sm(const SmSampler& sm) {
    if (!sm.means.same_shape(sm.stddevs) || sm.weights.size() != sm.means.rows())
        throw DimensionError("SmSampler: component shapes disagree");
    double wsum = 0.0;
    for (double w : sm.weights) {
        if (w < 0.0) throw ValidationError("SmSampler: negative weight");
        wsum += w;
    }
    if (std::fabs(wsum - 1.0) > 1e-9) throw ValidationError("SmSampler: weights must sum to 1");
}

// Deterministic largest-remainder allocation of m rows across components,
// proportional to the weights. Equal weights give m/Q rows each.
inline std::vector<std::size_t> sm_allocation(const SmSampler& sm, std::size_t m) {
    const std::size_t q = sm.components();
    std::vector<std::size_t> counts(q, 0);
    std::vector<std::pair<double, std::size_t>> rem(q);
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < q; ++i) {
        const double exact = sm.weights[i] * static_cast<double>(m);
        counts[i] = static_cast<std::size_t>(exact);
        assigned += counts[i];
        rem[i] = {exact - static_cast<double>(counts[i]), i};
    }
    std::stable_sort(rem.begin(), rem.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; assigned < m; ++k, ++assigned) counts[rem[k % q].second] += 1;
    return counts;
}

inline DenseMatrix sampler_map_raw(const SmSampler& sm, const DenseMatrix& eps) {
    validate_sm(sm);
    if (eps.cols() != sm.dim()) throw DimensionError("sm map: dimension mismatch");
    const auto counts = sm_allocation(sm, eps.rows());
    DenseMatrix out(eps.rows(), eps.cols());
    std::size_t row = 0;
    for (std::size_t q = 0; q < sm.components(); ++q) {
        for (std::size_t r = 0; r < counts[q]; ++r, ++row) {
            const double* e = eps.row(row);
            double* o = out.row(row);
            for (std::size_t j = 0; j < eps.cols(); ++j)
                o[j] = sm.means(q, j) + sm.stddevs(q, j) * e[j];
        }
    }
    return out;
}

inline FrequencyBatch sampler_map(const SmSampler& sm, const DenseMatrix& eps,
                                  std::uint64_t seed = 0) {
    return FrequencyBatch(sampler_map_raw(sm, eps), "spectral_mixture", seed);
}

// Gradient w.r.t. [means rows..., stddevs rows...] flattened.
inline std::vector<double> sampler_vjp(const SmSampler& sm, const DenseMatrix& eps,
                                       const DenseMatrix& upstream) {
    if (!upstream.same_shape(eps)) throw DimensionError("sm vjp: upstream shape mismatch");
    const auto counts = sm_allocation(sm, eps.rows());
    DenseMatrix dmu(sm.components(), sm.dim());
    DenseMatrix ds(sm.components(), sm.dim());
    std::size_t row = 0;
    for (std::size_t q = 0; q < sm.components(); ++q) {
        for (std::size_t r = 0; r < counts[q]; ++r, ++row) {
            const double* u = upstream.row(row);
            const double* e = eps.row(row);
            for (std::size_t j = 0; j < eps.cols(); ++j) {
                dmu(q, j) += u[j];
                ds(q, j) += u[j] * e[j];
            }
        }
    }
    std::vector<double> g;
    g.reserve(dmu.size() + ds.size());
    g.insert(g.end(), dmu.data().begin(), dmu.data().end());
    g.insert(g.end(), ds.data().begin(), ds.data().end());
    return g;
}

inline std::vector<double> sampler_params(const SmSampler& sm) {
    std::vector<double> p;
    p.reserve(sm.means.size() + sm.stddevs.size());
    p.insert(p.end(), sm.means.data().begin(), sm.means.data().end());
    p.insert(p.end(), sm.stddevs.data().begin(), sm.stddevs.data().end());
    return p;
}

inline void sampler_set_params(SmSampler& sm, const std::vector<double>& p) {
    if (p.size() != sm.means.size() + sm.stddevs.size())
        throw DimensionError("sm set_params: length mismatch");
    std::copy(p.begin(), p.begin() + sm.means.size(), sm.means.data().begin());
    std::copy(p.begin() + sm.means.size(), p.end(), sm.stddevs.data().begin());
}

// ---------------------------------------------------------------------------
// Kernel descriptions
// ---------------------------------------------------------------------------

struct GaussianMixture {
    std::vector<double> bandwidths;  // sigma_q, equal weights
};

struct RQMixture {
    std::vector<double> alphas;  // alpha_q, equal weights
};

struct KernelSpec {
    std::variant<GaussianMixture, RQMixture, SmSampler, SpectralSampler> variant;

    static KernelSpec gaussian(std::vector<double> sigmas) {
        for (double s : sigmas)
            if (s <= 0.0) throw ValidationError("GaussianMixture: bandwidth must be positive");
        if (sigmas.empty()) throw ValidationError("GaussianMixture: empty bandwidth list");
        return KernelSpec{GaussianMixture{std::move(sigmas)}};
    }
    static KernelSpec rq(std::vector<double> alphas) {
        for (double a : alphas)
            if (a <= 0.0) throw ValidationError("RQMixture: scale must be positive");
        if (alphas.empty()) throw ValidationError("RQMixture: empty scale list");
        return KernelSpec{RQMixture{std::move(alphas)}};
    }
    static KernelSpec spectral_mixture(SmSampler sm) {
        validate_sm(sm);
        return KernelSpec{std::move(sm)};
    }
    static KernelSpec implicit(SpectralSampler s) { return KernelSpec{std::move(s)}; }
};

// m draws from the spectral density of the named kernel. For the Gaussian
// mixture, rows are partitioned evenly across the Q bandwidths and
// omega ~ N(0, I/sigma_q^2) within each block.
inline FrequencyBatch sample_frequencies(const KernelSpec& spec, Prng& prng, std::size_t m,
                                         std::size_t d) {
    const std::uint64_t seed = prng.seed();
    if (const auto* g = std::get_if<GaussianMixture>(&spec.variant)) {
        DenseMatrix om = sample_base(prng, m, d);
        const std::size_t q = g->bandwidths.size();
        std::size_t row = 0;
        for (std::size_t c = 0; c < q; ++c) {
            std::size_t n = m / q + (c < m % q ? 1 : 0);
            for (std::size_t r = 0; r < n; ++r, ++row) {
                double* o = om.row(row);
                for (std::size_t j = 0; j < d; ++j) o[j] /= g->bandwidths[c];
            }
        }
        return FrequencyBatch(std::move(om), "gaussian_mixture", seed);
    }
    if (const auto* sm = std::get_if<SmSampler>(&spec.variant)) {
        if (sm->dim() != d) throw DimensionError("sample_frequencies: SM dimension mismatch");
        DenseMatrix eps = sample_base(prng, m, d);
        return FrequencyBatch(sampler_map_raw(*sm, eps), "spectral_mixture", seed);
    }
    if (const auto* s = std::get_if<SpectralSampler>(&spec.variant)) {
        if (s->base_dim != d) throw DimensionError("sample_frequencies: sampler dimension mismatch");
        DenseMatrix nu = sample_base(prng, m, d);
        return FrequencyBatch(sampler_map_raw(*s, nu), "implicit", seed);
    }
    throw ValidationError("sample_frequencies: RQ mixture spectral density is closed-form only");
}

// Closed-form kernel value at lag delta. Gaussian and RQ mixtures only.
inline double kernel_closed_form_sq(const KernelSpec& spec, double sq_dist) {
    if (const auto* g = std::get_if<GaussianMixture>(&spec.variant)) {
        double s = 0.0;
        for (double sigma : g->bandwidths) s += std::exp(-sq_dist / (2.0 * sigma * sigma));
        return s / static_cast<double>(g->bandwidths.size());
    }
    if (const auto* r = std::get_if<RQMixture>(&spec.variant)) {
        double s = 0.0;
        for (double alpha : r->alphas) s += std::pow(1.0 + sq_dist / (2.0 * alpha), -alpha);
        return s / static_cast<double>(r->alphas.size());
    }
    throw ValidationError("kernel_closed_form: no closed form for this kernel variant");
}

inline double kernel_closed_form(const KernelSpec& spec, const std::vector<double>& delta) {
    return kernel_closed_form_sq(spec, squared_norm(delta));
}

// d k / d (squared distance), for gradients through closed-form Gram blocks.
inline double kernel_closed_form_sq_grad(const KernelSpec& spec, double sq_dist) {
    if (const auto* g = std::get_if<GaussianMixture>(&spec.variant)) {
        double s = 0.0;
        for (double sigma : g->bandwidths) {
            const double inv = 1.0 / (2.0 * sigma * sigma);
            s += -inv * std::exp(-sq_dist * inv);
        }
        return s / static_cast<double>(g->bandwidths.size());
    }
    if (const auto* r = std::get_if<RQMixture>(&spec.variant)) {
        double s = 0.0;
        for (double alpha : r->alphas)
            s += -0.5 * std::pow(1.0 + sq_dist / (2.0 * alpha), -alpha - 1.0);
        return s / static_cast<double>(r->alphas.size());
    }
    throw ValidationError("kernel_closed_form: no closed form for this kernel variant");
}

inline bool has_closed_form(const KernelSpec& spec) {
    return std::holds_alternative<GaussianMixture>(spec.variant) ||
           std::holds_alternative<RQMixture>(spec.variant);
}

inline bool is_samplable(const KernelSpec& spec) {
    return !std::holds_alternative<RQMixture>(spec.variant);
}

}  // namespace ikl
