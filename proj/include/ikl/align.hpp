#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "ikl/adam.hpp"
#include "ikl/data.hpp"
#include "ikl/errors.hpp"
#include "ikl/matrix.hpp"
#include "ikl/prng.hpp"
#include "ikl/spectral.hpp"

namespace ikl {

struct AlignmentBatch {
    DenseMatrix x;          // B x d
    std::vector<double> y;  // +1/-1 per row
    DenseMatrix nu;         // m x d base draws

    void validate() const {
        if (x.rows() < 2) throw ValidationError("alignment: need at least 2 examples");
        if (y.size() != x.rows()) throw DimensionError("alignment: label count mismatch");
        for (double v : y)
            if (v != 1.0 && v != -1.0) throw ValidationError("alignment: labels must be +1/-1");
        if (nu.cols() != x.cols()) throw DimensionError("alignment: base draw dimension mismatch");
    }
};

namespace detail {

// Empirical alignment and, on request, its gradient w.r.t. the frequencies.
// With theta_ij = w_j . x_i and y_i^2 = 1,
//   T = 1/(B(B-1)m) * sum_j (C_j^2 + S_j^2 - B),
//   C_j = sum_i y_i cos(theta_ij),  S_j = sum_i y_i sin(theta_ij).
inline double alignment_core(const DenseMatrix& x, const std::vector<double>& y,
                             const DenseMatrix& omegas, DenseMatrix* d_omega) {
    const std::size_t B = x.rows();
    const std::size_t m = omegas.rows();
    const double bm = static_cast<double>(B) * (static_cast<double>(B) - 1.0) *
                      static_cast<double>(m);
    const DenseMatrix proj = matmul_abt(x, omegas);  // B x m

    DenseMatrix cosv(B, m), sinv(B, m);
    for (std::size_t i = 0; i < proj.size(); ++i) {
        cosv.data()[i] = std::cos(proj.data()[i]);
        sinv.data()[i] = std::sin(proj.data()[i]);
    }
    std::vector<double> cj(m, 0.0), sj(m, 0.0);
    for (std::size_t i = 0; i < B; ++i) {
        const double yi = y[i];
        const double* ci = cosv.row(i);
        const double* si = sinv.row(i);
        for (std::size_t j = 0; j < m; ++j) {
            cj[j] += yi * ci[j];
            sj[j] += yi * si[j];
        }
    }
    double t = 0.0;
    for (std::size_t j = 0; j < m; ++j)
        t += cj[j] * cj[j] + sj[j] * sj[j] - static_cast<double>(B);
    t /= bm;

    if (d_omega) {
        *d_omega = DenseMatrix(m, omegas.cols());
        // dT/dtheta_ij = (2/Bm') * y_i * (S_j cos - C_j sin), then
        // dT/dw_j = sum_i dT/dtheta_ij * x_i.
        for (std::size_t i = 0; i < B; ++i) {
            const double yi = y[i];
            const double* ci = cosv.row(i);
            const double* si = sinv.row(i);
            const double* xi = x.row(i);
            for (std::size_t j = 0; j < m; ++j) {
                const double dtheta = 2.0 * yi * (sj[j] * ci[j] - cj[j] * si[j]) / bm;
                double* dwj = d_omega->row(j);
                for (std::size_t c = 0; c < x.cols(); ++c) dwj[c] += dtheta * xi[c];
            }
        }
    }
    return t;
}

}  // namespace detail

template <typename Sampler>
double alignment_value(const AlignmentBatch& batch, const Sampler& s) {
    batch.validate();
    const DenseMatrix om = sampler_map_raw(s, batch.nu);
    return detail::alignment_core(batch.x, batch.y, om, nullptr);
}

template <typename Sampler>
std::vector<double> alignment_grad(const AlignmentBatch& batch, const Sampler& s) {
    batch.validate();
    const DenseMatrix om = sampler_map_raw(s, batch.nu);
    DenseMatrix d_omega;
    detail::alignment_core(batch.x, batch.y, om, &d_omega);
    return sampler_vjp(s, batch.nu, d_omega);
}

struct AlignTrainConfig {
    std::size_t batch_size = 64;
    std::size_t features_per_step = 64;  // m, resampled every iteration
    double learning_rate = 1e-6;
    std::size_t max_iters = 3000;
    std::size_t eval_every = 100;
    std::size_t patience = 5;  // evals without probe improvement before stopping
    std::size_t probe_size = 256;
    std::size_t probe_features = 1024;
    std::uint64_t seed = 0;

    void validate() const {
        if (batch_size < 2 || features_per_step < 1 || max_iters > (1u << 30) ||
            learning_rate <= 0.0 || eval_every < 1 || probe_size < 2 || probe_features < 1)
            throw ConfigError("align config: values must be positive (batch >= 2)");
    }
};

struct AlignLogRow {
    std::size_t iter = 0;
    double probe_alignment = 0.0;
    double wall_ms = 0.0;
};

template <typename Sampler>
struct AlignResult {
    Sampler sampler;
    std::vector<AlignLogRow> log;
    std::size_t iters_run = 0;
    double best_probe = 0.0;
    bool single_class_warning = false;
};

namespace detail {

inline std::vector<std::size_t> sample_indices(Prng& prng, std::size_t n, std::size_t k) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(prng.next_u64() % (n - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
}

inline void gather_rows(const LabeledDataset& d, const std::vector<std::size_t>& idx,
                        DenseMatrix& x, std::vector<double>& y) {
    x = DenseMatrix(idx.size(), d.dim());
    y.resize(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const double* src = d.x.row(idx[i]);
        std::copy(src, src + d.dim(), x.row(i));
        y[i] = d.y[idx[i]];
    }
}

}  // namespace detail

// Stage-1 alignment ascent: fresh minibatch and fresh base draws every
// iteration, Adam on the negated alignment, probe alignment logged on a
// fixed subset with a fixed base-draw batch. Early stopping restores the
// best probe parameters.
template <typename Sampler>
AlignResult<Sampler> train_alignment(const LabeledDataset& data, Sampler sampler,
                                     const AlignTrainConfig& cfg) {
    cfg.validate();
    validate_labels(data);
    const std::size_t n = data.size();
    const std::size_t d = data.dim();
    const std::size_t batch = std::min(cfg.batch_size, n);
    if (batch < 2) throw ValidationError("train_alignment: need at least 2 examples");

    AlignResult<Sampler> res;
    bool has_pos = false, has_neg = false;
    for (double v : data.y) (v > 0 ? has_pos : has_neg) = true;
    res.single_class_warning = !(has_pos && has_neg);

    Prng root(cfg.seed);
    Prng batch_rng = root.split("align/batch");
    Prng freq_rng = root.split("align/freqs");
    Prng probe_rng = root.split("align/probe");

    AlignmentBatch probe;
    detail::gather_rows(data, detail::sample_indices(probe_rng, n, std::min(cfg.probe_size, n)),
                        probe.x, probe.y);
    probe.nu = sample_base(probe_rng, cfg.probe_features, d);

    std::vector<double> params = sampler_params(sampler);
    AdamState adam(params.size(), cfg.learning_rate);

    double best = alignment_value(probe, sampler);
    std::vector<double> best_params = params;
    res.log.push_back({0, best, 0.0});
    res.best_probe = best;

    const auto t0 = std::chrono::steady_clock::now();
    std::size_t evals_since_best = 0;
    std::size_t iter = 0;
    for (; iter < cfg.max_iters; ++iter) {
        AlignmentBatch b;
        detail::gather_rows(data, detail::sample_indices(batch_rng, n, batch), b.x, b.y);
        b.nu = sample_base(freq_rng, cfg.features_per_step, d);

        std::vector<double> grad = alignment_grad(b, sampler);
        for (double& g : grad) g = -g;  // ascend
        adam_step(adam, params, grad);
        sampler_set_params(sampler, params);

        if ((iter + 1) % cfg.eval_every == 0 || iter + 1 == cfg.max_iters) {
            const double probe_val = alignment_value(probe, sampler);
            const double ms = std::chrono::duration<double, std::milli>(
                                  std::chrono::steady_clock::now() - t0)
                                  .count();
            res.log.push_back({iter + 1, probe_val, ms});
            if (probe_val > best) {
                best = probe_val;
                best_params = params;
                evals_since_best = 0;
            } else if (++evals_since_best >= cfg.patience) {
                ++iter;
                break;
            }
        }
    }
    sampler_set_params(sampler, best_params);
    res.sampler = std::move(sampler);
    res.iters_run = iter;
    res.best_probe = best;
    return res;
}

}  // namespace ikl
