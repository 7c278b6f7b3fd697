#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "ikl/adam.hpp"
#include "ikl/data.hpp"
#include "ikl/errors.hpp"
#include "ikl/features.hpp"
#include "ikl/matrix.hpp"
#include "ikl/mlp.hpp"
#include "ikl/mmd.hpp"
#include "ikl/prng.hpp"
#include "ikl/spectral.hpp"

namespace ikl {

enum class GanKernelKind { Gaussian, RQ, Sm, Ikl };

inline std::string gan_kernel_name(GanKernelKind k) {
    switch (k) {
        case GanKernelKind::Gaussian: return "gaussian";
        case GanKernelKind::RQ: return "rq";
        case GanKernelKind::Sm: return "sm";
        default: return "ikl";
    }
}

struct GanConfig {
    double eta = 5e-4;        // Adam learning rate for generator and critic
    double eta_sampler = -1;  // sampler learning rate; < 0 means use eta
    std::size_t batch = 64;         // B
    std::size_t critic_steps = 5;   // n_c critic/sampler updates per generator update
    std::size_t features = 1024;    // m, resampled every step
    double lambda_gp = 10.0;
    double lambda_h = 10.0;
    double target_u = 1.0;
    std::size_t iters = 5000;
    std::size_t latent_dim = 8;
    std::vector<std::size_t> gen_hidden = {64, 64};
    std::vector<std::size_t> critic_hidden = {64, 64};
    std::size_t embed_dim = 16;
    std::vector<std::size_t> sampler_hidden = {32, 32};

    GanKernelKind kernel = GanKernelKind::Ikl;
    // Bandwidths for the fixed Gaussian / SM init; for a multi-component IKL
    // kernel one sampler per sigma is kept with per-component target 1/sigma.
    std::vector<double> kernel_sigmas = {1.0};
    std::vector<double> kernel_alphas = {0.2, 0.5, 1.0, 2.0, 5.0};
    bool unbiased_loop = false;  // U-statistic MMD inside the training loop
    bool variance_match_init = true;

    std::size_t eval_every = 100;
    std::size_t eval_samples = 1000;
    double mode_radius = 0.25;
    std::vector<double> ref_sigmas = {0.1, 0.5, 1.0, 2.0};

    void validate() const {
        if (batch < 2 || critic_steps < 1 || features < 1 || latent_dim < 1 || embed_dim < 1 ||
            eval_every < 1 || eval_samples < 2 || eta <= 0.0)
            throw ConfigError("gan config: counts and learning rate must be positive");
        if (lambda_gp < 0.0 || lambda_h < 0.0 || target_u <= 0.0 || mode_radius <= 0.0)
            throw ConfigError("gan config: penalties must be >= 0 and targets positive");
        if (kernel == GanKernelKind::Ikl || kernel == GanKernelKind::Gaussian ||
            kernel == GanKernelKind::Sm) {
            if (kernel_sigmas.empty()) throw ConfigError("gan config: empty sigma list");
            for (double s : kernel_sigmas)
                if (s <= 0.0) throw ConfigError("gan config: sigma must be positive");
        }
    }
};

struct GanLogRow {
    std::size_t iter = 0;
    double ref_mmd = 0.0;
    double variance_hat = 0.0;
    std::size_t modes_covered = 0;
};

struct GanState {
    GanConfig cfg;
    Mlp generator;
    Mlp critic;
    std::vector<SpectralSampler> samplers;  // ikl components; empty otherwise
    std::vector<double> u_targets;          // per ikl component
    SmSampler sm;                           // used when cfg.kernel == Sm
    KernelSpec fixed_kernel = KernelSpec::gaussian({1.0});
    AdamState adam_gen{0};
    AdamState adam_critic{0};
    AdamState adam_sampler{0};
    std::size_t iter = 0;
    std::vector<GanLogRow> log;

    bool has_sampler_params() const {
        return cfg.kernel == GanKernelKind::Ikl || cfg.kernel == GanKernelKind::Sm;
    }

    std::vector<double> sampler_param_vector() const {
        if (cfg.kernel == GanKernelKind::Sm) return sampler_params(sm);
        std::vector<double> p;
        for (const auto& s : samplers) {
            const auto q = sampler_params(s);
            p.insert(p.end(), q.begin(), q.end());
        }
        return p;
    }

    void set_sampler_param_vector(const std::vector<double>& p) {
        if (cfg.kernel == GanKernelKind::Sm) {
            sampler_set_params(sm, p);
            return;
        }
        std::size_t pos = 0;
        for (auto& s : samplers) {
            const std::size_t n = s.net.param_count();
            std::vector<double> q(p.begin() + pos, p.begin() + pos + n);
            sampler_set_params(s, q);
            pos += n;
        }
    }
};

// ---------------------------------------------------------------------------
// Embedding-space MMD with gradients. Feature path for sampled frequencies,
// Gram path for closed-form base kernels. Both return the estimate plus
// d/d(embeddings); the feature path also returns d/d(frequencies).
// ---------------------------------------------------------------------------

struct MmdGrads {
    double value = 0.0;
    DenseMatrix d_ex, d_ey;  // gradients w.r.t. the two embedding batches
    DenseMatrix d_omega;     // feature path only
};

namespace detail {

// With phi(e) = (1/sqrt(m)) [cos(w_j.e), sin(w_j.e)]_j and S = sum_i phi(e_i),
// both estimators are functions of (S_x, S_y) only (self terms are constant),
// so one pair of coefficient vectors drives every gradient.
inline MmdGrads feature_mmd_grads(const DenseMatrix& ex, const DenseMatrix& ey,
                                  const DenseMatrix& omegas, bool unbiased) {
    const std::size_t n = ex.rows(), np = ey.rows(), m = omegas.rows();
    if (ex.cols() != omegas.cols() || ey.cols() != omegas.cols())
        throw DimensionError("feature_mmd_grads: embedding/frequency dims differ");
    if (unbiased && (n < 2 || np < 2))
        throw ValidationError("feature_mmd_grads: need >= 2 samples per side");
    const double nd = static_cast<double>(n), md = static_cast<double>(np);
    const double scale = 1.0 / std::sqrt(static_cast<double>(m));

    const DenseMatrix px = matmul_abt(ex, omegas);  // n x m
    const DenseMatrix py = matmul_abt(ey, omegas);
    DenseMatrix cx(n, m), sx(n, m), cy(np, m), sy(np, m);
    for (std::size_t i = 0; i < px.size(); ++i) {
        cx.data()[i] = scale * std::cos(px.data()[i]);
        sx.data()[i] = scale * std::sin(px.data()[i]);
    }
    for (std::size_t i = 0; i < py.size(); ++i) {
        cy.data()[i] = scale * std::cos(py.data()[i]);
        sy.data()[i] = scale * std::sin(py.data()[i]);
    }

    std::vector<double> sum_x(2 * m, 0.0), sum_y(2 * m, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            sum_x[2 * j] += cx(i, j);
            sum_x[2 * j + 1] += sx(i, j);
        }
    for (std::size_t i = 0; i < np; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            sum_y[2 * j] += cy(i, j);
            sum_y[2 * j + 1] += sy(i, j);
        }

    MmdGrads out;
    std::vector<double> gx(2 * m), gy(2 * m);  // dV/dS_x, dV/dS_y
    if (unbiased) {
        double self_x = 0.0, self_y = 0.0;
        for (std::size_t i = 0; i < cx.size(); ++i)
            self_x += cx.data()[i] * cx.data()[i] + sx.data()[i] * sx.data()[i];
        for (std::size_t i = 0; i < cy.size(); ++i)
            self_y += cy.data()[i] * cy.data()[i] + sy.data()[i] * sy.data()[i];
        out.value = (squared_norm(sum_x) - self_x) / (nd * (nd - 1.0)) -
                    2.0 * dot(sum_x, sum_y) / (nd * md) +
                    (squared_norm(sum_y) - self_y) / (md * (md - 1.0));
        for (std::size_t j = 0; j < 2 * m; ++j) {
            gx[j] = 2.0 * sum_x[j] / (nd * (nd - 1.0)) - 2.0 * sum_y[j] / (nd * md);
            gy[j] = 2.0 * sum_y[j] / (md * (md - 1.0)) - 2.0 * sum_x[j] / (nd * md);
        }
    } else {
        double v = 0.0;
        for (std::size_t j = 0; j < 2 * m; ++j) {
            const double d = sum_x[j] / nd - sum_y[j] / md;
            v += d * d;
            gx[j] = 2.0 * d / nd;
            gy[j] = -2.0 * d / md;
        }
        out.value = v;
    }

    // A[i][j] = -g_cos[j] sin(theta_ij) + g_sin[j] cos(theta_ij) (already
    // carrying the 1/sqrt(m) through the stored cos/sin); then
    // dV/dE = A Omega and dV/dOmega = A_x^T E_x + A_y^T E_y.
    DenseMatrix ax(n, m), ay(np, m);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j)
            ax(i, j) = -gx[2 * j] * sx(i, j) + gx[2 * j + 1] * cx(i, j);
    for (std::size_t i = 0; i < np; ++i)
        for (std::size_t j = 0; j < m; ++j)
            ay(i, j) = -gy[2 * j] * sy(i, j) + gy[2 * j + 1] * cy(i, j);

    out.d_ex = matmul(ax, omegas);
    out.d_ey = matmul(ay, omegas);
    out.d_omega = matmul_atb(ax, ex);
    const DenseMatrix oy = matmul_atb(ay, ey);
    for (std::size_t i = 0; i < out.d_omega.size(); ++i) out.d_omega.data()[i] += oy.data()[i];
    return out;
}

inline MmdGrads gram_mmd_grads(const KernelSpec& spec, const DenseMatrix& ex,
                               const DenseMatrix& ey, bool unbiased) {
    const std::size_t n = ex.rows(), np = ey.rows(), d = ex.cols();
    if (ey.cols() != d) throw DimensionError("gram_mmd_grads: embedding dims differ");
    if (unbiased && (n < 2 || np < 2))
        throw ValidationError("gram_mmd_grads: need >= 2 samples per side");
    const double nd = static_cast<double>(n), md = static_cast<double>(np);

    MmdGrads out;
    out.d_ex = DenseMatrix(n, d);
    out.d_ey = DenseMatrix(np, d);
    const double wxx = unbiased ? 1.0 / (nd * (nd - 1.0)) : 1.0 / (nd * nd);
    const double wyy = unbiased ? 1.0 / (md * (md - 1.0)) : 1.0 / (md * md);
    const double wxy = 2.0 / (nd * md);

    auto accumulate = [&](const DenseMatrix& a, const DenseMatrix& b, DenseMatrix& da,
                          DenseMatrix& db, double w, bool skip_diag, double sign) {
        double total = 0.0;
        for (std::size_t i = 0; i < a.rows(); ++i) {
            const double* ai = a.row(i);
            for (std::size_t j = 0; j < b.rows(); ++j) {
                if (skip_diag && i == j) continue;
                const double* bj = b.row(j);
                double sq = 0.0;
                for (std::size_t c = 0; c < d; ++c) {
                    const double dd = ai[c] - bj[c];
                    sq += dd * dd;
                }
                total += kernel_closed_form_sq(spec, sq);
                const double gs = sign * w * 2.0 * kernel_closed_form_sq_grad(spec, sq);
                for (std::size_t c = 0; c < d; ++c) {
                    const double dd = ai[c] - bj[c];
                    da(i, c) += gs * dd;
                    db(j, c) -= gs * dd;
                }
            }
        }
        return sign * w * total;
    };

    out.value = accumulate(ex, ex, out.d_ex, out.d_ex, wxx, unbiased, 1.0);
    out.value += accumulate(ey, ey, out.d_ey, out.d_ey, wyy, unbiased, 1.0);
    out.value += accumulate(ex, ey, out.d_ex, out.d_ey, wxy, false, -1.0);
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Objectives of Algorithm-style alternation:
//   critic/sampler maximize  L = MMD(f(X), f(g(Z))) - GP - VP
//   generator minimizes      MMD(f(X), f(g(Z)))
// ---------------------------------------------------------------------------

struct CriticEval {
    double objective = 0.0;
    double mmd = 0.0;
    double gp_value = 0.0;
    double vp_value = 0.0;
    std::vector<double> grad_critic;
    std::vector<double> grad_sampler;
};

struct GeneratorEval {
    double mmd = 0.0;
    std::vector<double> grad_generator;
};

namespace detail {

// Evenly partition m rows across q components (first blocks get the extras).
inline std::vector<std::size_t> block_counts(std::size_t m, std::size_t q) {
    std::vector<std::size_t> counts(q, m / q);
    for (std::size_t i = 0; i < m % q; ++i) counts[i] += 1;
    return counts;
}

inline DenseMatrix take_rows(const DenseMatrix& m, std::size_t begin, std::size_t count) {
    DenseMatrix out(count, m.cols());
    std::copy(m.row(begin), m.row(begin) + count * m.cols(), out.data().begin());
    return out;
}

// Map the per-component nu blocks through the samplers into one frequency
// matrix; equal block sizes make the concatenation the equal-weight mixture.
inline DenseMatrix gan_frequencies(const GanState& state, const DenseMatrix& nu) {
    if (state.cfg.kernel == GanKernelKind::Sm) return sampler_map_raw(state.sm, nu);
    const auto counts = block_counts(nu.rows(), state.samplers.size());
    DenseMatrix om(nu.rows(), nu.cols());
    std::size_t row = 0;
    for (std::size_t q = 0; q < state.samplers.size(); ++q) {
        const DenseMatrix block = take_rows(nu, row, counts[q]);
        const DenseMatrix mapped = sampler_map_raw(state.samplers[q], block);
        std::copy(mapped.data().begin(), mapped.data().end(), om.row(row));
        row += counts[q];
    }
    return om;
}

// Chain d/d omega back to the sampler parameter vector.
inline std::vector<double> gan_sampler_vjp(const GanState& state, const DenseMatrix& nu,
                                           const DenseMatrix& d_omega) {
    if (state.cfg.kernel == GanKernelKind::Sm) return sampler_vjp(state.sm, nu, d_omega);
    const auto counts = block_counts(nu.rows(), state.samplers.size());
    std::vector<double> grad;
    std::size_t row = 0;
    for (std::size_t q = 0; q < state.samplers.size(); ++q) {
        const DenseMatrix block = take_rows(nu, row, counts[q]);
        const DenseMatrix up = take_rows(d_omega, row, counts[q]);
        const auto g = sampler_vjp(state.samplers[q], block, up);
        grad.insert(grad.end(), g.begin(), g.end());
        row += counts[q];
    }
    return grad;
}

// Variance penalty summed over ikl components, each against its own target.
inline PenaltyResult gan_variance_penalty(const GanState& state, const DenseMatrix& nu) {
    if (state.cfg.kernel == GanKernelKind::Sm)
        return variance_penalty(state.sm, nu, state.cfg.lambda_h, state.cfg.target_u);
    PenaltyResult total;
    const auto counts = block_counts(nu.rows(), state.samplers.size());
    std::size_t row = 0;
    double second_acc = 0.0;
    for (std::size_t q = 0; q < state.samplers.size(); ++q) {
        const DenseMatrix block = take_rows(nu, row, counts[q]);
        const PenaltyResult r =
            variance_penalty(state.samplers[q], block, state.cfg.lambda_h, state.u_targets[q]);
        total.value += r.value;
        total.grad.insert(total.grad.end(), r.grad.begin(), r.grad.end());
        second_acc += r.second_moment * static_cast<double>(counts[q]);
        row += counts[q];
    }
    total.second_moment = second_acc / static_cast<double>(nu.rows());
    return total;
}

inline MmdGrads gan_mmd_grads(const GanState& state, const DenseMatrix& e_real,
                              const DenseMatrix& e_fake, const DenseMatrix& nu) {
    if (state.cfg.kernel == GanKernelKind::Gaussian || state.cfg.kernel == GanKernelKind::RQ)
        return gram_mmd_grads(state.fixed_kernel, e_real, e_fake, state.cfg.unbiased_loop);
    const DenseMatrix om = gan_frequencies(state, nu);
    return feature_mmd_grads(e_real, e_fake, om, state.cfg.unbiased_loop);
}

}  // namespace detail

inline CriticEval critic_objective(const GanState& state, const DenseMatrix& x_real,
                                   const DenseMatrix& z, const DenseMatrix& nu,
                                   const std::vector<double>& gp_eps) {
    const GanConfig& cfg = state.cfg;
    if (x_real.rows() != z.rows()) throw DimensionError("critic_objective: batch sizes differ");
    if (z.cols() != cfg.latent_dim) throw DimensionError("critic_objective: latent dim mismatch");

    const DenseMatrix x_fake = mlp_forward(state.generator, z);
    const DenseMatrix e_real = mlp_forward(state.critic, x_real);
    const DenseMatrix e_fake = mlp_forward(state.critic, x_fake);

    const MmdGrads mg = detail::gan_mmd_grads(state, e_real, e_fake, nu);

    CriticEval out;
    out.mmd = mg.value;

    // MMD gradient into the critic parameters through both embedding batches.
    const MlpGrads brc_real = mlp_backprop(state.critic, x_real, mg.d_ex);
    const MlpGrads brc_fake = mlp_backprop(state.critic, x_fake, mg.d_ey);
    out.grad_critic = brc_real.flatten();
    const auto fake_flat = brc_fake.flatten();
    for (std::size_t i = 0; i < out.grad_critic.size(); ++i) out.grad_critic[i] += fake_flat[i];

    if (cfg.lambda_gp > 0.0) {
        const PenaltyResult gp =
            gradient_penalty(state.critic, x_real, x_fake, gp_eps, cfg.lambda_gp);
        out.gp_value = gp.value;
        for (std::size_t i = 0; i < out.grad_critic.size(); ++i)
            out.grad_critic[i] -= gp.grad[i];
    }

    if (state.has_sampler_params()) {
        out.grad_sampler = detail::gan_sampler_vjp(state, nu, mg.d_omega);
        if (cfg.lambda_h > 0.0) {
            const PenaltyResult vp = detail::gan_variance_penalty(state, nu);
            out.vp_value = vp.value;
            for (std::size_t i = 0; i < out.grad_sampler.size(); ++i)
                out.grad_sampler[i] -= vp.grad[i];
        }
    }

    out.objective = out.mmd - out.gp_value - out.vp_value;
    return out;
}

inline GeneratorEval generator_objective(const GanState& state, const DenseMatrix& z,
                                         const DenseMatrix& nu, const DenseMatrix& x_real) {
    const DenseMatrix x_fake = mlp_forward(state.generator, z);
    const DenseMatrix e_real = mlp_forward(state.critic, x_real);
    const DenseMatrix e_fake = mlp_forward(state.critic, x_fake);

    const MmdGrads mg = detail::gan_mmd_grads(state, e_real, e_fake, nu);

    GeneratorEval out;
    out.mmd = mg.value;
    // psi and phi held fixed: flow d/d e_fake through the critic to the fake
    // points, then through the generator.
    const DenseMatrix d_fake = mlp_backprop(state.critic, x_fake, mg.d_ey).inputs;
    out.grad_generator = mlp_backprop(state.generator, z, d_fake).flatten();
    return out;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

using DataSource = std::function<DenseMatrix(Prng&, std::size_t)>;

inline std::size_t eval_mode_coverage(const DenseMatrix& samples, const DenseMatrix& centers,
                                      double radius) {
    if (centers.rows() == 0) throw ValidationError("eval_mode_coverage: no centers");
    if (radius <= 0.0) throw ValidationError("eval_mode_coverage: radius must be positive");
    std::size_t covered = 0;
    for (std::size_t k = 0; k < centers.rows(); ++k) {
        const double* c = centers.row(k);
        bool hit = false;
        for (std::size_t i = 0; i < samples.rows() && !hit; ++i) {
            const double* s = samples.row(i);
            double sq = 0.0;
            for (std::size_t j = 0; j < centers.cols(); ++j) {
                const double d = s[j] - c[j];
                sq += d * d;
            }
            hit = sq <= radius * radius;
        }
        if (hit) ++covered;
    }
    return covered;
}

inline GanState init_gan(const GanConfig& cfg, std::size_t data_dim, Prng& prng) {
    cfg.validate();
    GanState st;
    st.cfg = cfg;

    std::vector<std::size_t> gen_dims{cfg.latent_dim};
    gen_dims.insert(gen_dims.end(), cfg.gen_hidden.begin(), cfg.gen_hidden.end());
    gen_dims.push_back(data_dim);
    st.generator = make_mlp(gen_dims, prng.split("gen-init"));

    std::vector<std::size_t> critic_dims{data_dim};
    critic_dims.insert(critic_dims.end(), cfg.critic_hidden.begin(), cfg.critic_hidden.end());
    critic_dims.push_back(cfg.embed_dim);
    st.critic = make_mlp(critic_dims, prng.split("critic-init"));

    if (cfg.kernel == GanKernelKind::Ikl) {
        const std::size_t q = cfg.kernel_sigmas.size();
        for (std::size_t c = 0; c < q; ++c) {
            SpectralSampler s = make_sampler(cfg.embed_dim, cfg.sampler_hidden,
                                             prng.split("sampler-init/" + std::to_string(c)));
            const double u = q == 1 ? cfg.target_u : 1.0 / cfg.kernel_sigmas[c];
            if (cfg.variance_match_init) {
                // Rescale the last layer so the initial second moment sits on
                // the constraint target.
                Prng probe = prng.split("sampler-match/" + std::to_string(c));
                const DenseMatrix nu = sample_base(probe, 2048, cfg.embed_dim);
                const DenseMatrix om = sampler_map_raw(s, nu);
                double second = 0.0;
                for (double v : om.data()) second += v * v;
                second /= static_cast<double>(om.rows());
                if (second > 0.0) {
                    const double scale = std::sqrt(u / second);
                    for (double& v : s.net.layers.back().w.data()) v *= scale;
                }
            }
            st.u_targets.push_back(u);
            st.samplers.push_back(std::move(s));
        }
    } else if (cfg.kernel == GanKernelKind::Sm) {
        const std::size_t q = cfg.kernel_sigmas.size();
        st.sm.means = DenseMatrix(q, cfg.embed_dim);
        st.sm.stddevs = DenseMatrix(q, cfg.embed_dim);
        for (std::size_t c = 0; c < q; ++c)
            for (std::size_t j = 0; j < cfg.embed_dim; ++j)
                st.sm.stddevs(c, j) = 1.0 / cfg.kernel_sigmas[c];
        st.sm.weights.assign(q, 1.0 / static_cast<double>(q));
    } else if (cfg.kernel == GanKernelKind::Gaussian) {
        st.fixed_kernel = KernelSpec::gaussian(cfg.kernel_sigmas);
    } else {
        st.fixed_kernel = KernelSpec::rq(cfg.kernel_alphas);
    }

    st.adam_gen = AdamState(mlp_flatten(st.generator).size(), cfg.eta);
    st.adam_critic = AdamState(mlp_flatten(st.critic).size(), cfg.eta);
    st.adam_sampler = AdamState(st.sampler_param_vector().size(),
                                cfg.eta_sampler > 0.0 ? cfg.eta_sampler : cfg.eta);
    return st;
}

// One ascent step on (psi, phi). Generator parameters are never touched.
inline CriticEval critic_step(GanState& state, const DenseMatrix& x_real, const DenseMatrix& z,
                              const DenseMatrix& nu, const std::vector<double>& gp_eps) {
    CriticEval ev = critic_objective(state, x_real, z, nu, gp_eps);
    std::vector<double> params = mlp_flatten(state.critic);
    std::vector<double> grad = ev.grad_critic;
    for (double& g : grad) g = -g;  // maximize L
    adam_step(state.adam_critic, params, grad);
    mlp_unflatten(state.critic, params);

    if (!ev.grad_sampler.empty()) {
        std::vector<double> sp = state.sampler_param_vector();
        std::vector<double> sg = ev.grad_sampler;
        for (double& g : sg) g = -g;
        adam_step(state.adam_sampler, sp, sg);
        state.set_sampler_param_vector(sp);
    }
    return ev;
}

// One descent step on theta. Critic and sampler parameters are never touched.
inline GeneratorEval generator_step(GanState& state, const DenseMatrix& z, const DenseMatrix& nu,
                                    const DenseMatrix& x_real) {
    GeneratorEval ev = generator_objective(state, z, nu, x_real);
    std::vector<double> params = mlp_flatten(state.generator);
    adam_step(state.adam_gen, params, ev.grad_generator);
    mlp_unflatten(state.generator, params);
    return ev;
}

struct GanRunResult {
    GanState state;
    bool diverged = false;
    std::string diagnostic;
    DenseMatrix final_samples;
};

namespace detail {

struct GanEvalContext {
    DenseMatrix heldout;  // reals reserved for the reference metric
    DenseMatrix eval_z;
    DenseMatrix eval_nu;
    DenseMatrix centers;
    KernelSpec ref_kernel = KernelSpec::gaussian({1.0});
};

inline GanLogRow gan_eval(const GanState& state, const GanEvalContext& ctx, std::size_t iter,
                          DenseMatrix* samples_out) {
    GanLogRow row;
    row.iter = iter;
    const DenseMatrix fakes = mlp_forward(state.generator, ctx.eval_z);
    const DenseMatrix kxx = kernel_matrix_exact(ctx.ref_kernel, ctx.heldout, ctx.heldout);
    const DenseMatrix kxy = kernel_matrix_exact(ctx.ref_kernel, ctx.heldout, fakes);
    const DenseMatrix kyy = kernel_matrix_exact(ctx.ref_kernel, fakes, fakes);
    row.ref_mmd = mmd_unbiased(kxx, kxy, kyy).value;
    row.modes_covered = eval_mode_coverage(fakes, ctx.centers, state.cfg.mode_radius);
    if (state.has_sampler_params()) {
        const DenseMatrix om = gan_frequencies(state, ctx.eval_nu);
        double second = 0.0;
        for (double v : om.data()) second += v * v;
        row.variance_hat = second / static_cast<double>(om.rows());
    } else {
        row.variance_hat = std::numeric_limits<double>::quiet_NaN();
    }
    if (samples_out) *samples_out = fakes;
    return row;
}

}  // namespace detail

// Algorithm-faithful alternation: n_c critic/sampler ascent steps per
// generator descent step, fresh data/latents/base draws everywhere. The
// reference metric uses a fixed Gaussian-mixture kernel on raw samples so it
// is independent of the learned critic.
inline GanRunResult train_gan(const GanConfig& cfg, const DataSource& data_source, Prng& prng,
                              const DenseMatrix& mode_centers) {
    cfg.validate();
    Prng data_rng = prng.split("gan/data");
    Prng latent_rng = prng.split("gan/latent");
    Prng nu_rng = prng.split("gan/nu");
    Prng gp_rng = prng.split("gan/gp");
    Prng eval_rng = prng.split("gan/eval");
    Prng init_rng = prng.split("gan/init");

    const std::size_t data_dim = mode_centers.cols();
    GanRunResult res;
    res.state = init_gan(cfg, data_dim, init_rng);
    GanState& st = res.state;

    detail::GanEvalContext ctx;
    ctx.heldout = data_source(eval_rng, cfg.eval_samples);
    ctx.eval_z = sample_base(eval_rng, cfg.eval_samples, cfg.latent_dim);
    ctx.eval_nu = sample_base(eval_rng, cfg.features, cfg.embed_dim);
    ctx.centers = mode_centers;
    ctx.ref_kernel = KernelSpec::gaussian(cfg.ref_sigmas);

    st.log.push_back(detail::gan_eval(st, ctx, 0, &res.final_samples));

    try {
        for (std::size_t it = 1; it <= cfg.iters; ++it) {
            for (std::size_t t = 0; t < cfg.critic_steps; ++t) {
                const DenseMatrix x = data_source(data_rng, cfg.batch);
                const DenseMatrix z = sample_base(latent_rng, cfg.batch, cfg.latent_dim);
                const DenseMatrix nu = sample_base(nu_rng, cfg.features, cfg.embed_dim);
                std::vector<double> eps(cfg.batch);
                for (double& e : eps) e = gp_rng.next_double();
                const CriticEval ev = critic_step(st, x, z, nu, eps);
                if (!std::isfinite(ev.objective))
                    throw NumericError("critic objective diverged at iteration " +
                                       std::to_string(it));
            }
            const DenseMatrix x = data_source(data_rng, cfg.batch);
            const DenseMatrix z = sample_base(latent_rng, cfg.batch, cfg.latent_dim);
            const DenseMatrix nu = sample_base(nu_rng, cfg.features, cfg.embed_dim);
            const GeneratorEval gev = generator_step(st, z, nu, x);
            if (!std::isfinite(gev.mmd))
                throw NumericError("generator objective diverged at iteration " +
                                   std::to_string(it));
            st.iter = it;
            if (it % cfg.eval_every == 0 || it == cfg.iters)
                st.log.push_back(detail::gan_eval(st, ctx, it, &res.final_samples));
        }
    } catch (const NumericError& e) {
        res.diverged = true;
        res.diagnostic = e.what();
        st.log.push_back(detail::gan_eval(st, ctx, st.iter, &res.final_samples));
    }
    return res;
}

}  // namespace ikl
