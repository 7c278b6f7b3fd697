#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "ikl/align.hpp"
#include "ikl/data.hpp"
#include "ikl/errors.hpp"
#include "ikl/features.hpp"
#include "ikl/matrix.hpp"
#include "ikl/spectral.hpp"

namespace ikl {

struct TransformResult {
    FrequencyBatch freqs;
    FeatureMap features;
};

// Stage 2 feature transform: M frequencies drawn once, then the Fourier
// embedding. M is independent of the stage-1 feature count.
inline TransformResult transform_dataset(const DenseMatrix& x, const KernelSpec& source,
                                         std::size_t big_m, Prng& prng) {
    if (big_m < 1) throw ValidationError("transform_dataset: M must be >= 1");
    TransformResult r;
    r.freqs = sample_frequencies(source, prng, big_m, x.cols());
    r.features = fourier_features(x, r.freqs);
    return r;
}

inline TransformResult transform_dataset(const DenseMatrix& x, const SpectralSampler& s,
                                         std::size_t big_m, Prng& prng) {
    return transform_dataset(x, KernelSpec::implicit(s), big_m, prng);
}

inline TransformResult transform_dataset(const DenseMatrix& x, const SmSampler& s,
                                         std::size_t big_m, Prng& prng) {
    return transform_dataset(x, KernelSpec::spectral_mixture(s), big_m, prng);
}

struct LinearModel {
    std::vector<double> w;
    double bias = 0.0;
    double lambda = 0.0;
    double objective = 0.0;
    double grad_norm = 0.0;
    bool converged = false;
    std::size_t iters = 0;
};

namespace detail {

struct LogisticProblem {
    const DenseMatrix& phi;
    const std::vector<double>& y;
    double lambda;

    // params = [w..., b]; bias unregularized.
    double eval(const std::vector<double>& p, std::vector<double>* grad) const {
        const std::size_t n = phi.rows();
        const std::size_t d = phi.cols();
        const double b = p[d];
        double loss = 0.0;
        std::vector<double> resid(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double* row = phi.row(i);
            double t = b;
            for (std::size_t j = 0; j < d; ++j) t += row[j] * p[j];
            const double s = y[i] * t;
            // log(1 + exp(-s)) without overflow
            loss += s > 0.0 ? std::log1p(std::exp(-s)) : -s + std::log1p(std::exp(s));
            resid[i] = -y[i] / (1.0 + std::exp(s));
        }
        const double nd = static_cast<double>(n);
        double obj = loss / nd;
        for (std::size_t j = 0; j < d; ++j) obj += 0.5 * lambda * p[j] * p[j];
        if (grad) {
            grad->assign(d + 1, 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                const double* row = phi.row(i);
                const double r = resid[i] / nd;
                for (std::size_t j = 0; j < d; ++j) (*grad)[j] += r * row[j];
                (*grad)[d] += r;
            }
            for (std::size_t j = 0; j < d; ++j) (*grad)[j] += lambda * p[j];
        }
        return obj;
    }
};

// L-BFGS with Armijo backtracking. The logistic objective is smooth and
// strongly convex in w, so this reliably drives the gradient below tol.
inline void lbfgs_minimize(const LogisticProblem& prob, std::vector<double>& p, double tol,
                           std::size_t max_iters, double* obj_out, double* gnorm_out,
                           bool* converged, std::size_t* iters_out) {
    const std::size_t dim = p.size();
    const std::size_t hist = 10;
    std::deque<std::vector<double>> s_hist, y_hist;
    std::deque<double> rho_hist;

    std::vector<double> g(dim), g_new(dim), dir(dim), p_new(dim);
    double f = prob.eval(p, &g);
    std::size_t it = 0;
    for (; it < max_iters; ++it) {
        const double gn = std::sqrt(squared_norm(g));
        if (gn <= tol) break;

        // two-loop recursion
        dir = g;
        std::vector<double> alpha(s_hist.size());
        for (std::size_t k = s_hist.size(); k-- > 0;) {
            alpha[k] = rho_hist[k] * dot(s_hist[k], dir);
            for (std::size_t j = 0; j < dim; ++j) dir[j] -= alpha[k] * y_hist[k][j];
        }
        if (!s_hist.empty()) {
            const double gamma =
                dot(s_hist.back(), y_hist.back()) / squared_norm(y_hist.back());
            for (double& v : dir) v *= gamma;
        }
        for (std::size_t k = 0; k < s_hist.size(); ++k) {
            const double beta = rho_hist[k] * dot(y_hist[k], dir);
            for (std::size_t j = 0; j < dim; ++j) dir[j] += s_hist[k][j] * (alpha[k] - beta);
        }
        for (double& v : dir) v = -v;

        double slope = dot(g, dir);
        if (slope >= 0.0) {  // fall back to steepest descent
            for (std::size_t j = 0; j < dim; ++j) dir[j] = -g[j];
            slope = -squared_norm(g);
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
        }

        double step = 1.0;
        double f_new = f;
        bool accepted = false;
        for (int ls = 0; ls < 50; ++ls) {
            for (std::size_t j = 0; j < dim; ++j) p_new[j] = p[j] + step * dir[j];
            f_new = prob.eval(p_new, &g_new);
            if (f_new <= f + 1e-4 * step * slope) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;

        std::vector<double> s_vec(dim), y_vec(dim);
        for (std::size_t j = 0; j < dim; ++j) {
            s_vec[j] = p_new[j] - p[j];
            y_vec[j] = g_new[j] - g[j];
        }
        const double sy = dot(s_vec, y_vec);
        if (sy > 1e-12) {
            s_hist.push_back(std::move(s_vec));
            y_hist.push_back(std::move(y_vec));
            rho_hist.push_back(1.0 / sy);
            if (s_hist.size() > hist) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
        }
        p = p_new;
        g = g_new;
        f = f_new;
    }
    *obj_out = f;
    *gnorm_out = std::sqrt(squared_norm(g));
    *converged = *gnorm_out <= tol;
    *iters_out = it;
}

}  // namespace detail

// Full-batch L2-regularized logistic regression on a feature map. Converges
// to gradient norm <= 1e-6 or the iteration cap; the returned objective is
// never worse than at w = 0.
inline LinearModel fit_logistic(const FeatureMap& phi, const std::vector<double>& y, double lambda,
                                const std::vector<double>* warm_start = nullptr,
                                double tol = 1e-6, std::size_t max_iters = 1000) {
    if (lambda <= 0.0) throw ValidationError("fit_logistic: lambda must be positive");
    const std::size_t n = phi.features.rows();
    if (n < 2) throw ValidationError("fit_logistic: need at least 2 examples");
    if (y.size() != n) throw DimensionError("fit_logistic: label count mismatch");
    for (double v : y)
        if (v != 1.0 && v != -1.0) throw ValidationError("fit_logistic: labels must be +1/-1");

    const std::size_t d = phi.features.cols();
    std::vector<double> p(d + 1, 0.0);
    if (warm_start) {
        if (warm_start->size() != d + 1)
            throw DimensionError("fit_logistic: warm start length mismatch");
        p = *warm_start;
    }
    detail::LogisticProblem prob{phi.features, y, lambda};

    LinearModel model;
    model.lambda = lambda;
    detail::lbfgs_minimize(prob, p, tol, max_iters, &model.objective, &model.grad_norm,
                           &model.converged, &model.iters);
    model.w.assign(p.begin(), p.begin() + d);
    model.bias = p[d];
    return model;
}

inline double predict_score(const LinearModel& model, const double* features, std::size_t d) {
    if (d != model.w.size()) throw DimensionError("predict: feature dimension mismatch");
    double t = model.bias;
    for (std::size_t j = 0; j < d; ++j) t += model.w[j] * features[j];
    return t;
}

inline double evaluate(const LinearModel& model, const FeatureMap& phi,
                       const std::vector<double>& y) {
    const std::size_t n = phi.features.rows();
    if (y.size() != n) throw DimensionError("evaluate: label count mismatch");
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double score = predict_score(model, phi.features.row(i), phi.features.cols());
        const double pred = score < 0.0 ? -1.0 : 1.0;
        if (pred != y[i]) ++wrong;
    }
    return static_cast<double>(wrong) / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// End-to-end two-stage pipeline
// ---------------------------------------------------------------------------

enum class RksMethod { Rff, Ikl, Sm };

inline std::string method_name(RksMethod m) {
    switch (m) {
        case RksMethod::Rff: return "rff";
        case RksMethod::Ikl: return "ikl";
        default: return "sm";
    }
}

struct PipelineConfig {
    RksMethod method = RksMethod::Rff;
    std::size_t big_m = 256;                     // stage-2 feature count M
    std::vector<double> lambda_grid = {1e-4, 1e-3, 1e-2, 1e-1, 1.0};
    std::size_t cv_folds = 3;
    double rff_sigma = 1.0;
    std::vector<std::size_t> ikl_hidden = {32, 32};
    bool ikl_identity_init = true;
    std::size_t sm_components = 4;
    AlignTrainConfig align;
    bool standardize = false;
    std::uint64_t seed = 0;
};

struct PipelineReport {
    std::string method;
    std::size_t dim = 0;
    std::size_t big_m = 0;
    std::uint64_t seed = 0;
    double test_error = 0.0;
    double val_error = 0.0;
    double chosen_lambda = 0.0;
    std::size_t stage1_iters = 0;
    double stage1_probe_alignment = 0.0;
};

namespace detail {

struct Standardizer {
    std::vector<double> mean, scale;

    static Standardizer fit(const DenseMatrix& x) {
        Standardizer s;
        s.mean.assign(x.cols(), 0.0);
        s.scale.assign(x.cols(), 1.0);
        for (std::size_t i = 0; i < x.rows(); ++i)
            for (std::size_t j = 0; j < x.cols(); ++j) s.mean[j] += x(i, j);
        for (double& v : s.mean) v /= static_cast<double>(x.rows());
        std::vector<double> var(x.cols(), 0.0);
        for (std::size_t i = 0; i < x.rows(); ++i)
            for (std::size_t j = 0; j < x.cols(); ++j) {
                const double c = x(i, j) - s.mean[j];
                var[j] += c * c;
            }
        for (std::size_t j = 0; j < x.cols(); ++j) {
            var[j] /= static_cast<double>(x.rows());
            s.scale[j] = var[j] > 0.0 ? 1.0 / std::sqrt(var[j]) : 1.0;
        }
        return s;
    }

    DenseMatrix apply(const DenseMatrix& x) const {
        DenseMatrix out = x;
        for (std::size_t i = 0; i < out.rows(); ++i)
            for (std::size_t j = 0; j < out.cols(); ++j)
                out(i, j) = (out(i, j) - mean[j]) * scale[j];
        return out;
    }
};

inline FeatureMap slice_rows(const FeatureMap& phi, const std::vector<std::size_t>& idx) {
    FeatureMap out;
    out.features = DenseMatrix(idx.size(), phi.features.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const double* src = phi.features.row(idx[i]);
        std::copy(src, src + phi.features.cols(), out.features.row(i));
    }
    out.frequency_fingerprint = phi.frequency_fingerprint;
    out.frequency_count = phi.frequency_count;
    return out;
}

// Mean validation error over k contiguous folds of a fixed shuffle.
inline double cv_error(const FeatureMap& phi, const std::vector<double>& y, double lambda,
                       const std::vector<std::vector<std::size_t>>& folds) {
    double err = 0.0;
    for (const auto& holdout : folds) {
        std::vector<char> held(y.size(), 0);
        for (std::size_t i : holdout) held[i] = 1;
        std::vector<std::size_t> rest;
        rest.reserve(y.size() - holdout.size());
        for (std::size_t i = 0; i < y.size(); ++i)
            if (!held[i]) rest.push_back(i);

        FeatureMap phi_tr = slice_rows(phi, rest);
        FeatureMap phi_ho = slice_rows(phi, holdout);
        std::vector<double> y_tr, y_ho;
        for (std::size_t i : rest) y_tr.push_back(y[i]);
        for (std::size_t i : holdout) y_ho.push_back(y[i]);

        const LinearModel m = fit_logistic(phi_tr, y_tr, lambda);
        err += evaluate(m, phi_ho, y_ho);
    }
    return err / static_cast<double>(folds.size());
}

}  // namespace detail

struct PipelineArtifacts {
    KernelSpec stage2_source = KernelSpec::gaussian({1.0});
    TransformResult train_transform;
    LinearModel model;
};

// Stage 1 (alignment, skipped for the fixed-kernel baseline), stage 2
// (transform + logistic fit with lambda chosen by k-fold CV on train).
inline PipelineReport run_pipeline(const LabeledDataset& train, const LabeledDataset& val,
                                   const LabeledDataset& test, const PipelineConfig& cfg,
                                   PipelineArtifacts* artifacts = nullptr) {
    validate_labels(train);
    validate_labels(val);
    validate_labels(test);
    if (train.dim() != val.dim() || train.dim() != test.dim())
        throw DimensionError("run_pipeline: split dimensions differ");

    const std::size_t d = train.dim();
    Prng root(cfg.seed);

    DenseMatrix xtr = train.x, xva = val.x, xte = test.x;
    if (cfg.standardize) {
        const auto st = detail::Standardizer::fit(train.x);
        xtr = st.apply(train.x);
        xva = st.apply(val.x);
        xte = st.apply(test.x);
    }
    LabeledDataset tr{xtr, train.y, "train"};

    PipelineReport rep;
    rep.method = method_name(cfg.method);
    rep.dim = d;
    rep.big_m = cfg.big_m;
    rep.seed = cfg.seed;

    // stage 1
    KernelSpec stage2_source = KernelSpec::gaussian({cfg.rff_sigma});
    if (cfg.method == RksMethod::Ikl) {
        AlignTrainConfig acfg = cfg.align;
        acfg.seed = root.split("stage1").seed();
        SpectralSampler init = cfg.ikl_identity_init
                                   ? make_identity_sampler(d, cfg.ikl_hidden)
                                   : make_sampler(d, cfg.ikl_hidden, root.split("sampler-init"));
        auto trained = train_alignment(tr, std::move(init), acfg);
        rep.stage1_iters = trained.iters_run;
        rep.stage1_probe_alignment = trained.best_probe;
        stage2_source = KernelSpec::implicit(std::move(trained.sampler));
    } else if (cfg.method == RksMethod::Sm) {
        AlignTrainConfig acfg = cfg.align;
        acfg.seed = root.split("stage1").seed();
        SmSampler init;
        init.means = DenseMatrix(cfg.sm_components, d);
        init.stddevs = DenseMatrix(cfg.sm_components, d);
        // log-spaced bandwidths around 1 so components can specialize
        for (std::size_t q = 0; q < cfg.sm_components; ++q) {
            const double s = std::pow(
                2.0, static_cast<double>(q) - static_cast<double>(cfg.sm_components - 1) / 2.0);
            for (std::size_t j = 0; j < d; ++j) init.stddevs(q, j) = s;
        }
        init.weights.assign(cfg.sm_components, 1.0 / static_cast<double>(cfg.sm_components));
        auto trained = train_alignment(tr, std::move(init), acfg);
        rep.stage1_iters = trained.iters_run;
        rep.stage1_probe_alignment = trained.best_probe;
        stage2_source = KernelSpec::spectral_mixture(std::move(trained.sampler));
    }

    // stage 2
    Prng stage2_rng = root.split("stage2");
    const TransformResult ttr = transform_dataset(xtr, stage2_source, cfg.big_m, stage2_rng);
    const FeatureMap phi_val = fourier_features(xva, ttr.freqs);
    const FeatureMap phi_test = fourier_features(xte, ttr.freqs);

    // lambda by k-fold CV on train (ties favor the smaller lambda)
    Prng cv_rng = root.split("cv");
    std::vector<std::size_t> perm =
        detail::sample_indices(cv_rng, train.size(), train.size());
    std::vector<std::vector<std::size_t>> folds(cfg.cv_folds);
    for (std::size_t i = 0; i < perm.size(); ++i) folds[i % cfg.cv_folds].push_back(perm[i]);

    double best_lambda = cfg.lambda_grid.front();
    double best_err = 2.0;
    for (double lambda : cfg.lambda_grid) {
        const double err = detail::cv_error(ttr.features, train.y, lambda, folds);
        if (err < best_err) {
            best_err = err;
            best_lambda = lambda;
        }
    }
    rep.chosen_lambda = best_lambda;

    const LinearModel model = fit_logistic(ttr.features, train.y, best_lambda);
    rep.val_error = evaluate(model, phi_val, val.y);
    rep.test_error = evaluate(model, phi_test, test.y);
    if (artifacts) {
        artifacts->stage2_source = std::move(stage2_source);
        artifacts->train_transform = ttr;
        artifacts->model = model;
    }
    return rep;
}

}  // namespace ikl
