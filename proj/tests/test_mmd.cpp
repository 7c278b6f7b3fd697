#include <gtest/gtest.h>

#include <cmath>

#include "ikl/gradcheck.hpp"
#include "ikl/mmd.hpp"

using namespace ikl;

TEST(MmdUnbiased, RepeatedPointGivesZero) {
    DenseMatrix ones(2, 2);
    for (double& v : ones.data()) v = 1.0;
    const MmdEstimate e = mmd_unbiased(ones, ones, ones);
    EXPECT_DOUBLE_EQ(e.value, 0.0);
}

TEST(MmdUnbiased, HandExpandedTwoPointCase) {
    // X = {a, b}, Y = {a, b}, k(a, b) = exp(-1/2):
    //   value = c - (1 + c) + c = c - 1
    const double c = std::exp(-0.5);
    DenseMatrix k{{1.0, c}, {c, 1.0}};
    const MmdEstimate e = mmd_unbiased(k, k, k);
    EXPECT_NEAR(e.value, c - 1.0, 1e-15);
    EXPECT_NEAR(e.value, -0.393469340287367, 1e-12);
}

TEST(MmdUnbiased, RejectsTooFewSamples) {
    DenseMatrix one(1, 1);
    DenseMatrix k22(2, 2), k12(1, 2);
    EXPECT_THROW(mmd_unbiased(one, k12, k22), ValidationError);
}

TEST(MmdUnbiased, SymmetricInArguments) {
    Prng p(3);
    const KernelSpec spec = KernelSpec::gaussian({1.0});
    const DenseMatrix x = sample_base(p, 8, 2);
    const DenseMatrix y = sample_base(p, 11, 2);
    const MmdEstimate xy = mmd_unbiased(kernel_matrix_exact(spec, x, x),
                                        kernel_matrix_exact(spec, x, y),
                                        kernel_matrix_exact(spec, y, y));
    const MmdEstimate yx = mmd_unbiased(kernel_matrix_exact(spec, y, y),
                                        kernel_matrix_exact(spec, y, x),
                                        kernel_matrix_exact(spec, x, x));
    EXPECT_NEAR(xy.value, yx.value, 1e-15);
}

TEST(MmdUnbiased, MeanNearZeroUnderNullHypothesis) {
    // P = Q: the U-statistic is exactly unbiased, so the Monte-Carlo mean
    // stays within three standard errors of zero.
    Prng p(5);
    const KernelSpec spec = KernelSpec::gaussian({1.0});
    const int trials = 300;
    std::vector<double> vals(trials);
    for (int t = 0; t < trials; ++t) {
        const DenseMatrix x = sample_base(p, 32, 2);
        const DenseMatrix y = sample_base(p, 32, 2);
        vals[t] = mmd_unbiased(kernel_matrix_exact(spec, x, x),
                               kernel_matrix_exact(spec, x, y),
                               kernel_matrix_exact(spec, y, y))
                      .value;
    }
    double mean = 0.0;
    for (double v : vals) mean += v;
    mean /= trials;
    double var = 0.0;
    for (double v : vals) var += (v - mean) * (v - mean);
    var /= (trials - 1);
    const double se = std::sqrt(var / trials);
    EXPECT_LE(std::fabs(mean), 3.0 * se);
}

TEST(MmdFromFeatures, UnbiasedMatchesGramPath) {
    Prng p(7);
    const FrequencyBatch fb = sample_frequencies(KernelSpec::gaussian({1.0}), p, 16, 3);
    const DenseMatrix x = sample_base(p, 8, 3);
    const DenseMatrix y = sample_base(p, 8, 3);
    const FeatureMap fx = fourier_features(x, fb);
    const FeatureMap fy = fourier_features(y, fb);
    const MmdEstimate fast = mmd_from_features(fx, fy, true);
    const MmdEstimate gram = mmd_unbiased(kernel_matrix_approx(fx, fx),
                                          kernel_matrix_approx(fx, fy),
                                          kernel_matrix_approx(fy, fy));
    EXPECT_NEAR(fast.value, gram.value, 1e-12);
}

TEST(MmdFromFeatures, IdenticalRowsAgreeAcrossPaths) {
    Prng p(9);
    const FrequencyBatch fb = sample_frequencies(KernelSpec::gaussian({1.0}), p, 8, 2);
    const DenseMatrix x = sample_base(p, 6, 2);
    const FeatureMap fx = fourier_features(x, fb);
    const MmdEstimate fast = mmd_from_features(fx, fx, true);
    const MmdEstimate gram = mmd_unbiased(kernel_matrix_approx(fx, fx),
                                          kernel_matrix_approx(fx, fx),
                                          kernel_matrix_approx(fx, fx));
    EXPECT_NEAR(fast.value, gram.value, 1e-12);
}

TEST(MmdFromFeatures, BiasedZeroForIdenticalMeans) {
    Prng p(11);
    const FrequencyBatch fb = sample_frequencies(KernelSpec::gaussian({1.0}), p, 8, 2);
    const DenseMatrix x = sample_base(p, 5, 2);
    const FeatureMap fx = fourier_features(x, fb);
    const MmdEstimate e = mmd_from_features(fx, fx, false);
    EXPECT_NEAR(e.value, 0.0, 1e-15);
}

TEST(MmdFromFeatures, RejectsMismatchedBatches) {
    Prng p(13);
    const FrequencyBatch fa = sample_frequencies(KernelSpec::gaussian({1.0}), p, 8, 2);
    const FrequencyBatch fb = sample_frequencies(KernelSpec::gaussian({1.0}), p, 8, 2);
    const DenseMatrix x = sample_base(p, 4, 2);
    EXPECT_THROW(
        mmd_from_features(fourier_features(x, fa), fourier_features(x, fb), true),
        ProvenanceError);
}

// --- variance penalty ------------------------------------------------------

TEST(VariancePenalty, ZeroAtTarget) {
    // Identity sampler, nu rows with |nu|^2 = u exactly.
    const SpectralSampler s = make_identity_sampler(2);
    DenseMatrix nu{{1.0, 1.0}, {-1.0, 1.0}};  // second moment = 2
    const PenaltyResult r = variance_penalty(s, nu, 10.0, 2.0);
    EXPECT_DOUBLE_EQ(r.value, 0.0);
    for (double g : r.grad) EXPECT_DOUBLE_EQ(g, 0.0);
}

TEST(VariancePenalty, IdentityLargeBatchNearDim) {
    const std::size_t d = 4;
    const SpectralSampler s = make_identity_sampler(d);
    Prng p(15);
    const DenseMatrix nu = sample_base(p, 4096, d);
    const PenaltyResult r = variance_penalty(s, nu, 10.0, 1.0);
    EXPECT_NEAR(r.second_moment, static_cast<double>(d), 0.05 * static_cast<double>(d));
    const double gap = r.second_moment - 1.0;
    EXPECT_NEAR(r.value, 10.0 * gap * gap, 1e-12);
}

TEST(VariancePenalty, GradientMatchesFiniteDifferences) {
    Prng p(17);
    SpectralSampler s = make_sampler(3, {6}, p.split("psi"));
    Prng q = p.split("nu");
    const DenseMatrix nu = sample_base(q, 12, 3);
    const PenaltyResult r = variance_penalty(s, nu, 5.0, 1.5);
    auto f = [&](const std::vector<double>& params) {
        SpectralSampler t = s;
        sampler_set_params(t, params);
        const DenseMatrix om = sampler_map_raw(t, nu);
        double second = 0.0;
        for (double v : om.data()) second += v * v;
        second /= static_cast<double>(om.rows());
        const double gap = second - 1.5;
        return 5.0 * gap * gap;
    };
    EXPECT_LE(check_gradient(f, sampler_params(s), r.grad), 1e-4);
}

TEST(VariancePenalty, RejectsEmptyBatch) {
    const SpectralSampler s = make_identity_sampler(2);
    EXPECT_THROW(variance_penalty(s, DenseMatrix(0, 2), 1.0, 1.0), ValidationError);
}

// --- gradient penalty ------------------------------------------------------

namespace {

Mlp linear_critic(const std::vector<double>& w) {
    Mlp net;
    net.layers.resize(1);
    net.layers[0].w = DenseMatrix(w.size(), 1);
    for (std::size_t i = 0; i < w.size(); ++i) net.layers[0].w(i, 0) = w[i];
    net.layers[0].b = {0.0};
    return net;
}

}  // namespace

TEST(GradientPenalty, UnitNormLinearCriticIsFree) {
    const Mlp critic = linear_critic({0.6, 0.8});  // |w| = 1
    Prng p(19);
    const DenseMatrix xr = sample_base(p, 4, 2);
    const DenseMatrix xf = sample_base(p, 4, 2);
    const PenaltyResult r = gradient_penalty(critic, xr, xf, p, 10.0);
    EXPECT_NEAR(r.value, 0.0, 1e-24);
    for (double g : r.grad) EXPECT_NEAR(g, 0.0, 1e-12);
}

TEST(GradientPenalty, NormTwoLinearCriticCostsTen) {
    const Mlp critic = linear_critic({2.0, 0.0});  // |w| = 2
    Prng p(21);
    const DenseMatrix xr = sample_base(p, 8, 2);
    const DenseMatrix xf = sample_base(p, 8, 2);
    const PenaltyResult r = gradient_penalty(critic, xr, xf, p, 10.0);
    EXPECT_NEAR(r.value, 10.0, 1e-12);
}

TEST(GradientPenalty, ParameterGradientMatchesFiniteDifferences) {
    Prng p(23);
    Mlp critic = make_mlp({2, 6, 3}, p.split("critic"));
    Prng q = p.split("data");
    const DenseMatrix xr = sample_base(q, 5, 2);
    const DenseMatrix xf = sample_base(q, 5, 2);
    std::vector<double> eps(5);
    for (double& e : eps) e = q.next_double();

    const PenaltyResult r = gradient_penalty(critic, xr, xf, eps, 10.0);
    auto f = [&](const std::vector<double>& params) {
        Mlp c = critic;
        mlp_unflatten(c, params);
        return gradient_penalty(c, xr, xf, eps, 10.0).value;
    };
    EXPECT_LE(check_gradient(f, mlp_flatten(critic), r.grad), 1e-3);
}

TEST(GradientPenalty, RejectsShapeMismatch) {
    const Mlp critic = linear_critic({1.0, 0.0});
    Prng p(25);
    const DenseMatrix xr = sample_base(p, 4, 2);
    const DenseMatrix xf = sample_base(p, 3, 2);
    EXPECT_THROW(gradient_penalty(critic, xr, xf, p, 1.0), DimensionError);
}
