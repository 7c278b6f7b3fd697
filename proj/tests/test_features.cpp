#include <gtest/gtest.h>

#include <cmath>

#include "ikl/features.hpp"

using namespace ikl;

TEST(FourierFeatures, ZeroInputRow) {
    Prng p(3);
    const FrequencyBatch fb = sample_frequencies(KernelSpec::gaussian({1.0}), p, 4, 2);
    DenseMatrix x(1, 2);
    const FeatureMap phi = fourier_features(x, fb);
    const double s = 1.0 / 2.0;  // 1/sqrt(4)
    for (std::size_t j = 0; j < 4; ++j) {
        EXPECT_DOUBLE_EQ(phi.features(0, 2 * j), s);        // cos 0
        EXPECT_DOUBLE_EQ(phi.features(0, 2 * j + 1), 0.0);  // sin 0
    }
}

TEST(FourierFeatures, RowsHaveUnitNorm) {
    Prng p(5);
    const FrequencyBatch fb = sample_frequencies(KernelSpec::gaussian({1.0, 2.0}), p, 33, 3);
    const DenseMatrix x = sample_base(p, 17, 3);
    const FeatureMap phi = fourier_features(x, fb);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double sq = 0.0;
        for (std::size_t j = 0; j < phi.features.cols(); ++j)
            sq += phi.features(i, j) * phi.features(i, j);
        EXPECT_NEAR(sq, 1.0, 1e-12);
    }
}

TEST(FourierFeatures, RejectsDimensionMismatch) {
    Prng p(6);
    const FrequencyBatch fb = sample_frequencies(KernelSpec::gaussian({1.0}), p, 4, 3);
    DenseMatrix x(2, 2);
    EXPECT_THROW(fourier_features(x, fb), DimensionError);
}

TEST(FourierFeatures, MonteCarloCloseToClosedForm) {
    // Hoeffding scale at m = 4096 keeps the gap under 0.05.
    Prng p(7);
    const KernelSpec spec = KernelSpec::gaussian({1.0});
    const FrequencyBatch fb = sample_frequencies(spec, p, 4096, 3);
    DenseMatrix x{{0.3, -0.2, 0.9}};
    DenseMatrix y{{0.3 + 1.0, -0.2, 0.9}};  // distance exactly 1
    const FeatureMap px = fourier_features(x, fb);
    const FeatureMap py = fourier_features(y, fb);
    const DenseMatrix k = kernel_matrix_approx(px, py);
    EXPECT_NEAR(k(0, 0), std::exp(-0.5), 0.05);
}

TEST(KernelMatrixApprox, SymmetricUnitDiagonal) {
    Prng p(9);
    const FrequencyBatch fb = sample_frequencies(KernelSpec::gaussian({1.0}), p, 16, 2);
    const DenseMatrix x = sample_base(p, 6, 2);
    const FeatureMap phi = fourier_features(x, fb);
    const DenseMatrix k = kernel_matrix_approx(phi, phi);
    for (std::size_t i = 0; i < 6; ++i) {
        EXPECT_NEAR(k(i, i), 1.0, 1e-12);
        for (std::size_t j = 0; j < 6; ++j) {
            EXPECT_DOUBLE_EQ(k(i, j), k(j, i));
            EXPECT_LE(std::fabs(k(i, j)), 1.0 + 1e-12);
        }
    }
}

TEST(KernelMatrixApprox, SingleZeroFrequencyGivesAllOnes) {
    FrequencyBatch fb(DenseMatrix(1, 2), "zero", 0);
    Prng p(11);
    const DenseMatrix x = sample_base(p, 4, 2);
    const DenseMatrix y = sample_base(p, 3, 2);
    const DenseMatrix k =
        kernel_matrix_approx(fourier_features(x, fb), fourier_features(y, fb));
    for (double v : k.data()) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(KernelMatrixApprox, MatchesBruteForceCosineAverage) {
    Prng p(13);
    const FrequencyBatch fb = sample_frequencies(KernelSpec::gaussian({1.0}), p, 8, 2);
    const DenseMatrix x = sample_base(p, 3, 2);
    const DenseMatrix y = sample_base(p, 3, 2);
    const DenseMatrix k =
        kernel_matrix_approx(fourier_features(x, fb), fourier_features(y, fb));
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
            double brute = 0.0;
            for (std::size_t f = 0; f < 8; ++f) {
                double t = 0.0;
                for (std::size_t c = 0; c < 2; ++c)
                    t += fb.omegas(f, c) * (x(i, c) - y(j, c));
                brute += std::cos(t);
            }
            brute /= 8.0;
            EXPECT_NEAR(k(i, j), brute, 1e-12);
        }
}

TEST(KernelMatrixApprox, RejectsMismatchedFrequencyBatches) {
    Prng p(15);
    const FrequencyBatch fa = sample_frequencies(KernelSpec::gaussian({1.0}), p, 8, 2);
    const FrequencyBatch fb = sample_frequencies(KernelSpec::gaussian({1.0}), p, 8, 2);
    const DenseMatrix x = sample_base(p, 2, 2);
    EXPECT_THROW(kernel_matrix_approx(fourier_features(x, fa), fourier_features(x, fb)),
                 ProvenanceError);
}

TEST(KernelMatrixExact, UnitDiagonalAndAnalyticOffDiagonal) {
    DenseMatrix x{{0.0, 0.0}, {1.0, 0.0}};
    const DenseMatrix k = kernel_matrix_exact(KernelSpec::gaussian({1.0}), x, x);
    EXPECT_DOUBLE_EQ(k(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(k(1, 1), 1.0);
    EXPECT_NEAR(k(0, 1), std::exp(-0.5), 1e-12);
}

TEST(KernelMatrixExact, MixtureWeightsSumToOneAtZero) {
    DenseMatrix x{{0.4, -0.3}};
    const DenseMatrix k = kernel_matrix_exact(KernelSpec::gaussian({1.0, 2.0}), x, x);
    EXPECT_DOUBLE_EQ(k(0, 0), 1.0);
}

TEST(KernelMatrixExact, RejectsImplicit) {
    DenseMatrix x(2, 2);
    const KernelSpec spec = KernelSpec::implicit(make_identity_sampler(2));
    EXPECT_THROW(kernel_matrix_exact(spec, x, x), ValidationError);
}

// Gram = Phi Phi^T is positive semidefinite by construction; quadratic forms
// can only go negative by rounding.
TEST(KernelMatrixApprox, QuadraticFormsNonNegative) {
    Prng p(17);
    const FrequencyBatch fb = sample_frequencies(KernelSpec::gaussian({1.0}), p, 32, 3);
    const DenseMatrix x = sample_base(p, 10, 3);
    const FeatureMap phi = fourier_features(x, fb);
    const DenseMatrix k = kernel_matrix_approx(phi, phi);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> v(10);
        for (double& c : v) c = p.next_normal();
        double q = 0.0;
        for (std::size_t i = 0; i < 10; ++i)
            for (std::size_t j = 0; j < 10; ++j) q += v[i] * k(i, j) * v[j];
        EXPECT_GE(q, -1e-10);
    }
}

// The feature estimate of the identity-map implicit kernel must match the
// Gaussian closed form within 3/sqrt(m).
TEST(ImplicitKernel, IdentityMapRecoversGaussian) {
    Prng p(19);
    const SpectralSampler s = make_identity_sampler(4, {8});
    Prng q = p.split("nu");
    const DenseMatrix nu = sample_base(q, 1024, 4);
    const FrequencyBatch fb = sampler_map(s, nu);
    const DenseMatrix pts = sample_base(p, 20, 4);
    const FeatureMap phi = fourier_features(pts, fb);
    const DenseMatrix kk = kernel_matrix_approx(phi, phi);
    const DenseMatrix ke = kernel_matrix_exact(KernelSpec::gaussian({1.0}), pts, pts);
    const double tol = 3.0 / std::sqrt(1024.0);
    for (std::size_t i = 0; i < kk.size(); ++i)
        EXPECT_NEAR(kk.data()[i], ke.data()[i], tol);
}
