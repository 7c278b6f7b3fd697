#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "ikl/data.hpp"
#include "ikl/serialize.hpp"

using namespace ikl;

namespace {

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("ikl_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST(NormSphere, OriginIsNegative) {
    double x[3] = {0.0, 0.0, 0.0};
    EXPECT_DOUBLE_EQ(norm_sphere_label(x, 3), -1.0);
}

TEST(NormSphere, BoundaryTiesGoPositive) {
    double x[1] = {1.0};  // |x| = sqrt(1) exactly
    EXPECT_DOUBLE_EQ(norm_sphere_label(x, 1), 1.0);
}

TEST(NormSphere, PositiveRateMatchesChiSquaredTail) {
    // P(chi^2_8 > 8) = 0.43347012 (exact tail); 3 sigma of the MC estimate
    // at n = 20000 is about 0.0105.
    Prng p(31);
    const LabeledDataset d = gen_norm_sphere(20000, 8, p);
    double pos = 0.0;
    for (double y : d.y) pos += y > 0 ? 1.0 : 0.0;
    pos /= static_cast<double>(d.size());
    EXPECT_NEAR(pos, 0.43347012, 0.0105);
}

TEST(NormSphere, RoughClassBalanceAtModerateDim) {
    // The chi^2_d median approaches d from below; at d = 16 the positive
    // rate is 0.45296, inside five points of an even split.
    Prng p(33);
    const LabeledDataset d = gen_norm_sphere(20000, 16, p);
    double pos = 0.0;
    for (double y : d.y) pos += y > 0 ? 1.0 : 0.0;
    pos /= static_cast<double>(d.size());
    EXPECT_NEAR(pos, 0.5, 0.05);
}

TEST(NormSphere, DeterministicPerSeed) {
    Prng a(5), b(5);
    const LabeledDataset d1 = gen_norm_sphere(64, 3, a);
    const LabeledDataset d2 = gen_norm_sphere(64, 3, b);
    EXPECT_EQ(d1.x, d2.x);
    EXPECT_EQ(d1.y, d2.y);
}

TEST(RingMixture, ZeroSigmaSitsOnCenters) {
    Prng p(7);
    const DenseMatrix samples = gen_ring_mixture(50, 8, 2.0, 0.0, p);
    const DenseMatrix centers = ring_centers(8, 2.0);
    for (std::size_t i = 0; i < samples.rows(); ++i) {
        double best = 1e9;
        for (std::size_t k = 0; k < 8; ++k) {
            const double dx = samples(i, 0) - centers(k, 0);
            const double dy = samples(i, 1) - centers(k, 1);
            best = std::min(best, dx * dx + dy * dy);
        }
        EXPECT_NEAR(best, 0.0, 1e-24);
    }
}

TEST(RingMixture, SingleModeAtRadius) {
    Prng p(9);
    const DenseMatrix samples = gen_ring_mixture(200, 1, 2.0, 0.05, p);
    for (std::size_t i = 0; i < samples.rows(); ++i) {
        EXPECT_NEAR(samples(i, 0), 2.0, 0.5);
        EXPECT_NEAR(samples(i, 1), 0.0, 0.5);
    }
}

TEST(RingMixture, ModeCountsNearUniform) {
    Prng p(11);
    const std::size_t n = 80000, modes = 8;
    const DenseMatrix samples = gen_ring_mixture(n, modes, 2.0, 0.01, p);
    const DenseMatrix centers = ring_centers(modes, 2.0);
    std::vector<std::size_t> counts(modes, 0);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t arg = 0;
        double best = 1e9;
        for (std::size_t k = 0; k < modes; ++k) {
            const double dx = samples(i, 0) - centers(k, 0);
            const double dy = samples(i, 1) - centers(k, 1);
            if (dx * dx + dy * dy < best) {
                best = dx * dx + dy * dy;
                arg = k;
            }
        }
        counts[arg] += 1;
    }
    // multinomial: sd of a mode count is sqrt(n p (1-p))
    const double expect = static_cast<double>(n) / modes;
    const double sd = std::sqrt(static_cast<double>(n) * (1.0 / 8.0) * (7.0 / 8.0));
    for (std::size_t k = 0; k < modes; ++k)
        EXPECT_NEAR(static_cast<double>(counts[k]), expect, 3.0 * sd);
}

// --- CSV -------------------------------------------------------------------

TEST(Csv, RoundTripBitwise) {
    TempDir tmp;
    Prng p(13);
    LabeledDataset d = gen_norm_sphere(37, 5, p, "train");
    save_csv(tmp.file("d.csv"), d);
    const LabeledDataset back = load_csv(tmp.file("d.csv"));
    EXPECT_EQ(back.x, d.x);
    EXPECT_EQ(back.y, d.y);
}

TEST(Csv, HandWrittenValues) {
    TempDir tmp;
    {
        std::ofstream out(tmp.file("h.csv"));
        out << "1,0.5,-2.25\n-1,1e-3,3\n";
    }
    const LabeledDataset d = load_csv(tmp.file("h.csv"));
    ASSERT_EQ(d.size(), 2u);
    EXPECT_DOUBLE_EQ(d.y[0], 1.0);
    EXPECT_DOUBLE_EQ(d.x(0, 0), 0.5);
    EXPECT_DOUBLE_EQ(d.x(0, 1), -2.25);
    EXPECT_DOUBLE_EQ(d.y[1], -1.0);
    EXPECT_DOUBLE_EQ(d.x(1, 0), 1e-3);
    EXPECT_DOUBLE_EQ(d.x(1, 1), 3.0);
}

TEST(Csv, EmptyFileIsAnError) {
    TempDir tmp;
    { std::ofstream out(tmp.file("e.csv")); }
    EXPECT_THROW(load_csv(tmp.file("e.csv")), ParseError);
}

TEST(Csv, MalformedRowReportsLineNumber) {
    TempDir tmp;
    {
        std::ofstream out(tmp.file("bad.csv"));
        out << "1,0.5,1.5\n1,oops,2.5\n";
    }
    try {
        load_csv(tmp.file("bad.csv"));
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    }
}

TEST(Csv, NonBinaryLabelRejected) {
    TempDir tmp;
    {
        std::ofstream out(tmp.file("lbl.csv"));
        out << "2,0.5,1.5\n";
    }
    EXPECT_THROW(load_csv(tmp.file("lbl.csv")), ValidationError);
}

TEST(Csv, HeaderSkippedOnRequest) {
    TempDir tmp;
    {
        std::ofstream out(tmp.file("hdr.csv"));
        out << "label,f0\n1,0.25\n";
    }
    const LabeledDataset d = load_csv(tmp.file("hdr.csv"), true);
    EXPECT_EQ(d.size(), 1u);
    EXPECT_DOUBLE_EQ(d.x(0, 0), 0.25);
}

// --- JSON round trips ------------------------------------------------------

TEST(Json, MlpRoundTripBitwise) {
    TempDir tmp;
    Prng p(17);
    const Mlp net = make_mlp({3, 8, 2}, p);
    save_json(tmp.file("net.json"), mlp_to_json(net));
    const Mlp back = mlp_from_json(load_json(tmp.file("net.json")));
    EXPECT_EQ(mlp_flatten(back), mlp_flatten(net));
    EXPECT_EQ(back.hidden_activation, net.hidden_activation);
}

TEST(Json, SamplerRoundTripPreservesOutputs) {
    TempDir tmp;
    Prng p(19);
    const SpectralSampler s = make_sampler(4, {8, 8}, p.split("psi"));
    save_json(tmp.file("s.json"), sampler_to_json(s));
    const SpectralSampler back = sampler_from_json(load_json(tmp.file("s.json")));
    Prng q = p.split("probe");
    const DenseMatrix nu = sample_base(q, 32, 4);
    const DenseMatrix a = sampler_map_raw(s, nu);
    const DenseMatrix b = sampler_map_raw(back, nu);
    EXPECT_EQ(a, b);
}

TEST(Json, KernelSpecVariants) {
    TempDir tmp;
    const KernelSpec g = KernelSpec::gaussian({1.0, 2.0, 4.0});
    save_json(tmp.file("g.json"), kernel_spec_to_json(g));
    const KernelSpec g2 = kernel_spec_from_json(load_json(tmp.file("g.json")));
    EXPECT_DOUBLE_EQ(kernel_closed_form(g2, {0.7, 0.0}), kernel_closed_form(g, {0.7, 0.0}));

    const KernelSpec r = KernelSpec::rq({0.5, 2.0});
    const KernelSpec r2 = kernel_spec_from_json(kernel_spec_to_json(r));
    EXPECT_DOUBLE_EQ(kernel_closed_form(r2, {1.1, 0.2}), kernel_closed_form(r, {1.1, 0.2}));

    SmSampler sm;
    sm.means = DenseMatrix{{0.5, -0.5}};
    sm.stddevs = DenseMatrix{{1.5, 0.5}};
    sm.weights = {1.0};
    const KernelSpec s = KernelSpec::spectral_mixture(sm);
    const KernelSpec s2 = kernel_spec_from_json(kernel_spec_to_json(s));
    EXPECT_TRUE(std::holds_alternative<SmSampler>(s2.variant));

    const KernelSpec i = KernelSpec::implicit(make_identity_sampler(2));
    const KernelSpec i2 = kernel_spec_from_json(kernel_spec_to_json(i));
    EXPECT_TRUE(std::holds_alternative<SpectralSampler>(i2.variant));
}

TEST(Json, BadDocumentsRejected) {
    EXPECT_THROW(mlp_from_json(json{{"layers", json::array()}, {"activation", "relu"}}),
                 ParseError);
    EXPECT_THROW(kernel_spec_from_json(json{{"variant", "mystery"}}), ParseError);
}
