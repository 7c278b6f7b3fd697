#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ikl/cli.hpp"

using namespace ikl;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("ikl_cli_" + std::to_string(::getpid()) + "_" +
                std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string sub(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

bool dirs_byte_identical(const fs::path& a, const fs::path& b) {
    std::vector<std::string> names_a, names_b;
    for (const auto& e : fs::directory_iterator(a)) names_a.push_back(e.path().filename());
    for (const auto& e : fs::directory_iterator(b)) names_b.push_back(e.path().filename());
    std::sort(names_a.begin(), names_a.end());
    std::sort(names_b.begin(), names_b.end());
    if (names_a != names_b) return false;
    for (const auto& n : names_a)
        if (slurp(a / n) != slurp(b / n)) return false;
    return true;
}

}  // namespace

TEST(Cli, GenDataWritesCsvAndResolvedConfig) {
    TempDir tmp;
    const int rc = cli::run({"gen-data", "--out", tmp.sub("a"), "--n", "12", "--dim", "3",
                             "--seed", "9"});
    EXPECT_EQ(rc, 0);
    EXPECT_TRUE(fs::exists(tmp.path / "a" / "data.csv"));
    EXPECT_TRUE(fs::exists(tmp.path / "a" / "resolved_config.json"));
    const LabeledDataset d = load_csv(tmp.sub("a") + "/data.csv");
    EXPECT_EQ(d.size(), 12u);
    EXPECT_EQ(d.dim(), 3u);
}

TEST(Cli, FlagBeatsConfigFile) {
    TempDir tmp;
    {
        std::ofstream cfg(tmp.sub("cfg.json"));
        cfg << R"({"n": 5, "dim": 4})";
    }
    const int rc = cli::run({"gen-data", "--out", tmp.sub("a"), "--config", tmp.sub("cfg.json"),
                             "--n", "7"});
    EXPECT_EQ(rc, 0);
    const json resolved = load_json(tmp.sub("a") + "/resolved_config.json");
    EXPECT_EQ(resolved.at("n").get<int>(), 7);    // flag wins
    EXPECT_EQ(resolved.at("dim").get<int>(), 4);  // config file beats default
    const LabeledDataset d = load_csv(tmp.sub("a") + "/data.csv");
    EXPECT_EQ(d.size(), 7u);
    EXPECT_EQ(d.dim(), 4u);
}

TEST(Cli, UnknownConfigKeyRejected) {
    TempDir tmp;
    {
        std::ofstream cfg(tmp.sub("cfg.json"));
        cfg << R"({"banana": 1})";
    }
    const int rc =
        cli::run({"gen-data", "--out", tmp.sub("a"), "--config", tmp.sub("cfg.json")});
    EXPECT_EQ(rc, 1);
    const json err = load_json(tmp.sub("a") + "/error.json");
    EXPECT_NE(err.at("error").get<std::string>().find("banana"), std::string::npos);
}

TEST(Cli, SetOverrideParsesTypedValues) {
    TempDir tmp;
    const int rc = cli::run({"gen-data", "--out", tmp.sub("a"), "--set", "task=ring",
                             "--set", "n=20", "--set", "sigma=0.0"});
    EXPECT_EQ(rc, 0);
    const json resolved = load_json(tmp.sub("a") + "/resolved_config.json");
    EXPECT_EQ(resolved.at("task").get<std::string>(), "ring");
    EXPECT_DOUBLE_EQ(resolved.at("sigma").get<double>(), 0.0);
}

TEST(Cli, KernelCheckDeterministicAcrossReruns) {
    TempDir tmp;
    const std::vector<std::string> base{"kernel-check", "--m", "256", "--pairs", "10",
                                        "--dim", "4", "--seed", "3"};
    auto with_out = [&](const std::string& o) {
        auto v = base;
        v.push_back("--out");
        v.push_back(o);
        return v;
    };
    EXPECT_EQ(cli::run(with_out(tmp.sub("a"))), 0);
    EXPECT_EQ(cli::run(with_out(tmp.sub("b"))), 0);
    EXPECT_TRUE(dirs_byte_identical(tmp.sub("a"), tmp.sub("b")));
}

TEST(Cli, EmptyMethodListIsUsageError) {
    TempDir tmp;
    {
        std::ofstream cfg(tmp.sub("cfg.json"));
        cfg << R"({"methods": []})";
    }
    const int rc = cli::run({"synth-benchmark", "--out", tmp.sub("a"), "--config",
                             tmp.sub("cfg.json")});
    EXPECT_EQ(rc, 1);
    const json err = load_json(tmp.sub("a") + "/error.json");
    EXPECT_NE(err.at("error").get<std::string>().find("method"), std::string::npos);
}

TEST(Cli, TinySynthBenchmarkReportsAllCells) {
    TempDir tmp;
    const int rc = cli::run({"synth-benchmark", "--out", tmp.sub("a"), "--seed", "1",
                             "--set", "dims=[2]", "--set", "seeds=2",
                             "--set", "methods=[\"rff\"]", "--set", "n_train=200",
                             "--set", "n_val=80", "--set", "n_test=80", "--set", "M=32"});
    EXPECT_EQ(rc, 0);
    const json reports = load_json(tmp.sub("a") + "/reports.json");
    ASSERT_EQ(reports.size(), 2u);
    for (const auto& r : reports) {
        EXPECT_EQ(r.at("method").get<std::string>(), "rff");
        EXPECT_EQ(r.at("d").get<int>(), 2);
        const double err = r.at("test_error").get<double>();
        EXPECT_GE(err, 0.0);
        EXPECT_LE(err, 1.0);
    }
}

TEST(Cli, AlignTrainEmitsZeroTimingsByDefault) {
    TempDir tmp;
    const int rc = cli::run({"align-train", "--out", tmp.sub("a"), "--seed", "2",
                             "--set", "n=128", "--set", "dim=2", "--set", "iters=40",
                             "--set", "eval_every=20", "--set", "m=16",
                             "--set", "probe_size=64", "--set", "probe_features=64"});
    EXPECT_EQ(rc, 0);
    const std::string log = slurp(tmp.sub("a") + "/align_log.csv");
    EXPECT_NE(log.find("iter,probe_alignment,wall_ms"), std::string::npos);
    std::istringstream lines(log);
    std::string line;
    std::getline(lines, line);  // header
    while (std::getline(lines, line)) {
        const auto last_comma = line.rfind(',');
        EXPECT_EQ(line.substr(last_comma + 1), "0");
    }
    EXPECT_TRUE(fs::exists(tmp.path / "a" / "sampler.json"));
    // the trained sampler round-trips through its JSON
    const SpectralSampler s = sampler_from_json(load_json(tmp.sub("a") + "/sampler.json"));
    EXPECT_EQ(s.base_dim, 2u);
}

TEST(Cli, AlignTrainRerunsAreByteIdentical) {
    TempDir tmp;
    auto args = [&](const std::string& o) {
        return std::vector<std::string>{
            "align-train", "--out", o, "--seed", "5", "--set", "n=96", "--set", "dim=2",
            "--set", "iters=30", "--set", "eval_every=10", "--set", "m=8",
            "--set", "probe_size=32", "--set", "probe_features=32"};
    };
    EXPECT_EQ(cli::run(args(tmp.sub("a"))), 0);
    EXPECT_EQ(cli::run(args(tmp.sub("b"))), 0);
    EXPECT_TRUE(dirs_byte_identical(tmp.sub("a"), tmp.sub("b")));
}

TEST(Cli, GanToyZeroItersWritesInitialArtifacts) {
    TempDir tmp;
    const int rc = cli::run({"gan-toy", "--out", tmp.sub("a"), "--seed", "3",
                             "--set", "iters=0", "--set", "eval_samples=64",
                             "--set", "features=32", "--set", "batch=8"});
    EXPECT_EQ(rc, 0);
    EXPECT_TRUE(fs::exists(tmp.path / "a" / "log.csv"));
    EXPECT_TRUE(fs::exists(tmp.path / "a" / "samples.csv"));
    EXPECT_TRUE(fs::exists(tmp.path / "a" / "checkpoint.json"));
    const std::string log = slurp(tmp.sub("a") + "/log.csv");
    EXPECT_NE(log.find("iter,ref_mmd,variance_hat,modes_covered"), std::string::npos);
    const json ckpt = load_json(tmp.sub("a") + "/checkpoint.json");
    EXPECT_EQ(ckpt.at("iter").get<int>(), 0);
}

TEST(Cli, GanToyAblationEmitsVarianceColumn) {
    TempDir tmp;
    const int rc = cli::run({"gan-toy", "--out", tmp.sub("a"), "--seed", "4",
                             "--no-variance-constraint", "--set", "iters=2",
                             "--set", "eval_samples=64", "--set", "features=32",
                             "--set", "batch=8", "--set", "eval_every=1"});
    EXPECT_EQ(rc, 0);
    const json resolved = load_json(tmp.sub("a") + "/resolved_config.json");
    EXPECT_TRUE(resolved.at("no_variance_constraint").get<bool>());
    const std::string log = slurp(tmp.sub("a") + "/log.csv");
    std::istringstream lines(log);
    std::string header;
    std::getline(lines, header);
    EXPECT_NE(header.find("variance_hat"), std::string::npos);
    std::string row;
    std::getline(lines, row);
    // variance_hat is a real number for the ikl kernel even with lambda_h = 0
    EXPECT_NE(row.find(','), std::string::npos);
}

TEST(Cli, RksEvalWritesReportAndFeaturesDump) {
    TempDir tmp;
    const int rc = cli::run({"rks-eval", "--out", tmp.sub("a"), "--seed", "6",
                             "--set", "n_train=120", "--set", "n_val=40",
                             "--set", "n_test=40", "--set", "dim=2", "--set", "M=16",
                             "--set", "method=rff", "--set", "dump_features=true"});
    EXPECT_EQ(rc, 0);
    const json rep = load_json(tmp.sub("a") + "/report.json");
    EXPECT_EQ(rep.at("method").get<std::string>(), "rff");
    EXPECT_EQ(rep.at("M").get<int>(), 16);
    const LabeledDataset feats = load_csv(tmp.sub("a") + "/features_train.csv");
    EXPECT_EQ(feats.size(), 120u);
    EXPECT_EQ(feats.dim(), 32u);  // 2M columns
}

TEST(Cli, ConsistencyCsvHasBoundColumn) {
    TempDir tmp;
    const int rc = cli::run({"consistency", "--out", tmp.sub("a"), "--seed", "7",
                             "--set", "m_list=[16]", "--set", "repeats=3",
                             "--set", "m_ref=256", "--set", "batch=16", "--set", "dim=2"});
    EXPECT_EQ(rc, 0);
    const std::string csv = slurp(tmp.sub("a") + "/consistency.csv");
    EXPECT_NE(csv.find("m,mean_gap,bound"), std::string::npos);
    // single m entry -> header plus one row
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
}

TEST(Cli, ConsistencyRejectsUnsortedMList) {
    TempDir tmp;
    const int rc = cli::run({"consistency", "--out", tmp.sub("a"),
                             "--set", "m_list=[64,16]", "--set", "repeats=2",
                             "--set", "m_ref=128"});
    EXPECT_EQ(rc, 1);
}

TEST(Cli, MissingSubcommandFails) {
    EXPECT_NE(cli::run({}), 0);
}
