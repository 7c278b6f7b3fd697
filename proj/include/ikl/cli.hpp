#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ikl/align.hpp"
#include "ikl/data.hpp"
#include "ikl/errors.hpp"
#include "ikl/gantoy.hpp"
#include "ikl/rks.hpp"
#include "ikl/serialize.hpp"

namespace ikl::cli {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Config plumbing: defaults <- config file <- explicit flags (flag wins).
// Unknown keys are rejected; the resolved document is written next to the
// outputs of every run.
// ---------------------------------------------------------------------------

inline json merge_config(json defaults, const std::string& config_path, const json& overrides) {
    if (!config_path.empty()) {
        const json file = load_json(config_path);
        if (!file.is_object()) throw ConfigError("config file must hold a JSON object");
        for (const auto& [key, value] : file.items()) {
            if (!defaults.contains(key)) throw ConfigError("unknown config key '" + key + "'");
            defaults[key] = value;
        }
    }
    for (const auto& [key, value] : overrides.items()) defaults[key] = value;
    return defaults;
}

namespace detail {

template <typename T>
T typed(const json& cfg, const std::string& key) {
    try {
        return cfg.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("config key '" + key + "': " + e.what());
    }
}

inline std::uint64_t seed_of(const json& cfg) { return typed<std::uint64_t>(cfg, "seed"); }

inline void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write '" + path.string() + "'");
    out << text;
}

inline std::string csv_row(std::initializer_list<double> values) {
    std::string row;
    for (double v : values) {
        if (!row.empty()) row.push_back(',');
        row += format_double(v);
    }
    return row;
}

}  // namespace detail

// --- kernel-check: Monte-Carlo features against the closed form ------------

inline void run_kernel_check(const json& cfg, const fs::path& out) {
    const std::string kind = detail::typed<std::string>(cfg, "kernel");
    KernelSpec spec = KernelSpec::gaussian({1.0});
    if (kind == "gaussian")
        spec = KernelSpec::gaussian(detail::typed<std::vector<double>>(cfg, "sigmas"));
    else if (kind == "rq")
        spec = KernelSpec::rq(detail::typed<std::vector<double>>(cfg, "alphas"));
    else
        throw ConfigError("kernel-check: kernel must be 'gaussian' or 'rq'");

    const auto m = detail::typed<std::size_t>(cfg, "m");
    const auto pairs = detail::typed<std::size_t>(cfg, "pairs");
    const auto dim = detail::typed<std::size_t>(cfg, "dim");

    Prng root(detail::seed_of(cfg));
    Prng freq_rng = root.split("kernel-check/freqs");
    Prng pair_rng = root.split("kernel-check/pairs");
    const FrequencyBatch freqs = sample_frequencies(spec, freq_rng, m, dim);

    std::string csv = "dist,k_exact,k_approx,abs_err\n";
    auto emit = [&](const DenseMatrix& x, const DenseMatrix& y) {
        const FeatureMap fx = fourier_features(x, freqs);
        const FeatureMap fy = fourier_features(y, freqs);
        const double approx = kernel_matrix_approx(fx, fy)(0, 0);
        double sq = 0.0;
        for (std::size_t j = 0; j < dim; ++j) {
            const double d = x(0, j) - y(0, j);
            sq += d * d;
        }
        const double exact = kernel_closed_form_sq(spec, sq);
        csv += detail::csv_row({std::sqrt(sq), exact, approx, std::fabs(approx - exact)});
        csv.push_back('\n');
    };

    const DenseMatrix x0 = sample_base(pair_rng, 1, dim);
    emit(x0, x0);  // the zero-lag row: both sides are exactly 1
    for (std::size_t i = 0; i < pairs; ++i) {
        const DenseMatrix x = sample_base(pair_rng, 1, dim);
        const DenseMatrix y = sample_base(pair_rng, 1, dim);
        emit(x, y);
    }
    detail::write_text(out / "kernel_check.csv", csv);
}

// --- synth-benchmark: test error across dimensions and methods -------------

inline RksMethod parse_method(const std::string& name) {
    if (name == "rff") return RksMethod::Rff;
    if (name == "ikl") return RksMethod::Ikl;
    if (name == "sm") return RksMethod::Sm;
    throw ConfigError("unknown method '" + name + "' (expected rff, ikl or sm)");
}

inline AlignTrainConfig stage1_config(const json& cfg) {
    AlignTrainConfig a;
    a.batch_size = detail::typed<std::size_t>(cfg, "stage1_batch");
    a.features_per_step = detail::typed<std::size_t>(cfg, "stage1_m");
    a.learning_rate = detail::typed<double>(cfg, "stage1_lr");
    a.max_iters = detail::typed<std::size_t>(cfg, "stage1_iters");
    a.eval_every = detail::typed<std::size_t>(cfg, "stage1_eval_every");
    a.patience = detail::typed<std::size_t>(cfg, "stage1_patience");
    return a;
}

inline void run_synth_benchmark(const json& cfg, const fs::path& out) {
    const auto dims = detail::typed<std::vector<std::size_t>>(cfg, "dims");
    const auto method_names = detail::typed<std::vector<std::string>>(cfg, "methods");
    const auto n_seeds = detail::typed<std::size_t>(cfg, "seeds");
    if (method_names.empty()) throw ConfigError("synth-benchmark: empty method list");
    if (dims.empty()) throw ConfigError("synth-benchmark: empty dimension list");
    std::vector<RksMethod> methods;
    for (const auto& n : method_names) methods.push_back(parse_method(n));

    const auto n_train = detail::typed<std::size_t>(cfg, "n_train");
    const auto n_val = detail::typed<std::size_t>(cfg, "n_val");
    const auto n_test = detail::typed<std::size_t>(cfg, "n_test");

    Prng root(detail::seed_of(cfg));
    json reports = json::array();
    for (std::size_t d : dims) {
        for (std::size_t s = 0; s < n_seeds; ++s) {
            const std::string cell = std::to_string(d) + "/" + std::to_string(s);
            Prng data_rng = root.split("bench-data/" + cell);
            const LabeledDataset train = gen_norm_sphere(n_train, d, data_rng, "train");
            const LabeledDataset val = gen_norm_sphere(n_val, d, data_rng, "val");
            const LabeledDataset test = gen_norm_sphere(n_test, d, data_rng, "test");
            for (std::size_t mi = 0; mi < methods.size(); ++mi) {
                PipelineConfig pc;
                pc.method = methods[mi];
                pc.big_m = detail::typed<std::size_t>(cfg, "M");
                pc.align = stage1_config(cfg);
                pc.standardize = detail::typed<bool>(cfg, "standardize");
                pc.rff_sigma = detail::typed<double>(cfg, "rff_sigma");
                pc.seed = root.split("bench-run/" + method_names[mi] + "/" + cell).seed();
                PipelineReport rep = run_pipeline(train, val, test, pc);
                rep.seed = s;  // report the cell index, not the derived stream
                reports.push_back(report_to_json(rep));
            }
        }
    }
    detail::write_text(out / "reports.json", reports.dump(2) + "\n");
}

// --- gan-toy ----------------------------------------------------------------

inline GanConfig gan_config_from_json(const json& cfg) {
    GanConfig g;
    const std::string kernel = detail::typed<std::string>(cfg, "kernel");
    if (kernel == "gaussian")
        g.kernel = GanKernelKind::Gaussian;
    else if (kernel == "rq")
        g.kernel = GanKernelKind::RQ;
    else if (kernel == "sm")
        g.kernel = GanKernelKind::Sm;
    else if (kernel == "ikl")
        g.kernel = GanKernelKind::Ikl;
    else
        throw ConfigError("gan-toy: kernel must be gaussian, rq, sm or ikl");

    g.eta = detail::typed<double>(cfg, "eta");
    g.eta_sampler = detail::typed<double>(cfg, "eta_sampler");
    g.batch = detail::typed<std::size_t>(cfg, "batch");
    g.critic_steps = detail::typed<std::size_t>(cfg, "critic_steps");
    g.features = detail::typed<std::size_t>(cfg, "features");
    g.lambda_gp = detail::typed<double>(cfg, "lambda_gp");
    g.lambda_h = detail::typed<double>(cfg, "lambda_h");
    g.target_u = detail::typed<double>(cfg, "target_u");
    g.iters = detail::typed<std::size_t>(cfg, "iters");
    g.latent_dim = detail::typed<std::size_t>(cfg, "latent_dim");
    g.embed_dim = detail::typed<std::size_t>(cfg, "embed_dim");
    g.unbiased_loop = detail::typed<bool>(cfg, "unbiased_loop");
    g.eval_every = detail::typed<std::size_t>(cfg, "eval_every");
    g.eval_samples = detail::typed<std::size_t>(cfg, "eval_samples");
    g.mode_radius = detail::typed<double>(cfg, "mode_radius");
    g.kernel_alphas = detail::typed<std::vector<double>>(cfg, "alphas");
    if (detail::typed<bool>(cfg, "no_variance_constraint")) g.lambda_h = 0.0;

    auto sigmas = detail::typed<std::vector<double>>(cfg, "sigmas");
    if (sigmas.empty())
        sigmas = g.kernel == GanKernelKind::Ikl ? std::vector<double>{1.0}
                                                : std::vector<double>{1.0, 2.0, 4.0, 8.0, 16.0};
    g.kernel_sigmas = std::move(sigmas);
    return g;
}

inline void write_gan_outputs(const fs::path& out, const GanRunResult& res) {
    std::string log = "iter,ref_mmd,variance_hat,modes_covered\n";
    for (const auto& row : res.state.log) {
        log += std::to_string(row.iter) + "," + format_double(row.ref_mmd) + "," +
               format_double(row.variance_hat) + "," + std::to_string(row.modes_covered) + "\n";
    }
    detail::write_text(out / "log.csv", log);
    save_matrix_csv((out / "samples.csv").string(), res.final_samples);
    save_json((out / "checkpoint.json").string(), gan_checkpoint_to_json(res.state));
}

inline void run_gan_toy(const json& cfg, const fs::path& out) {
    const GanConfig g = gan_config_from_json(cfg);
    const auto modes = detail::typed<std::size_t>(cfg, "modes");
    const auto radius = detail::typed<double>(cfg, "radius");
    const auto data_sigma = detail::typed<double>(cfg, "data_sigma");

    Prng root(detail::seed_of(cfg));
    const DataSource source = [=](Prng& rng, std::size_t n) {
        return gen_ring_mixture(n, modes, radius, data_sigma, rng);
    };
    const GanRunResult res = train_gan(g, source, root, ring_centers(modes, radius));
    write_gan_outputs(out, res);
    if (res.diverged) throw NumericError("gan-toy diverged: " + res.diagnostic);
}

// --- consistency: alignment gap versus feature count ------------------------

inline void run_consistency(const json& cfg, const fs::path& out) {
    const auto m_list = detail::typed<std::vector<std::size_t>>(cfg, "m_list");
    const auto repeats = detail::typed<std::size_t>(cfg, "repeats");
    const auto m_ref = detail::typed<std::size_t>(cfg, "m_ref");
    const auto dim = detail::typed<std::size_t>(cfg, "dim");
    const auto batch = detail::typed<std::size_t>(cfg, "batch");
    const auto delta = detail::typed<double>(cfg, "delta");
    const auto hidden = detail::typed<std::vector<std::size_t>>(cfg, "hidden");
    if (m_list.empty()) throw ConfigError("consistency: empty m list");
    for (std::size_t i = 1; i < m_list.size(); ++i)
        if (m_list[i] <= m_list[i - 1]) throw ConfigError("consistency: m_list must ascend");

    Prng root(detail::seed_of(cfg));
    Prng data_rng = root.split("consistency/data");
    const LabeledDataset data = gen_norm_sphere(batch, dim, data_rng);
    const SpectralSampler sampler = make_sampler(dim, hidden, root.split("consistency/psi"));

    AlignmentBatch ref;
    ref.x = data.x;
    ref.y = data.y;
    Prng ref_rng = root.split("consistency/ref");
    ref.nu = sample_base(ref_rng, m_ref, dim);
    const double t_ref = alignment_value(ref, sampler);

    Prng rep_rng = root.split("consistency/reps");
    std::string csv = "m,mean_gap,bound\n";
    for (std::size_t m : m_list) {
        double acc = 0.0;
        for (std::size_t r = 0; r < repeats; ++r) {
            AlignmentBatch b;
            b.x = data.x;
            b.y = data.y;
            b.nu = sample_base(rep_rng, m, dim);
            acc += std::fabs(alignment_value(b, sampler) - t_ref);
        }
        const double bound = std::sqrt(2.0 * std::log(4.0 / delta) / static_cast<double>(m));
        csv += std::to_string(m) + "," + format_double(acc / static_cast<double>(repeats)) +
               "," + format_double(bound) + "\n";
    }
    detail::write_text(out / "consistency.csv", csv);
}

// --- align-train -------------------------------------------------------------

inline LabeledDataset dataset_from_config(const json& cfg, Prng& gen_rng) {
    const std::string path = detail::typed<std::string>(cfg, "data");
    if (!path.empty()) return load_csv(path, detail::typed<bool>(cfg, "header"));
    return gen_norm_sphere(detail::typed<std::size_t>(cfg, "n"),
                           detail::typed<std::size_t>(cfg, "dim"), gen_rng, "train");
}

inline void run_align_train(const json& cfg, const fs::path& out) {
    Prng root(detail::seed_of(cfg));
    Prng data_rng = root.split("align-train/data");
    const LabeledDataset data = dataset_from_config(cfg, data_rng);

    AlignTrainConfig acfg;
    acfg.batch_size = detail::typed<std::size_t>(cfg, "batch");
    acfg.features_per_step = detail::typed<std::size_t>(cfg, "m");
    acfg.learning_rate = detail::typed<double>(cfg, "lr");
    acfg.max_iters = detail::typed<std::size_t>(cfg, "iters");
    acfg.eval_every = detail::typed<std::size_t>(cfg, "eval_every");
    acfg.patience = detail::typed<std::size_t>(cfg, "patience");
    acfg.probe_size = detail::typed<std::size_t>(cfg, "probe_size");
    acfg.probe_features = detail::typed<std::size_t>(cfg, "probe_features");
    acfg.seed = root.split("align-train/run").seed();

    const auto hidden = detail::typed<std::vector<std::size_t>>(cfg, "hidden");
    const std::string init = detail::typed<std::string>(cfg, "init");
    SpectralSampler sampler = init == "identity"
                                  ? make_identity_sampler(data.dim(), hidden)
                                  : make_sampler(data.dim(), hidden, root.split("align-init"));

    const auto res = train_alignment(data, std::move(sampler), acfg);
    if (res.single_class_warning)
        std::cerr << "align-train: dataset has a single class; alignment is degenerate\n";

    const bool timings = detail::typed<bool>(cfg, "timings");
    std::string log = "iter,probe_alignment,wall_ms\n";
    for (const auto& row : res.log)
        log += std::to_string(row.iter) + "," + format_double(row.probe_alignment) + "," +
               format_double(timings ? row.wall_ms : 0.0) + "\n";
    detail::write_text(out / "align_log.csv", log);
    save_json((out / "sampler.json").string(), sampler_to_json(res.sampler));
}

// --- rks-eval -----------------------------------------------------------------

inline void run_rks_eval(const json& cfg, const fs::path& out) {
    Prng root(detail::seed_of(cfg));
    LabeledDataset train, val, test;
    const std::string train_path = detail::typed<std::string>(cfg, "train");
    if (!train_path.empty()) {
        const bool header = detail::typed<bool>(cfg, "header");
        train = load_csv(train_path, header);
        val = load_csv(detail::typed<std::string>(cfg, "val"), header);
        test = load_csv(detail::typed<std::string>(cfg, "test"), header);
    } else {
        const auto dim = detail::typed<std::size_t>(cfg, "dim");
        Prng data_rng = root.split("rks-eval/data");
        train = gen_norm_sphere(detail::typed<std::size_t>(cfg, "n_train"), dim, data_rng, "train");
        val = gen_norm_sphere(detail::typed<std::size_t>(cfg, "n_val"), dim, data_rng, "val");
        test = gen_norm_sphere(detail::typed<std::size_t>(cfg, "n_test"), dim, data_rng, "test");
    }

    PipelineConfig pc;
    pc.method = parse_method(detail::typed<std::string>(cfg, "method"));
    pc.big_m = detail::typed<std::size_t>(cfg, "M");
    pc.align = stage1_config(cfg);
    pc.standardize = detail::typed<bool>(cfg, "standardize");
    pc.rff_sigma = detail::typed<double>(cfg, "rff_sigma");
    pc.seed = root.split("rks-eval/run").seed();

    PipelineArtifacts artifacts;
    const PipelineReport rep = run_pipeline(train, val, test, pc, &artifacts);
    save_json((out / "report.json").string(), report_to_json(rep));
    save_json((out / "stage2_kernel.json").string(),
              kernel_spec_to_json(artifacts.stage2_source));
    if (detail::typed<bool>(cfg, "dump_features"))
        save_features_csv((out / "features_train.csv").string(),
                          artifacts.train_transform.features.features, &train.y);
}

// --- gen-data -----------------------------------------------------------------

inline void run_gen_data(const json& cfg, const fs::path& out) {
    const std::string task = detail::typed<std::string>(cfg, "task");
    Prng root(detail::seed_of(cfg));
    Prng rng = root.split("gen-data");
    if (task == "norm-sphere") {
        const LabeledDataset d = gen_norm_sphere(detail::typed<std::size_t>(cfg, "n"),
                                                 detail::typed<std::size_t>(cfg, "dim"), rng);
        save_csv((out / "data.csv").string(), d);
    } else if (task == "ring") {
        const DenseMatrix d = gen_ring_mixture(
            detail::typed<std::size_t>(cfg, "n"), detail::typed<std::size_t>(cfg, "modes"),
            detail::typed<double>(cfg, "radius"), detail::typed<double>(cfg, "sigma"), rng);
        save_matrix_csv((out / "data.csv").string(), d);
    } else {
        throw ConfigError("gen-data: task must be 'norm-sphere' or 'ring'");
    }
}

// ---------------------------------------------------------------------------
// Driver
// ---------------------------------------------------------------------------

namespace detail {

struct Subcommand {
    std::string name;
    json defaults;
    void (*fn)(const json&, const fs::path&);
};

inline const std::vector<Subcommand>& subcommands() {
    static const std::vector<Subcommand> table = {
        {"kernel-check",
         json{{"seed", 0},
              {"kernel", "gaussian"},
              {"sigmas", json::array({1.0, 2.0, 4.0, 8.0, 16.0})},
              {"alphas", json::array({0.2, 0.5, 1.0, 2.0, 5.0})},
              {"m", 4096},
              {"pairs", 100},
              {"dim", 16}},
         &run_kernel_check},
        {"synth-benchmark",
         json{{"seed", 0},
              {"dims", json::array({2, 4, 8, 12, 16, 20})},
              {"methods", json::array({"rff", "ikl"})},
              {"seeds", 5},
              {"n_train", 2000},
              {"n_val", 1000},
              {"n_test", 1000},
              {"M", 256},
              {"rff_sigma", 1.0},
              {"standardize", false},
              {"stage1_batch", 64},
              {"stage1_m", 64},
              {"stage1_lr", 0.01},
              {"stage1_iters", 3000},
              {"stage1_eval_every", 100},
              {"stage1_patience", 5}},
         &run_synth_benchmark},
        {"gan-toy",
         json{{"seed", 0},
              {"kernel", "ikl"},
              {"iters", 5000},
              {"eta", 5e-4},
              {"eta_sampler", -1.0},
              {"batch", 64},
              {"critic_steps", 5},
              {"features", 1024},
              {"lambda_gp", 10.0},
              {"lambda_h", 10.0},
              {"target_u", 1.0},
              {"latent_dim", 8},
              {"embed_dim", 16},
              {"sigmas", json::array()},
              {"alphas", json::array({0.2, 0.5, 1.0, 2.0, 5.0})},
              {"unbiased_loop", false},
              {"no_variance_constraint", false},
              {"modes", 8},
              {"radius", 2.0},
              {"data_sigma", 0.05},
              {"eval_every", 100},
              {"eval_samples", 1000},
              {"mode_radius", 0.25}},
         &run_gan_toy},
        {"consistency",
         json{{"seed", 0},
              {"m_list", json::array({16, 64, 256, 1024})},
              {"repeats", 50},
              {"m_ref", 65536},
              {"dim", 8},
              {"batch", 64},
              {"delta", 0.05},
              {"hidden", json::array({32, 32})}},
         &run_consistency},
        {"align-train",
         json{{"seed", 0},
              {"data", ""},
              {"header", false},
              {"n", 2000},
              {"dim", 8},
              {"batch", 64},
              {"m", 64},
              {"lr", 1e-6},
              {"iters", 3000},
              {"eval_every", 100},
              {"patience", 5},
              {"probe_size", 256},
              {"probe_features", 1024},
              {"hidden", json::array({32, 32})},
              {"init", "identity"},
              {"timings", false}},
         &run_align_train},
        {"rks-eval",
         json{{"seed", 0},
              {"train", ""},
              {"val", ""},
              {"test", ""},
              {"header", false},
              {"n_train", 2000},
              {"n_val", 1000},
              {"n_test", 1000},
              {"dim", 8},
              {"method", "rff"},
              {"M", 256},
              {"rff_sigma", 1.0},
              {"standardize", false},
              {"dump_features", false},
              {"stage1_batch", 64},
              {"stage1_m", 64},
              {"stage1_lr", 0.01},
              {"stage1_iters", 3000},
              {"stage1_eval_every", 100},
              {"stage1_patience", 5}},
         &run_rks_eval},
        {"gen-data",
         json{{"seed", 0},
              {"task", "norm-sphere"},
              {"n", 1000},
              {"dim", 8},
              {"modes", 8},
              {"radius", 2.0},
              {"sigma", 0.05}},
         &run_gen_data},
    };
    return table;
}

// Flags shared by every subcommand plus generic key=value overrides, so each
// config key is reachable from the command line without a config file.
struct ParsedArgs {
    std::string out;
    std::string config;
    json overrides = json::object();
};

inline json parse_override_value(const json& default_value, const std::string& text,
                                 const std::string& key) {
    try {
        if (default_value.is_string()) return text;
        return json::parse(text);
    } catch (const json::exception&) {
        throw ConfigError("cannot parse value for '" + key + "': " + text);
    }
}

}  // namespace detail

// Runs one subcommand; returns a process exit code. Every output lands in
// --out; on failure an error.json is left there and the code is nonzero.
inline int run(const std::vector<std::string>& args) {
    CLI::App app{"implicit kernel learning: frequency samplers, alignment, MMD GAN"};
    app.require_subcommand(1);

    struct SubState {
        CLI::App* cmd = nullptr;
        detail::ParsedArgs parsed;
        std::vector<std::pair<std::string, std::string>> raw_sets;
        const detail::Subcommand* def = nullptr;
    };
    std::vector<SubState> states(detail::subcommands().size());

    std::size_t idx = 0;
    for (const auto& sub : detail::subcommands()) {
        SubState& st = states[idx++];
        st.def = &sub;
        st.cmd = app.add_subcommand(sub.name);
        st.cmd->add_option("--out", st.parsed.out, "output directory")->required();
        st.cmd->add_option("--config", st.parsed.config, "flat JSON config file");
        st.cmd->add_option(
            "--set", [&st](const std::vector<std::string>& kvs) {
                for (const auto& kv : kvs) {
                    const auto eq = kv.find('=');
                    if (eq == std::string::npos) return false;
                    st.raw_sets.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
                }
                return true;
            },
            "key=value config override (repeatable)")
            ->take_all();
        // dedicated flags for the options exercised most
        for (const auto& [key, value] : sub.defaults.items()) {
            const std::string flag = "--" + key;
            st.cmd->add_option(
                flag,
                [&st, key = key](const std::vector<std::string>& vals) {
                    st.raw_sets.emplace_back(key, vals.back());
                    return true;
                },
                "config key '" + key + "'")
                ->take_all();
        }
        if (sub.name == "gan-toy") {
            st.cmd->add_flag_callback("--no-variance-constraint", [&st]() {
                st.raw_sets.emplace_back("no_variance_constraint", "true");
            });
        }
    }

    std::vector<const char*> argv;
    argv.reserve(args.size() + 1);
    static const char* prog = "ikl-cli";
    argv.push_back(prog);
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    for (const auto& st : states) {
        if (!st.cmd->parsed()) continue;
        const fs::path out(st.parsed.out);
        try {
            std::error_code ec;
            fs::create_directories(out, ec);
            if (ec) throw ParseError("cannot create output directory '" + out.string() + "'");

            json overrides = json::object();
            for (const auto& [key, text] : st.raw_sets) {
                if (!st.def->defaults.contains(key))
                    throw ConfigError("unknown config key '" + key + "'");
                overrides[key] =
                    detail::parse_override_value(st.def->defaults.at(key), text, key);
            }
            const json cfg = merge_config(st.def->defaults, st.parsed.config, overrides);
            save_json((out / "resolved_config.json").string(), cfg);
            st.def->fn(cfg, out);
            return 0;
        } catch (const std::exception& e) {
            const json err{{"command", st.def->name}, {"error", e.what()}};
            std::error_code ec;
            if (fs::exists(out, ec)) save_json((out / "error.json").string(), err);
            std::cerr << st.def->name << ": " << e.what() << "\n";
            return 1;
        }
    }
    return 1;
}

}  // namespace ikl::cli
