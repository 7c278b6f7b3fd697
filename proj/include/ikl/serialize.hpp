#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ikl/errors.hpp"
#include "ikl/gantoy.hpp"
#include "ikl/matrix.hpp"
#include "ikl/mlp.hpp"
#include "ikl/rks.hpp"
#include "ikl/spectral.hpp"

namespace ikl {

using json = nlohmann::json;

inline json matrix_to_json(const DenseMatrix& m) {
    json rows = json::array();
    for (std::size_t i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (std::size_t j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline DenseMatrix matrix_from_json(const json& j) {
    if (!j.is_array() || j.empty()) throw ParseError("matrix: expected non-empty array of rows");
    const std::size_t rows = j.size();
    const std::size_t cols = j[0].size();
    DenseMatrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        if (j[i].size() != cols) throw ParseError("matrix: ragged rows");
        for (std::size_t c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
    }
    return m;
}

inline json mlp_to_json(const Mlp& net) {
    json layers = json::array();
    for (const auto& l : net.layers)
        layers.push_back(json{{"w", matrix_to_json(l.w)}, {"b", l.b}});
    return json{{"layers", std::move(layers)},
                {"activation", activation_name(net.hidden_activation)}};
}

inline Mlp mlp_from_json(const json& j) {
    Mlp net;
    const std::string act = j.at("activation").get<std::string>();
    if (act == "relu")
        net.hidden_activation = Activation::Relu;
    else if (act == "identity")
        net.hidden_activation = Activation::Identity;
    else
        throw ParseError("mlp: unknown activation '" + act + "'");
    for (const auto& lj : j.at("layers")) {
        Mlp::Layer l;
        l.w = matrix_from_json(lj.at("w"));
        l.b = lj.at("b").get<std::vector<double>>();
        if (l.b.size() != l.w.cols()) throw ParseError("mlp: bias length != layer width");
        if (!net.layers.empty() && net.layers.back().w.cols() != l.w.rows())
            throw ParseError("mlp: consecutive layer shapes incompatible");
        net.layers.push_back(std::move(l));
    }
    if (net.layers.empty()) throw ParseError("mlp: no layers");
    return net;
}

inline json sampler_to_json(const SpectralSampler& s) {
    return json{{"base_dim", s.base_dim}, {"base", s.base}, {"net", mlp_to_json(s.net)}};
}

inline SpectralSampler sampler_from_json(const json& j) {
    SpectralSampler s;
    s.base_dim = j.at("base_dim").get<std::size_t>();
    s.base = j.at("base").get<std::string>();
    s.net = mlp_from_json(j.at("net"));
    if (s.net.input_dim() != s.base_dim || s.net.output_dim() != s.base_dim)
        throw ParseError("sampler: net must map base_dim -> base_dim");
    return s;
}

inline json sm_to_json(const SmSampler& sm) {
    return json{{"means", matrix_to_json(sm.means)},
                {"stddevs", matrix_to_json(sm.stddevs)},
                {"weights", sm.weights}};
}

inline SmSampler sm_from_json(const json& j) {
    SmSampler sm;
    sm.means = matrix_from_json(j.at("means"));
    sm.stddevs = matrix_from_json(j.at("stddevs"));
    sm.weights = j.at("weights").get<std::vector<double>>();
    validate_sm(sm);
    return sm;
}

inline json kernel_spec_to_json(const KernelSpec& spec) {
    if (const auto* g = std::get_if<GaussianMixture>(&spec.variant))
        return json{{"variant", "gaussian_mixture"}, {"bandwidths", g->bandwidths}};
    if (const auto* r = std::get_if<RQMixture>(&spec.variant))
        return json{{"variant", "rq_mixture"}, {"alphas", r->alphas}};
    if (const auto* sm = std::get_if<SmSampler>(&spec.variant)) {
        json j = sm_to_json(*sm);
        j["variant"] = "spectral_mixture";
        return j;
    }
    const auto& s = std::get<SpectralSampler>(spec.variant);
    return json{{"variant", "implicit"}, {"sampler", sampler_to_json(s)}};
}

inline KernelSpec kernel_spec_from_json(const json& j) {
    const std::string variant = j.at("variant").get<std::string>();
    if (variant == "gaussian_mixture")
        return KernelSpec::gaussian(j.at("bandwidths").get<std::vector<double>>());
    if (variant == "rq_mixture") return KernelSpec::rq(j.at("alphas").get<std::vector<double>>());
    if (variant == "spectral_mixture") return KernelSpec::spectral_mixture(sm_from_json(j));
    if (variant == "implicit")
        return KernelSpec::implicit(sampler_from_json(j.at("sampler")));
    throw ParseError("kernel spec: unknown variant '" + variant + "'");
}

inline json report_to_json(const PipelineReport& r) {
    return json{{"method", r.method},
                {"d", r.dim},
                {"M", r.big_m},
                {"seed", r.seed},
                {"test_error", r.test_error},
                {"val_error", r.val_error},
                {"chosen_lambda", r.chosen_lambda},
                {"stage1_iters", r.stage1_iters},
                {"stage1_probe_alignment", r.stage1_probe_alignment}};
}

inline json gan_checkpoint_to_json(const GanState& st) {
    json j{{"iter", st.iter},
           {"kernel", gan_kernel_name(st.cfg.kernel)},
           {"generator", mlp_to_json(st.generator)},
           {"critic", mlp_to_json(st.critic)}};
    if (st.cfg.kernel == GanKernelKind::Ikl) {
        json samplers = json::array();
        for (const auto& s : st.samplers) samplers.push_back(sampler_to_json(s));
        j["samplers"] = std::move(samplers);
        j["u_targets"] = st.u_targets;
    } else if (st.cfg.kernel == GanKernelKind::Sm) {
        j["sm"] = sm_to_json(st.sm);
    } else {
        j["fixed_kernel"] = kernel_spec_to_json(st.fixed_kernel);
    }
    return j;
}

inline void save_json(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write '" + path + "'");
    out << j.dump(2) << '\n';
}

inline json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError("bad JSON in '" + path + "': " + e.what());
    }
    return j;
}

}  // namespace ikl
