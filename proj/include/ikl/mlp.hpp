#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "ikl/errors.hpp"
#include "ikl/matrix.hpp"
#include "ikl/prng.hpp"

namespace ikl {

enum class Activation { Relu, Identity };

inline std::string activation_name(Activation a) {
    return a == Activation::Relu ? "relu" : "identity";
}

// Fully connected network. Weight matrices are stored input-major
// (in_dim x out_dim), biases per output unit. Hidden layers share one
// activation; the output layer is always linear.
struct Mlp {
    struct Layer {
        DenseMatrix w;          // in x out
        std::vector<double> b;  // out
    };

    std::vector<Layer> layers;
    Activation hidden_activation = Activation::Relu;

    std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().w.rows(); }
    std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().w.cols(); }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += l.w.size() + l.b.size();
        return n;
    }
};

// Glorot-uniform weights, zero biases.
inline Mlp make_mlp(const std::vector<std::size_t>& dims, Prng prng,
                    Activation hidden = Activation::Relu) {
    if (dims.size() < 2) throw DimensionError("make_mlp: need at least input and output dims");
    Mlp net;
    net.hidden_activation = hidden;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        Mlp::Layer layer;
        layer.w = DenseMatrix(dims[l], dims[l + 1]);
        layer.b.assign(dims[l + 1], 0.0);
        const double bound = std::sqrt(6.0 / static_cast<double>(dims[l] + dims[l + 1]));
        for (double& v : layer.w.data()) v = (2.0 * prng.next_double() - 1.0) * bound;
        net.layers.push_back(std::move(layer));
    }
    return net;
}

// Network computing the identity on the nonnegative orthant: each layer
// passes the first min(in, out) coordinates through unchanged, and ReLU is
// the identity on nonnegative values. Hidden widths must be >= dim.
inline Mlp make_identity_mlp(std::size_t dim, const std::vector<std::size_t>& hidden = {}) {
    Mlp net;
    std::vector<std::size_t> dims;
    dims.push_back(dim);
    for (std::size_t h : hidden) {
        if (h < dim) throw DimensionError("make_identity_mlp: hidden width below dim");
        dims.push_back(h);
    }
    dims.push_back(dim);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        Mlp::Layer layer;
        layer.w = DenseMatrix(dims[l], dims[l + 1]);
        layer.b.assign(dims[l + 1], 0.0);
        for (std::size_t i = 0; i < std::min(dims[l], dims[l + 1]); ++i) layer.w(i, i) = 1.0;
        net.layers.push_back(std::move(layer));
    }
    return net;
}

inline std::vector<double> mlp_flatten(const Mlp& net) {
    std::vector<double> out;
    out.reserve(net.param_count());
    for (const auto& l : net.layers) {
        out.insert(out.end(), l.w.data().begin(), l.w.data().end());
        out.insert(out.end(), l.b.begin(), l.b.end());
    }
    return out;
}

inline void mlp_unflatten(Mlp& net, const std::vector<double>& params) {
    if (params.size() != net.param_count())
        throw DimensionError("mlp_unflatten: parameter vector length mismatch");
    std::size_t pos = 0;
    for (auto& l : net.layers) {
        std::copy(params.begin() + pos, params.begin() + pos + l.w.size(), l.w.data().begin());
        pos += l.w.size();
        std::copy(params.begin() + pos, params.begin() + pos + l.b.size(), l.b.begin());
        pos += l.b.size();
    }
}

namespace detail {

// Pre-activations per layer; activations reconstructed where needed.
struct MlpTrace {
    std::vector<DenseMatrix> acts;  // acts[0] = inputs, acts[l] = output of layer l
};

inline void apply_hidden(DenseMatrix& z, Activation act) {
    if (act == Activation::Relu)
        for (double& v : z.data()) v = v > 0.0 ? v : 0.0;  // subgradient at 0 is 0
}

inline DenseMatrix linear_forward(const Mlp::Layer& l, const DenseMatrix& x) {
    DenseMatrix z = matmul(x, l.w);
    for (std::size_t i = 0; i < z.rows(); ++i) {
        double* zi = z.row(i);
        for (std::size_t j = 0; j < z.cols(); ++j) zi[j] += l.b[j];
    }
    return z;
}

inline MlpTrace mlp_trace(const Mlp& net, const DenseMatrix& inputs) {
    MlpTrace t;
    t.acts.reserve(net.layers.size() + 1);
    t.acts.push_back(inputs);
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        DenseMatrix z = linear_forward(net.layers[l], t.acts.back());
        if (l + 1 < net.layers.size()) apply_hidden(z, net.hidden_activation);
        t.acts.push_back(std::move(z));
    }
    return t;
}

}  // namespace detail

inline DenseMatrix mlp_forward(const Mlp& net, const DenseMatrix& inputs) {
    if (net.layers.empty()) throw DimensionError("mlp_forward: empty network");
    if (inputs.cols() != net.input_dim())
        throw DimensionError("mlp_forward: input has " + std::to_string(inputs.cols()) +
                             " cols, network expects " + std::to_string(net.input_dim()));
    return detail::mlp_trace(net, inputs).acts.back();
}

struct MlpGrads {
    std::vector<Mlp::Layer> layers;  // dW, db in layer order
    DenseMatrix inputs;              // d/d inputs

    std::vector<double> flatten() const {
        std::vector<double> out;
        for (const auto& l : layers) {
            out.insert(out.end(), l.w.data().begin(), l.w.data().end());
            out.insert(out.end(), l.b.begin(), l.b.end());
        }
        return out;
    }
};

// Gradients of sum(upstream .* output) w.r.t. parameters and inputs.
inline MlpGrads mlp_backprop(const Mlp& net, const DenseMatrix& inputs,
                             const DenseMatrix& upstream) {
    if (inputs.cols() != net.input_dim())
        throw DimensionError("mlp_backprop: input dimension mismatch");
    if (upstream.rows() != inputs.rows() || upstream.cols() != net.output_dim())
        throw DimensionError("mlp_backprop: upstream shape mismatch");

    const auto trace = detail::mlp_trace(net, inputs);
    MlpGrads g;
    g.layers.resize(net.layers.size());

    DenseMatrix delta = upstream;  // d/d (post-activation of current layer)
    for (std::size_t l = net.layers.size(); l-- > 0;) {
        // Hidden activations were applied to every layer but the last.
        if (l + 1 < net.layers.size() && net.hidden_activation == Activation::Relu) {
            const DenseMatrix& a = trace.acts[l + 1];
            for (std::size_t i = 0; i < delta.size(); ++i)
                if (a.data()[i] <= 0.0) delta.data()[i] = 0.0;
        }
        g.layers[l].w = matmul_atb(trace.acts[l], delta);
        g.layers[l].b.assign(net.layers[l].w.cols(), 0.0);
        for (std::size_t i = 0; i < delta.rows(); ++i) {
            const double* di = delta.row(i);
            for (std::size_t j = 0; j < delta.cols(); ++j) g.layers[l].b[j] += di[j];
        }
        delta = matmul_abt(delta, net.layers[l].w);
    }
    g.inputs = std::move(delta);
    return g;
}

}  // namespace ikl
