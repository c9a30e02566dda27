#pragma once

#include <cmath>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "core.hpp"
#include "rng.hpp"

namespace irsfb {

// Small fully connected networks with hand-written reverse mode and Adam.
// Batches are column-major: one sample per column.

enum class Activation { relu, tanh, linear };

inline std::string to_string(Activation a) {
    switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::linear: return "linear";
    }
    return "?";
}

inline Activation activation_from_string(const std::string& s) {
    if (s == "relu")
        return Activation::relu;
    if (s == "tanh")
        return Activation::tanh;
    if (s == "linear")
        return Activation::linear;
    throw ConfigError("unknown activation '" + s + "'");
}

struct Layer {
    RMatrix weights;  // out x in
    RVector bias;
    Activation activation = Activation::linear;

    Eigen::Index inputs() const { return weights.cols(); }
    Eigen::Index outputs() const { return weights.rows(); }
};

namespace detail {

inline RMatrix activate(const RMatrix& z, Activation a) {
    switch (a) {
    case Activation::relu: return z.cwiseMax(0.0);
    case Activation::tanh: return z.array().tanh().matrix();
    case Activation::linear: return z;
    }
    return z;
}

// Derivative of the activation evaluated at the pre-activation z. ReLU uses
// subgradient 0 at z == 0.
inline RMatrix activate_grad(const RMatrix& z, Activation a) {
    switch (a) {
    case Activation::relu: return (z.array() > 0.0).cast<double>().matrix();
    case Activation::tanh: return (1.0 - z.array().tanh().square()).matrix();
    case Activation::linear: return RMatrix::Ones(z.rows(), z.cols());
    }
    return z;
}

}  // namespace detail

/// Intermediate values of a batched forward pass, needed by backward().
struct ForwardTrace {
    std::vector<RMatrix> inputs;  // input to each layer
    std::vector<RMatrix> pre;     // pre-activation of each layer
    RMatrix output;
};

struct Gradients {
    std::vector<RMatrix> weights;
    std::vector<RVector> bias;
};

struct BackwardResult {
    Gradients params;
    RMatrix input;  // d loss / d input, in x batch
};

class Mlp {
public:
    std::vector<Layer> layers;
    double output_scale = 1.0;

    Mlp() = default;

    Eigen::Index input_size() const { return layers.front().inputs(); }
    Eigen::Index output_size() const { return layers.back().outputs(); }

    void validate() const {
        require(!layers.empty(), "network has no layers");
        for (std::size_t i = 0; i < layers.size(); ++i) {
            require(layers[i].bias.size() == layers[i].outputs(), "bias size mismatch in layer " + std::to_string(i));
            if (i > 0)
                require(layers[i].inputs() == layers[i - 1].outputs(),
                        "layer " + std::to_string(i) + " input does not match previous output");
        }
    }

    ForwardTrace trace(const RMatrix& x) const {
        require(x.rows() == input_size(), "network input has " + std::to_string(x.rows()) + " rows, expected " +
                                              std::to_string(input_size()));
        ForwardTrace t;
        t.inputs.reserve(layers.size());
        t.pre.reserve(layers.size());
        RMatrix h = x;
        for (const auto& l : layers) {
            t.inputs.push_back(h);
            RMatrix z = l.weights * h;
            z.colwise() += l.bias;
            h = detail::activate(z, l.activation);
            t.pre.push_back(std::move(z));
        }
        t.output = output_scale * h;
        return t;
    }

    RMatrix forward(const RMatrix& x) const {
        require(x.rows() == input_size(), "network input has " + std::to_string(x.rows()) + " rows, expected " +
                                              std::to_string(input_size()));
        RMatrix h = x;
        for (const auto& l : layers) {
            RMatrix z = l.weights * h;
            z.colwise() += l.bias;
            h = detail::activate(z, l.activation);
        }
        return output_scale * h;
    }

    RVector forward(const RVector& x) const { return forward(RMatrix(x)).col(0); }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& l : layers)
            n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
        return n;
    }

    bool all_finite() const {
        for (const auto& l : layers)
            if (!l.weights.allFinite() || !l.bias.allFinite())
                return false;
        return true;
    }

    Gradients zero_like() const {
        Gradients g;
        for (const auto& l : layers) {
            g.weights.push_back(RMatrix::Zero(l.outputs(), l.inputs()));
            g.bias.push_back(RVector::Zero(l.outputs()));
        }
        return g;
    }
};

/// Reverse-mode gradients of sum over the batch of <upstream, output>.
inline BackwardResult backward(const Mlp& net, const ForwardTrace& t, const RMatrix& upstream) {
    require(upstream.rows() == net.output_size() && upstream.cols() == t.output.cols(),
            "upstream gradient shape mismatch");
    BackwardResult r;
    const std::size_t n = net.layers.size();
    r.params.weights.resize(n);
    r.params.bias.resize(n);
    RMatrix delta = net.output_scale * upstream;
    for (std::size_t i = n; i-- > 0;) {
        const Layer& l = net.layers[i];
        delta = delta.cwiseProduct(detail::activate_grad(t.pre[i], l.activation));
        r.params.weights[i] = delta * t.inputs[i].transpose();
        r.params.bias[i] = delta.rowwise().sum();
        delta = l.weights.transpose() * delta;
    }
    r.input = std::move(delta);
    return r;
}

inline BackwardResult backward(const Mlp& net, const RVector& x, const RVector& upstream) {
    return backward(net, net.trace(RMatrix(x)), RMatrix(upstream));
}

/// Layer sizes {in, h1, ..., out}; hidden layers share one activation.
/// Hidden weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); the output layer
/// ~ U(-final_init, final_init).
inline Mlp make_mlp(const std::vector<int>& sizes, Activation hidden, Activation output, double output_scale, Rng& rng,
                    double final_init = 3e-3) {
    require(sizes.size() >= 2, "network needs at least input and output sizes");
    Mlp net;
    net.output_scale = output_scale;
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
        require(sizes[i] > 0 && sizes[i + 1] > 0, "layer sizes must be positive");
        const bool last = i + 2 == sizes.size();
        const double bound = last ? final_init : 1.0 / std::sqrt(static_cast<double>(sizes[i]));
        Layer l;
        l.weights.resize(sizes[i + 1], sizes[i]);
        l.bias.resize(sizes[i + 1]);
        for (Eigen::Index c = 0; c < l.weights.cols(); ++c)
            for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
                l.weights(r, c) = rng.uniform(-bound, bound);
        for (Eigen::Index r = 0; r < l.bias.size(); ++r)
            l.bias[r] = rng.uniform(-bound, bound);
        l.activation = last ? output : hidden;
        net.layers.push_back(std::move(l));
    }
    return net;
}

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Element-wise Adam on flat buffers. `step` is the 1-based step count
/// after incrementing.
inline void adam_update(std::span<double> params, std::span<const double> grads, std::span<double> m,
                        std::span<double> v, long step, const AdamConfig& cfg) {
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grads[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
        const double m_hat = m[i] / c1;
        const double v_hat = v[i] / c2;
        params[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
}

struct AdamState {
    AdamConfig config;
    long step = 0;
    Gradients first;
    Gradients second;

    AdamState() = default;
    AdamState(const Mlp& net, AdamConfig cfg) : config(cfg), first(net.zero_like()), second(net.zero_like()) {}
};

namespace detail {
template <typename M>
std::span<double> flat(M& m) {
    return {m.data(), static_cast<std::size_t>(m.size())};
}
template <typename M>
std::span<const double> cflat(const M& m) {
    return {m.data(), static_cast<std::size_t>(m.size())};
}
}  // namespace detail

/// One Adam step (gradient descent direction) on every parameter of `net`.
inline void adam_step(Mlp& net, const Gradients& g, AdamState& s) {
    require(g.weights.size() == net.layers.size() && s.first.weights.size() == net.layers.size(),
            "optimizer state does not match network");
    ++s.step;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        auto& l = net.layers[i];
        require(g.weights[i].rows() == l.outputs() && g.weights[i].cols() == l.inputs(), "gradient shape mismatch");
        adam_update(detail::flat(l.weights), detail::cflat(g.weights[i]), detail::flat(s.first.weights[i]),
                    detail::flat(s.second.weights[i]), s.step, s.config);
        adam_update(detail::flat(l.bias), detail::cflat(g.bias[i]), detail::flat(s.first.bias[i]),
                    detail::flat(s.second.bias[i]), s.step, s.config);
    }
}

/// target <- tau * online + (1 - tau) * target.
inline void soft_update(Mlp& target, const Mlp& online, double tau) {
    require(target.layers.size() == online.layers.size(), "soft update between different architectures");
    for (std::size_t i = 0; i < target.layers.size(); ++i) {
        auto& t = target.layers[i];
        const auto& o = online.layers[i];
        require(t.weights.rows() == o.weights.rows() && t.weights.cols() == o.weights.cols(),
                "soft update shape mismatch");
        t.weights = tau * o.weights + (1.0 - tau) * t.weights;
        t.bias = tau * o.bias + (1.0 - tau) * t.bias;
    }
}

// Weight files: {"layers":[{"in","out","activation","W":[[row]...],"b"}], "output_scale"}.

inline nlohmann::json to_json(const Mlp& net) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : net.layers) {
        nlohmann::json w = nlohmann::json::array();
        for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
            std::vector<double> row(static_cast<std::size_t>(l.weights.cols()));
            for (Eigen::Index c = 0; c < l.weights.cols(); ++c)
                row[static_cast<std::size_t>(c)] = l.weights(r, c);
            w.push_back(row);
        }
        std::vector<double> b(l.bias.data(), l.bias.data() + l.bias.size());
        layers.push_back({{"in", l.inputs()}, {"out", l.outputs()}, {"activation", to_string(l.activation)},
                          {"W", std::move(w)}, {"b", std::move(b)}});
    }
    return {{"layers", std::move(layers)}, {"output_scale", net.output_scale}};
}

inline Mlp mlp_from_json(const nlohmann::json& j) {
    try {
        Mlp net;
        net.output_scale = j.at("output_scale").get<double>();
        for (const auto& jl : j.at("layers")) {
            const auto in = jl.at("in").get<Eigen::Index>();
            const auto out = jl.at("out").get<Eigen::Index>();
            Layer l;
            l.activation = activation_from_string(jl.at("activation").get<std::string>());
            l.weights.resize(out, in);
            const auto& w = jl.at("W");
            require(static_cast<Eigen::Index>(w.size()) == out, "weight matrix row count mismatch");
            for (Eigen::Index r = 0; r < out; ++r) {
                const auto& row = w[static_cast<std::size_t>(r)];
                require(static_cast<Eigen::Index>(row.size()) == in, "weight matrix column count mismatch");
                for (Eigen::Index c = 0; c < in; ++c)
                    l.weights(r, c) = row[static_cast<std::size_t>(c)].get<double>();
            }
            const auto b = jl.at("b").get<std::vector<double>>();
            require(static_cast<Eigen::Index>(b.size()) == out, "bias length mismatch");
            l.bias = Eigen::Map<const RVector>(b.data(), out);
            net.layers.push_back(std::move(l));
        }
        net.validate();
        return net;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed network JSON: ") + e.what());
    }
}

inline void save_mlp(const Mlp& net, const std::string& path) {
    std::ofstream out(path);
    if (!out)
        throw Error("cannot write '" + path + "'");
    out << to_json(net).dump() << '\n';
}

inline Mlp load_mlp(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open network file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed network JSON in '" + path + "': " + e.what());
    }
    return mlp_from_json(j);
}

}  // namespace irsfb
