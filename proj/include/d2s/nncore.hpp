#pragma once

// Fixed-topology multilayer perceptrons with reverse-mode gradients, Adam and
// Polyak averaging. Inputs are batched column-wise: a batch of B samples of
// width n is an (n x B) matrix.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <istream>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "d2s/errors.hpp"
#include "d2s/rng.hpp"

namespace d2s::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { relu, tanh, identity };

struct MlpParams {
    std::vector<int> layer_sizes;
    std::vector<Matrix> weights;  // weights[k] is (layer_sizes[k+1] x layer_sizes[k])
    std::vector<Vector> biases;
    Activation hidden = Activation::relu;
    Activation output = Activation::identity;

    [[nodiscard]] std::size_t num_layers() const { return weights.size(); }
    [[nodiscard]] int input_size() const { return layer_sizes.front(); }
    [[nodiscard]] int output_size() const { return layer_sizes.back(); }
};

// Same layout as MlpParams; also used for Adam moment accumulators.
struct ParamGrads {
    std::vector<Matrix> weights;
    std::vector<Vector> biases;
};

struct ForwardCache {
    std::vector<Matrix> pre;   // pre-activation of each layer
    std::vector<Matrix> post;  // post[0] is the input, post[k+1] the output of layer k
};

struct BackwardResult {
    ParamGrads params;  // summed over batch columns
    Matrix input;       // d loss / d input, same shape as the forward input
};

namespace detail {

inline void apply_activation(Activation act, const Matrix& z, Matrix& out) {
    switch (act) {
        case Activation::relu: out = z.cwiseMax(0.0); break;
        case Activation::tanh: out = z.array().tanh().matrix(); break;
        case Activation::identity: out = z; break;
    }
}

// Multiplies `grad` in place by the activation derivative, expressed through
// the pre-activation `z` and activation `a`.
inline void scale_by_derivative(Activation act, const Matrix& z, const Matrix& a, Matrix& grad) {
    switch (act) {
        case Activation::relu: grad.array() *= (z.array() > 0.0).cast<double>(); break;
        case Activation::tanh: grad.array() *= (1.0 - a.array().square()); break;
        case Activation::identity: break;
    }
}

inline std::string shape_str(Eigen::Index r, Eigen::Index c) {
    return "(" + std::to_string(r) + "x" + std::to_string(c) + ")";
}

}  // namespace detail

inline ParamGrads zeros_like(const MlpParams& p) {
    ParamGrads g;
    g.weights.reserve(p.weights.size());
    g.biases.reserve(p.biases.size());
    for (const auto& w : p.weights) g.weights.push_back(Matrix::Zero(w.rows(), w.cols()));
    for (const auto& b : p.biases) g.biases.push_back(Vector::Zero(b.size()));
    return g;
}

template <typename A, typename B>
bool same_shape(const A& a, const B& b) {
    if (a.weights.size() != b.weights.size() || a.biases.size() != b.biases.size()) return false;
    for (std::size_t k = 0; k < a.weights.size(); ++k) {
        if (a.weights[k].rows() != b.weights[k].rows() || a.weights[k].cols() != b.weights[k].cols())
            return false;
        if (a.biases[k].size() != b.biases[k].size()) return false;
    }
    return true;
}

/// Builds an MLP with weights ~ U(-1/sqrt(fan_in), +1/sqrt(fan_in)) and zero biases.
/// Weights are drawn layer by layer in column-major order.
inline MlpParams mlp_init(const std::vector<int>& layer_sizes, Activation hidden, Activation output, Rng& rng) {
    if (layer_sizes.size() < 2) throw ConfigError("mlp_init: need at least 2 layer sizes");
    for (int n : layer_sizes)
        if (n < 1) throw ConfigError("mlp_init: layer sizes must be >= 1");

    MlpParams p;
    p.layer_sizes = layer_sizes;
    p.hidden = hidden;
    p.output = output;
    for (std::size_t k = 0; k + 1 < layer_sizes.size(); ++k) {
        const int fan_in = layer_sizes[k];
        const int fan_out = layer_sizes[k + 1];
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        Matrix w(fan_out, fan_in);
        for (Eigen::Index c = 0; c < w.cols(); ++c)
            for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = dist(rng);
        p.weights.push_back(std::move(w));
        p.biases.push_back(Vector::Zero(fan_out));
    }
    return p;
}

inline bool all_finite(const MlpParams& p) {
    for (const auto& w : p.weights)
        if (!w.allFinite()) return false;
    for (const auto& b : p.biases)
        if (!b.allFinite()) return false;
    return true;
}

inline std::pair<Matrix, ForwardCache> mlp_forward(const MlpParams& p, const Matrix& input) {
    if (input.rows() != p.input_size())
        throw ShapeError("mlp_forward: input has " + std::to_string(input.rows()) + " rows, expected " +
                         std::to_string(p.input_size()));
    ForwardCache cache;
    const std::size_t n = p.num_layers();
    cache.pre.resize(n);
    cache.post.resize(n + 1);
    cache.post[0] = input;
    for (std::size_t k = 0; k < n; ++k) {
        Matrix& z = cache.pre[k];
        z.noalias() = p.weights[k] * cache.post[k];
        z.colwise() += p.biases[k];
        detail::apply_activation(k + 1 == n ? p.output : p.hidden, z, cache.post[k + 1]);
    }
    Matrix out = cache.post[n];
    return {std::move(out), std::move(cache)};
}

inline std::pair<Vector, ForwardCache> mlp_forward(const MlpParams& p, const Vector& input) {
    auto [out, cache] = mlp_forward(p, Matrix(input));
    return {Vector(out.col(0)), std::move(cache)};
}

// Output only; skips keeping the cache around.
inline Matrix mlp_predict(const MlpParams& p, const Matrix& input) { return mlp_forward(p, input).first; }

inline Vector mlp_predict(const MlpParams& p, const Vector& input) {
    return mlp_predict(p, Matrix(input)).col(0);
}

/// Reverse-mode pass. `output_grad` is d loss / d output with the same shape
/// as the forward output; parameter gradients are summed over the batch.
inline BackwardResult mlp_backward(const MlpParams& p, const ForwardCache& cache, const Matrix& output_grad) {
    const std::size_t n = p.num_layers();
    if (cache.pre.size() != n || cache.post.size() != n + 1)
        throw ShapeError("mlp_backward: cache depth does not match network");
    for (std::size_t k = 0; k < n; ++k) {
        if (cache.pre[k].rows() != p.weights[k].rows() || cache.post[k].rows() != p.weights[k].cols())
            throw ShapeError("mlp_backward: cache layer " + std::to_string(k) + " does not match network");
    }
    const Matrix& out = cache.post[n];
    if (output_grad.rows() != out.rows() || output_grad.cols() != out.cols())
        throw ShapeError("mlp_backward: output gradient " + detail::shape_str(output_grad.rows(), output_grad.cols()) +
                         " vs output " + detail::shape_str(out.rows(), out.cols()));

    BackwardResult res;
    res.params.weights.resize(n);
    res.params.biases.resize(n);
    Matrix grad = output_grad;
    for (std::size_t k = n; k-- > 0;) {
        detail::scale_by_derivative(k + 1 == n ? p.output : p.hidden, cache.pre[k], cache.post[k + 1], grad);
        res.params.weights[k].noalias() = grad * cache.post[k].transpose();
        res.params.biases[k] = grad.rowwise().sum();
        Matrix next;
        next.noalias() = p.weights[k].transpose() * grad;
        grad = std::move(next);
    }
    res.input = std::move(grad);
    return res;
}

inline BackwardResult mlp_backward(const MlpParams& p, const ForwardCache& cache, const Vector& output_grad) {
    return mlp_backward(p, cache, Matrix(output_grad));
}

struct AdamState {
    ParamGrads m;
    ParamGrads v;
    long step = 0;
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

inline AdamState adam_init(const MlpParams& p, double lr = 3e-4, double beta1 = 0.9, double beta2 = 0.999,
                           double eps = 1e-8) {
    return AdamState{zeros_like(p), zeros_like(p), 0, lr, beta1, beta2, eps};
}

/// One bias-corrected Adam step; updates `p` and `st` in place.
inline void adam_step(MlpParams& p, const ParamGrads& g, AdamState& st) {
    if (!same_shape(p, g) || !same_shape(p, st.m) || !same_shape(p, st.v))
        throw ShapeError("adam_step: parameter, gradient and moment shapes disagree");
    ++st.step;
    const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
    const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
    auto update = [&](auto& param, const auto& grad, auto& m, auto& v) {
        m.array() = st.beta1 * m.array() + (1.0 - st.beta1) * grad.array();
        v.array() = st.beta2 * v.array() + (1.0 - st.beta2) * grad.array().square();
        param.array() -= st.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + st.eps);
    };
    for (std::size_t k = 0; k < p.weights.size(); ++k) {
        update(p.weights[k], g.weights[k], st.m.weights[k], st.v.weights[k]);
        update(p.biases[k], g.biases[k], st.m.biases[k], st.v.biases[k]);
    }
}

/// target <- tau * online + (1 - tau) * target, parameter-wise.
inline void polyak_update(MlpParams& target, const MlpParams& online, double tau) {
    if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("polyak_update: tau must lie in [0, 1]");
    if (!same_shape(target, online)) throw ShapeError("polyak_update: architectures differ");
    if (tau == 1.0) {
        for (std::size_t k = 0; k < target.weights.size(); ++k) {
            target.weights[k] = online.weights[k];
            target.biases[k] = online.biases[k];
        }
        return;
    }
    if (tau == 0.0) return;
    for (std::size_t k = 0; k < target.weights.size(); ++k) {
        target.weights[k] = tau * online.weights[k] + (1.0 - tau) * target.weights[k];
        target.biases[k] = tau * online.biases[k] + (1.0 - tau) * target.biases[k];
    }
}

inline const char* activation_name(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::tanh: return "tanh";
        case Activation::identity: return "identity";
    }
    return "?";
}

inline Activation parse_activation(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "tanh") return Activation::tanh;
    if (s == "identity") return Activation::identity;
    throw ConfigError("unknown activation '" + s + "'");
}

// Text format: "mlp <n> <size_0> ... <size_n-1> <hidden> <output>" followed by
// each layer's weights (row-major) and biases at full double precision.
inline void save_mlp(std::ostream& out, const MlpParams& p) {
    out << "mlp " << p.layer_sizes.size();
    for (int n : p.layer_sizes) out << ' ' << n;
    out << ' ' << activation_name(p.hidden) << ' ' << activation_name(p.output) << '\n';
    char buf[40];
    auto put = [&](double v, char sep) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        out << buf << sep;
    };
    for (std::size_t k = 0; k < p.weights.size(); ++k) {
        for (Eigen::Index r = 0; r < p.weights[k].rows(); ++r)
            for (Eigen::Index c = 0; c < p.weights[k].cols(); ++c)
                put(p.weights[k](r, c), c + 1 == p.weights[k].cols() ? '\n' : ' ');
        for (Eigen::Index r = 0; r < p.biases[k].size(); ++r) put(p.biases[k][r], r + 1 == p.biases[k].size() ? '\n' : ' ');
    }
}

inline MlpParams load_mlp(std::istream& in) {
    std::string tag;
    std::size_t n = 0;
    if (!(in >> tag >> n) || tag != "mlp" || n < 2 || n > 64) throw ConfigError("load_mlp: bad header");
    MlpParams p;
    p.layer_sizes.resize(n);
    for (auto& s : p.layer_sizes)
        if (!(in >> s) || s < 1) throw ConfigError("load_mlp: bad layer size");
    std::string hidden, output;
    if (!(in >> hidden >> output)) throw ConfigError("load_mlp: missing activations");
    p.hidden = parse_activation(hidden);
    p.output = parse_activation(output);
    for (std::size_t k = 0; k + 1 < n; ++k) {
        Matrix w(p.layer_sizes[k + 1], p.layer_sizes[k]);
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c)
                if (!(in >> w(r, c))) throw ConfigError("load_mlp: truncated weights");
        Vector b(p.layer_sizes[k + 1]);
        for (Eigen::Index r = 0; r < b.size(); ++r)
            if (!(in >> b[r])) throw ConfigError("load_mlp: truncated biases");
        p.weights.push_back(std::move(w));
        p.biases.push_back(std::move(b));
    }
    if (!all_finite(p)) throw ConfigError("load_mlp: non-finite parameter");
    return p;
}

}  // namespace d2s::nn
