#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "scalepred/core.hpp"

namespace scalepred::nn {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

enum class LayerKind { dense, batchnorm1d, relu, softmax, hardtanh01, linear_head };

inline std::string to_string(LayerKind k) {
    switch (k) {
        case LayerKind::dense: return "dense";
        case LayerKind::batchnorm1d: return "batchnorm1d";
        case LayerKind::relu: return "relu";
        case LayerKind::softmax: return "softmax";
        case LayerKind::hardtanh01: return "hardtanh01";
        case LayerKind::linear_head: return "linear_head";
    }
    return "?";
}

inline LayerKind layer_kind_from_string(const std::string& s) {
    for (auto k : {LayerKind::dense, LayerKind::batchnorm1d, LayerKind::relu, LayerKind::softmax,
                   LayerKind::hardtanh01, LayerKind::linear_head}) {
        if (to_string(k) == s) return k;
    }
    throw DataError("unknown layer kind '" + s + "'");
}

inline bool has_weights(LayerKind k) { return k == LayerKind::dense || k == LayerKind::linear_head; }

struct LayerSpec {
    LayerKind kind = LayerKind::dense;
    std::size_t in_width = 1;
    std::size_t out_width = 1;

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// One layer with its parameters. Dense weights are out x in (row = output unit).
struct Layer {
    LayerSpec spec;
    Matrix weight;
    RowVector bias;
    RowVector gain;
    RowVector shift;
    RowVector running_mean;
    RowVector running_var;
};

/// Per-feature z-score applied to raw inputs before the first layer.
struct Standardizer {
    RowVector mean;
    RowVector scale;

    static Standardizer identity(std::size_t width) {
        return {RowVector::Zero(static_cast<Eigen::Index>(width)), RowVector::Ones(static_cast<Eigen::Index>(width))};
    }

    static Standardizer fit(const Matrix& x) {
        Standardizer s;
        const double n = static_cast<double>(x.rows());
        s.mean = x.colwise().mean();
        s.scale.resize(x.cols());
        for (Eigen::Index c = 0; c < x.cols(); ++c) {
            const double var = (x.col(c).array() - s.mean(c)).square().sum() / n;
            const double sd = std::sqrt(var);
            s.scale(c) = sd > 1e-12 ? sd : 1.0;  // constant features pass through centered
        }
        return s;
    }

    [[nodiscard]] Matrix apply(const Matrix& x) const {
        return (x.rowwise() - mean).array().rowwise() / scale.array();
    }
};

struct TrainingMetadata {
    std::uint64_t seed = 0;
    int epochs_run = 0;
    int best_epoch = 0;
};

enum class Mode { train, infer };

struct ForwardCache {
    std::vector<Matrix> inputs;  // input of each layer
    std::vector<Matrix> outputs;
    std::vector<Matrix> normalized;   // batch-norm x_hat
    std::vector<RowVector> inv_std;   // batch-norm 1/sqrt(var + eps)
    std::uint64_t version = 0;
    bool valid = false;
};

struct LayerGradient {
    Matrix weight;
    RowVector bias;
    RowVector gain;
    RowVector shift;
};

struct Gradients {
    std::vector<LayerGradient> layers;
};

/// Contiguous view of one trainable tensor.
struct ParamBlock {
    double* data;
    std::size_t size;
    std::size_t layer;
    LayerKind kind;
};

class Network {
public:
    double bn_momentum = 0.1;
    double bn_eps = 1e-5;
    Standardizer input;
    TrainingMetadata metadata;

    Network() = default;

    explicit Network(std::vector<LayerSpec> specs) {
        for (const auto& s : specs) append(s);
        validate();
        input = Standardizer::identity(input_width());
    }

    [[nodiscard]] const std::vector<Layer>& layers() const { return layers_; }
    [[nodiscard]] std::vector<Layer>& layers() { return layers_; }
    [[nodiscard]] std::size_t input_width() const { return layers_.front().spec.in_width; }
    [[nodiscard]] std::size_t output_width() const { return layers_.back().spec.out_width; }
    [[nodiscard]] std::uint64_t version() const { return version_; }
    void touch() { ++version_; }

    void validate() const {
        if (layers_.empty()) throw ConfigError("network: no layers");
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            const auto& s = layers_[i].spec;
            if (s.in_width < 1 || s.out_width < 1) throw ConfigError("network: widths must be >= 1");
            if (!has_weights(s.kind) && s.in_width != s.out_width) {
                throw ConfigError("network: " + to_string(s.kind) + " must preserve width");
            }
            if (i > 0 && layers_[i - 1].spec.out_width != s.in_width) {
                throw ConfigError("network: layer " + std::to_string(i) + " width mismatch");
            }
            if (s.kind == LayerKind::batchnorm1d && (layers_[i].running_var.array() <= 0.0).any()) {
                throw ConfigError("network: batch-norm running variance must be positive");
            }
        }
    }

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights; zero biases except a
    /// hardtanh01 head, whose preceding bias starts at 0.5.
    void initialize(std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            auto& l = layers_[i];
            if (!has_weights(l.spec.kind)) continue;
            const double bound = 1.0 / std::sqrt(static_cast<double>(l.spec.in_width));
            std::uniform_real_distribution<double> u(-bound, bound);
            for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
                for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = u(rng);
            }
            l.bias.setZero();
            if (i + 1 < layers_.size() && layers_[i + 1].spec.kind == LayerKind::hardtanh01) l.bias.setConstant(0.5);
        }
        metadata.seed = seed;
        touch();
    }

    [[nodiscard]] std::vector<ParamBlock> parameters() {
        std::vector<ParamBlock> out;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            auto& l = layers_[i];
            if (has_weights(l.spec.kind)) {
                out.push_back({l.weight.data(), static_cast<std::size_t>(l.weight.size()), i, l.spec.kind});
                out.push_back({l.bias.data(), static_cast<std::size_t>(l.bias.size()), i, l.spec.kind});
            } else if (l.spec.kind == LayerKind::batchnorm1d) {
                out.push_back({l.gain.data(), static_cast<std::size_t>(l.gain.size()), i, l.spec.kind});
                out.push_back({l.shift.data(), static_cast<std::size_t>(l.shift.size()), i, l.spec.kind});
            }
        }
        return out;
    }

    [[nodiscard]] std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& l : layers_) {
            n += static_cast<std::size_t>(l.weight.size() + l.bias.size() + l.gain.size() + l.shift.size());
        }
        return n;
    }

    /// Runs the stack. Train mode normalizes with batch statistics, updates the
    /// running statistics and fills `cache` when given.
    Matrix forward(const Matrix& x, Mode mode, ForwardCache* cache = nullptr) {
        if (static_cast<std::size_t>(x.cols()) != input_width()) {
            throw DataError("network: input width " + std::to_string(x.cols()) + ", expected " +
                            std::to_string(input_width()));
        }
        if (mode == Mode::train && x.rows() < 2) throw DataError("network: train mode needs a batch of >= 2");
        if (cache) {
            cache->inputs.assign(layers_.size(), {});
            cache->outputs.assign(layers_.size(), {});
            cache->normalized.assign(layers_.size(), {});
            cache->inv_std.assign(layers_.size(), {});
        }
        Matrix h = input.apply(x);
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            auto& l = layers_[i];
            Matrix out;
            switch (l.spec.kind) {
                case LayerKind::dense:
                case LayerKind::linear_head:
                    out = (h * l.weight.transpose()).rowwise() + l.bias;
                    break;
                case LayerKind::batchnorm1d: {
                    RowVector mean;
                    RowVector var;
                    if (mode == Mode::train) {
                        const double n = static_cast<double>(h.rows());
                        mean = h.colwise().mean();
                        var = (h.rowwise() - mean).array().square().colwise().sum() / n;
                        const double unbiased = n / (n - 1.0);
                        l.running_mean = (1.0 - bn_momentum) * l.running_mean + bn_momentum * mean;
                        l.running_var = (1.0 - bn_momentum) * l.running_var + bn_momentum * unbiased * var;
                    } else {
                        mean = l.running_mean;
                        var = l.running_var;
                    }
                    RowVector inv = (var.array() + bn_eps).rsqrt();
                    Matrix xhat = (h.rowwise() - mean).array().rowwise() * inv.array();
                    out = (xhat.array().rowwise() * l.gain.array()).rowwise() + l.shift.array();
                    if (cache) {
                        cache->normalized[i] = std::move(xhat);
                        cache->inv_std[i] = std::move(inv);
                    }
                    break;
                }
                case LayerKind::relu:
                    out = h.cwiseMax(0.0);
                    break;
                case LayerKind::hardtanh01:
                    out = h.cwiseMax(0.0).cwiseMin(1.0);
                    break;
                case LayerKind::softmax: {
                    out = h.colwise() - h.rowwise().maxCoeff();
                    out = out.array().exp();
                    out = out.array().colwise() / out.rowwise().sum().array();
                    break;
                }
            }
            if (cache) {
                cache->inputs[i] = std::move(h);
                cache->outputs[i] = out;
            }
            h = std::move(out);
        }
        if (cache) {
            cache->version = version_;
            cache->valid = mode == Mode::train;
        }
        return h;
    }

    [[nodiscard]] Matrix predict(const Matrix& x) const {
        // infer mode never mutates; the cast only reuses the shared code path
        return const_cast<Network*>(this)->forward(x, Mode::infer);
    }

private:
    void append(const LayerSpec& s) {
        Layer l;
        l.spec = s;
        const auto in = static_cast<Eigen::Index>(s.in_width);
        const auto out = static_cast<Eigen::Index>(s.out_width);
        if (has_weights(s.kind)) {
            l.weight = Matrix::Zero(out, in);
            l.bias = RowVector::Zero(out);
        } else if (s.kind == LayerKind::batchnorm1d) {
            l.gain = RowVector::Ones(out);
            l.shift = RowVector::Zero(out);
            l.running_mean = RowVector::Zero(out);
            l.running_var = RowVector::Ones(out);
        }
        layers_.push_back(std::move(l));
    }

    std::vector<Layer> layers_;
    std::uint64_t version_ = 0;
};

struct BackwardOptions {
    /// The supplied gradient is w.r.t. the input of a final softmax layer
    /// (fused softmax + cross-entropy) rather than w.r.t. its output.
    bool gradient_at_softmax_input = false;
};

/// Backpropagates `output_grad` through a train-mode forward pass.
inline Gradients backward(const Network& net, const ForwardCache& cache, const Matrix& output_grad,
                          BackwardOptions opts = {}) {
    if (!cache.valid || cache.version != net.version() || cache.inputs.size() != net.layers().size()) {
        throw DataError("backward: stale or missing train-mode forward cache");
    }
    const auto& layers = net.layers();
    Gradients grads;
    grads.layers.resize(layers.size());
    Matrix g = output_grad;
    std::size_t top = layers.size();
    if (opts.gradient_at_softmax_input) {
        if (layers.back().spec.kind != LayerKind::softmax) {
            throw DataError("backward: fused gradient requires a final softmax");
        }
        top -= 1;
    }
    for (std::size_t idx = top; idx-- > 0;) {
        const auto& l = layers[idx];
        const Matrix& x = cache.inputs[idx];
        auto& lg = grads.layers[idx];
        switch (l.spec.kind) {
            case LayerKind::dense:
            case LayerKind::linear_head:
                lg.weight = g.transpose() * x;
                lg.bias = g.colwise().sum();
                g = g * l.weight;
                break;
            case LayerKind::batchnorm1d: {
                const Matrix& xhat = cache.normalized[idx];
                const double n = static_cast<double>(x.rows());
                lg.gain = (g.array() * xhat.array()).colwise().sum();
                lg.shift = g.colwise().sum();
                Matrix dxhat = g.array().rowwise() * l.gain.array();
                const RowVector sum_d = dxhat.colwise().sum();
                const RowVector sum_dx = (dxhat.array() * xhat.array()).colwise().sum();
                Matrix centered = (n * dxhat).rowwise() - sum_d;
                centered -= (xhat.array().rowwise() * sum_dx.array()).matrix();
                g = (centered.array().rowwise() * (cache.inv_std[idx].array() / n)).matrix();
                break;
            }
            case LayerKind::relu:
                g = (x.array() > 0.0).select(g, 0.0);
                break;
            case LayerKind::hardtanh01:
                g = (x.array() > 0.0 && x.array() < 1.0).select(g, 0.0);
                break;
            case LayerKind::softmax: {
                const Matrix& y = cache.outputs[idx];
                const Eigen::VectorXd dot = (g.array() * y.array()).rowwise().sum();
                g = (y.array() * (g.colwise() - dot).array()).matrix();
                break;
            }
        }
    }
    return grads;
}

/// Flat views of `grads` in the same order as Network::parameters().
inline std::vector<ParamBlock> gradient_blocks(const Network& net, Gradients& grads) {
    std::vector<ParamBlock> out;
    const auto& layers = net.layers();
    for (std::size_t i = 0; i < layers.size(); ++i) {
        auto& lg = grads.layers[i];
        const auto& l = layers[i];
        if (has_weights(l.spec.kind)) {
            if (lg.weight.size() == 0) {
                lg.weight = Matrix::Zero(l.weight.rows(), l.weight.cols());
                lg.bias = RowVector::Zero(l.bias.size());
            }
            out.push_back({lg.weight.data(), static_cast<std::size_t>(lg.weight.size()), i, l.spec.kind});
            out.push_back({lg.bias.data(), static_cast<std::size_t>(lg.bias.size()), i, l.spec.kind});
        } else if (l.spec.kind == LayerKind::batchnorm1d) {
            if (lg.gain.size() == 0) {
                lg.gain = RowVector::Zero(l.gain.size());
                lg.shift = RowVector::Zero(l.shift.size());
            }
            out.push_back({lg.gain.data(), static_cast<std::size_t>(lg.gain.size()), i, l.spec.kind});
            out.push_back({lg.shift.data(), static_cast<std::size_t>(lg.shift.size()), i, l.spec.kind});
        }
    }
    return out;
}

// ---- losses ---------------------------------------------------------------

struct LossResult {
    double value = 0.0;
    Matrix grad;  // d loss / d network output
};

inline constexpr double kProbabilityFloor = 1e-12;

/// Mean over rows of -log p[label]; `labels` are 0-based class indices.
inline LossResult loss_cross_entropy(const Matrix& probs, std::span<const int> labels) {
    if (static_cast<std::size_t>(probs.rows()) != labels.size()) throw DataError("cross entropy: row mismatch");
    const double n = static_cast<double>(probs.rows());
    LossResult r{0.0, Matrix::Zero(probs.rows(), probs.cols())};
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        const auto k = static_cast<Eigen::Index>(labels[static_cast<std::size_t>(i)]);
        if (k < 0 || k >= probs.cols()) throw DataError("cross entropy: label out of range");
        const double p = probs(i, k);
        r.value -= std::log(std::max(p, kProbabilityFloor));
        if (p > kProbabilityFloor) r.grad(i, k) = -1.0 / (n * p);
    }
    r.value /= n;
    return r;
}

/// One-hot form of the same loss.
inline double loss_cross_entropy_onehot(const Matrix& probs, const Matrix& onehot) {
    const Matrix logp = probs.cwiseMax(kProbabilityFloor).array().log();
    return -(onehot.array() * logp.array()).sum() / static_cast<double>(probs.rows());
}

/// Cross-entropy gradient w.r.t. the softmax input: (p - onehot) / n.
inline Matrix cross_entropy_logit_grad(const Matrix& probs, std::span<const int> labels) {
    Matrix g = probs / static_cast<double>(probs.rows());
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        g(i, labels[static_cast<std::size_t>(i)]) -= 1.0 / static_cast<double>(probs.rows());
    }
    return g;
}

inline LossResult loss_mse(const Matrix& pred, std::span<const double> targets) {
    if (static_cast<std::size_t>(pred.rows()) != targets.size() || pred.cols() != 1) {
        throw DataError("mse: shape mismatch");
    }
    const double n = static_cast<double>(pred.rows());
    LossResult r{0.0, Matrix(pred.rows(), 1)};
    for (Eigen::Index i = 0; i < pred.rows(); ++i) {
        const double e = pred(i, 0) - targets[static_cast<std::size_t>(i)];
        r.value += e * e;
        r.grad(i, 0) = 2.0 * e / n;
    }
    r.value /= n;
    return r;
}

}  // namespace scalepred::nn
