#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <vector>

#include "scalepred/nn/network.hpp"

namespace scalepred::nn {

enum class LossKind { cross_entropy, mse };

/// Supervision for one batch: class indices (0-based) or scalar targets.
struct Targets {
    std::vector<int> classes;
    std::vector<double> values;
};

inline double evaluate_loss(const Matrix& out, const Targets& t, LossKind kind) {
    return kind == LossKind::cross_entropy ? loss_cross_entropy(out, t.classes).value : loss_mse(out, t.values).value;
}

struct GradCheckReport {
    double max_relative_error = 0.0;
    std::map<LayerKind, double> max_by_kind;
    std::map<LayerKind, std::size_t> checked_by_kind;
    std::size_t checked = 0;
    /// Coordinates whose +-h perturbation moved a ReLU/hardtanh input across a kink.
    std::size_t skipped_at_kinks = 0;
    /// Dense biases feeding batch norm: the train-mode loss does not depend on
    /// them, so their exact gradient is 0 and the numeric one is pure rounding.
    std::size_t excluded_invariant = 0;
    double tolerance = 0.0;
    bool passed = false;
};

namespace detail {

// Region of every ReLU (<=0 | >0) and hardtanh01 (<=0 | inside | >=1) input.
inline std::vector<signed char> kink_signature(const Network& net, const ForwardCache& cache) {
    std::vector<signed char> sig;
    const auto& layers = net.layers();
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto kind = layers[i].spec.kind;
        if (kind != LayerKind::relu && kind != LayerKind::hardtanh01) continue;
        const Matrix& x = cache.inputs[i];
        for (Eigen::Index k = 0; k < x.size(); ++k) {
            const double v = x.data()[k];
            if (kind == LayerKind::relu) {
                sig.push_back(v > 0.0 ? 1 : 0);
            } else {
                sig.push_back(v <= 0.0 ? 0 : (v < 1.0 ? 1 : 2));
            }
        }
    }
    return sig;
}

}  // namespace detail

/// Compares backprop against central differences (L(p+h) - L(p-h)) / 2h on a
/// seeded subset of at most `per_kind` coordinates per trainable layer kind.
///
/// Relative error uses max(|analytic|, |numeric|, floor) as denominator.
/// Coordinates whose perturbation crosses a ReLU/hardtanh kink are not
/// differentiable there and are counted in `skipped_at_kinks` instead. Biases
/// of a dense layer feeding batch norm are left out (`excluded_invariant`).
inline GradCheckReport gradient_check(const Network& model, const Matrix& batch, const Targets& targets,
                                      LossKind loss, double h, double tolerance, std::uint64_t seed = 1,
                                      std::size_t per_kind = 200, double floor = 1e-8) {
    if (h < 1e-7 || h > 1e-4) throw ConfigError("gradient_check: step h must lie in [1e-7, 1e-4]");
    Network net = model;
    ForwardCache cache;
    const Matrix out = net.forward(batch, Mode::train, &cache);
    LossResult lr = loss == LossKind::cross_entropy ? loss_cross_entropy(out, targets.classes)
                                                    : loss_mse(out, targets.values);
    Gradients grads = backward(net, cache, lr.grad);
    const auto base_sig = detail::kink_signature(net, cache);

    auto params = net.parameters();
    auto gblocks = gradient_blocks(net, grads);

    struct Coord {
        std::size_t block;
        std::size_t index;
    };
    std::map<LayerKind, std::vector<Coord>> by_kind;
    std::size_t excluded = 0;
    const auto& layers = net.layers();
    for (std::size_t b = 0; b < params.size(); ++b) {
        const std::size_t li = params[b].layer;
        if (params[b].kind == LayerKind::dense && params[b].data == layers[li].bias.data() &&
            li + 1 < layers.size() && layers[li + 1].spec.kind == LayerKind::batchnorm1d) {
            excluded += params[b].size;
            continue;
        }
        for (std::size_t i = 0; i < params[b].size; ++i) by_kind[params[b].kind].push_back({b, i});
    }

    std::mt19937_64 rng(seed);
    GradCheckReport report;
    report.tolerance = tolerance;
    report.excluded_invariant = excluded;
    auto eval_at = [&](double* p, double value, std::vector<signed char>& sig) {
        const double saved = *p;
        *p = value;
        ForwardCache c;
        const double l = evaluate_loss(net.forward(batch, Mode::train, &c), targets, loss);
        sig = detail::kink_signature(net, c);
        *p = saved;
        return l;
    };

    for (auto& [kind, coords] : by_kind) {
        // partial Fisher-Yates: first n entries form the sample
        const std::size_t n = std::min(per_kind, coords.size());
        for (std::size_t i = 0; i < n; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, coords.size() - 1);
            std::swap(coords[i], coords[pick(rng)]);
        }
        double& kind_max = report.max_by_kind[kind];
        for (std::size_t i = 0; i < n; ++i) {
            const auto [b, k] = coords[i];
            double* p = params[b].data + k;
            const double theta = *p;
            std::vector<signed char> sig_plus;
            std::vector<signed char> sig_minus;
            const double lp = eval_at(p, theta + h, sig_plus);
            const double lm = eval_at(p, theta - h, sig_minus);
            if (sig_plus != base_sig || sig_minus != base_sig) {
                ++report.skipped_at_kinks;
                continue;
            }
            const double numeric = (lp - lm) / (2.0 * h);
            const double analytic = gblocks[b].data[k];
            const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
            const double rel = std::abs(analytic - numeric) / denom;
            kind_max = std::max(kind_max, rel);
            report.max_relative_error = std::max(report.max_relative_error, rel);
            ++report.checked;
            ++report.checked_by_kind[kind];
        }
    }
    report.passed = report.checked > 0 && report.max_relative_error <= tolerance;
    return report;
}

}  // namespace scalepred::nn
