#pragma once

#include <cmath>
#include <vector>

#include "scalepred/nn/network.hpp"

namespace scalepred::nn {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// First and second moment estimates, one vector per parameter block.
struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    long step = 0;
};

/// One bias-corrected Adam step. Increments `state.step` before use, so the
/// first call runs with t = 1.
inline void adam_update(Network& net, Gradients& grads, const AdamConfig& cfg, AdamState& state) {
    auto params = net.parameters();
    auto gblocks = gradient_blocks(net, grads);
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.emplace_back(p.size, 0.0);
            state.v.emplace_back(p.size, 0.0);
        }
    }
    ++state.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t b = 0; b < params.size(); ++b) {
        double* theta = params[b].data;
        const double* g = gblocks[b].data;
        auto& m = state.m[b];
        auto& v = state.v[b];
        for (std::size_t i = 0; i < params[b].size; ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            theta[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
        }
    }
    net.touch();
}

}  // namespace scalepred::nn
