#pragma once

#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "scalepred/nn/gradcheck.hpp"
#include "scalepred/nn/network.hpp"
#include "scalepred/nn/optim.hpp"

namespace scalepred::nn {

struct TrainConfig {
    AdamConfig adam;
    std::size_t batch_size = 256;
    int max_epochs = 200;
    int patience = 20;  // 0 disables early stopping
    double validation_fraction = 0.1;
    std::uint64_t seed = 0;
    /// Caps minibatches per epoch (0 = full pass). Each epoch still draws a
    /// fresh permutation of the whole training set.
    std::size_t max_batches_per_epoch = 0;
    /// Halve-style decay: after this many epochs without a new best
    /// validation loss the learning rate is multiplied by lr_decay (0 = off).
    int lr_plateau_patience = 0;
    double lr_decay = 0.5;

    void validate() const {
        auto require = [](bool ok, const char* what) {
            if (!ok) throw ConfigError(std::string("train config: ") + what);
        };
        require(adam.learning_rate > 0.0 && adam.epsilon > 0.0, "learning rate and epsilon must be positive");
        require(adam.beta1 > 0.0 && adam.beta1 < 1.0 && adam.beta2 > 0.0 && adam.beta2 < 1.0,
                "Adam betas must lie in (0,1)");
        require(batch_size >= 2, "batch_size must be >= 2");
        require(max_epochs >= 1, "max_epochs must be >= 1");
        require(patience >= 0, "patience must be >= 0");
        require(lr_plateau_patience >= 0, "lr_plateau_patience must be >= 0");
        require(lr_decay > 0.0 && lr_decay <= 1.0, "lr_decay must lie in (0,1]");
        require(validation_fraction > 0.0 && validation_fraction <= 0.5, "validation_fraction must lie in (0, 0.5]");
    }
};

struct EpochLog {
    int epoch = 0;
    double learning_rate = 0.0;
    double train_loss = 0.0;
    double validation_loss = 0.0;
};

struct TrainHistory {
    std::vector<EpochLog> epochs;
    int best_epoch = 0;
    double best_validation_loss = std::numeric_limits<double>::infinity();
};

inline Targets gather_targets(const Targets& t, std::span<const std::size_t> rows) {
    Targets out;
    if (!t.classes.empty()) {
        out.classes.reserve(rows.size());
        for (auto r : rows) out.classes.push_back(t.classes[r]);
    }
    if (!t.values.empty()) {
        out.values.reserve(rows.size());
        for (auto r : rows) out.values.push_back(t.values[r]);
    }
    return out;
}

/// Mean loss in infer mode, evaluated in chunks.
inline double dataset_loss(const Network& net, const Matrix& x, const Targets& t, LossKind kind,
                           Eigen::Index chunk = 4096) {
    double total = 0.0;
    for (Eigen::Index begin = 0; begin < x.rows(); begin += chunk) {
        const Eigen::Index n = std::min(chunk, x.rows() - begin);
        std::vector<std::size_t> idx(static_cast<std::size_t>(n));
        std::iota(idx.begin(), idx.end(), static_cast<std::size_t>(begin));
        const Matrix out = net.predict(x.middleRows(begin, n));
        total += evaluate_loss(out, gather_targets(t, idx), kind) * static_cast<double>(n);
    }
    return total / static_cast<double>(x.rows());
}

/// Minibatch Adam with validation-based early stopping. `net` ends up as the
/// best-validation snapshot. Input standardization is fitted to `x_train`.
inline TrainHistory train_network(Network& net, const Matrix& x_train, const Targets& y_train, const Matrix& x_val,
                                  const Targets& y_val, LossKind loss, const TrainConfig& cfg) {
    cfg.validate();
    if (x_train.rows() < 2) throw DataError("train: need at least 2 training rows");
    if (x_val.rows() < 1) throw DataError("train: empty validation set");
    net.input = Standardizer::fit(x_train);
    net.touch();

    std::mt19937_64 rng(cfg.seed);
    AdamState adam;
    TrainHistory history;
    Network best = net;
    std::vector<std::size_t> order(static_cast<std::size_t>(x_train.rows()));
    std::iota(order.begin(), order.end(), std::size_t{0});

    int since_best = 0;
    AdamConfig adam_cfg = cfg.adam;
    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        for (std::size_t i = order.size() - 1; i > 0; --i) {
            std::uniform_int_distribution<std::size_t> pick(0, i);
            std::swap(order[i], order[pick(rng)]);
        }
        std::size_t n_batches = (order.size() + cfg.batch_size - 1) / cfg.batch_size;
        if (cfg.max_batches_per_epoch > 0) n_batches = std::min(n_batches, cfg.max_batches_per_epoch);

        double loss_sum = 0.0;
        std::size_t loss_rows = 0;
        for (std::size_t b = 0; b < n_batches; ++b) {
            const std::size_t begin = b * cfg.batch_size;
            const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
            if (end - begin < 2) continue;  // batch statistics need two rows
            std::span<const std::size_t> rows(order.data() + begin, end - begin);
            const Matrix xb = x_train(std::vector<Eigen::Index>(rows.begin(), rows.end()), Eigen::all);
            const Targets yb = gather_targets(y_train, rows);

            ForwardCache cache;
            const Matrix out = net.forward(xb, Mode::train, &cache);
            Gradients grads;
            if (loss == LossKind::cross_entropy) {
                loss_sum += loss_cross_entropy(out, yb.classes).value * static_cast<double>(rows.size());
                grads = backward(net, cache, cross_entropy_logit_grad(out, yb.classes),
                                 {.gradient_at_softmax_input = true});
            } else {
                const auto l = loss_mse(out, yb.values);
                loss_sum += l.value * static_cast<double>(rows.size());
                grads = backward(net, cache, l.grad);
            }
            loss_rows += rows.size();
            adam_update(net, grads, adam_cfg, adam);
        }

        const double val = dataset_loss(net, x_val, y_val, loss);
        history.epochs.push_back({epoch, adam_cfg.learning_rate, loss_rows ? loss_sum / static_cast<double>(loss_rows) : 0.0, val});
        net.metadata.epochs_run = epoch;
        if (val < history.best_validation_loss) {
            history.best_validation_loss = val;
            history.best_epoch = epoch;
            best = net;
            since_best = 0;
        } else {
            ++since_best;
            if (cfg.patience > 0 && since_best >= cfg.patience) break;
            if (cfg.lr_plateau_patience > 0 && since_best % cfg.lr_plateau_patience == 0) {
                adam_cfg.learning_rate *= cfg.lr_decay;
            }
        }
    }
    const int epochs_run = net.metadata.epochs_run;
    net = std::move(best);
    net.metadata.epochs_run = epochs_run;
    net.metadata.best_epoch = history.best_epoch;
    net.metadata.seed = cfg.seed;
    net.touch();
    return history;
}

}  // namespace scalepred::nn
