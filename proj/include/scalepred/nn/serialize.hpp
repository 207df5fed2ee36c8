#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scalepred/nn/network.hpp"

namespace scalepred::nn {

inline constexpr const char* kNetworkFormat = "scalepred-network/1";

namespace detail {

template <typename Derived>
std::vector<double> flatten_row_major(const Eigen::MatrixBase<Derived>& m) {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
    }
    return out;
}

inline RowVector row_from(const nlohmann::json& j, std::size_t expected, const char* what) {
    const auto v = j.get<std::vector<double>>();
    if (v.size() != expected) throw DataError(std::string("network file: wrong length for ") + what);
    return Eigen::Map<const RowVector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace detail

/// Network to JSON. Doubles are written in shortest round-trip form, so
/// save -> load reproduces every parameter bit for bit.
inline nlohmann::json network_to_json(const Network& net) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : net.layers()) {
        nlohmann::json jl = {{"kind", to_string(l.spec.kind)}, {"in", l.spec.in_width}, {"out", l.spec.out_width}};
        if (has_weights(l.spec.kind)) {
            jl["weight"] = detail::flatten_row_major(l.weight);
            jl["bias"] = detail::flatten_row_major(l.bias);
        } else if (l.spec.kind == LayerKind::batchnorm1d) {
            jl["gain"] = detail::flatten_row_major(l.gain);
            jl["shift"] = detail::flatten_row_major(l.shift);
            jl["running_mean"] = detail::flatten_row_major(l.running_mean);
            jl["running_var"] = detail::flatten_row_major(l.running_var);
        }
        layers.push_back(std::move(jl));
    }
    return {
        {"format", kNetworkFormat},
        {"batchnorm", {{"momentum", net.bn_momentum}, {"eps", net.bn_eps}}},
        {"standardization",
         {{"mean", detail::flatten_row_major(net.input.mean)}, {"scale", detail::flatten_row_major(net.input.scale)}}},
        {"metadata",
         {{"seed", net.metadata.seed}, {"epochs_run", net.metadata.epochs_run}, {"best_epoch", net.metadata.best_epoch}}},
        {"layers", std::move(layers)},
    };
}

inline Network network_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format") != kNetworkFormat) throw DataError("network file: unsupported format");
        std::vector<LayerSpec> specs;
        for (const auto& jl : j.at("layers")) {
            specs.push_back({layer_kind_from_string(jl.at("kind").get<std::string>()), jl.at("in").get<std::size_t>(),
                             jl.at("out").get<std::size_t>()});
        }
        Network net(specs);
        for (std::size_t i = 0; i < specs.size(); ++i) {
            const auto& jl = j.at("layers")[i];
            auto& l = net.layers()[i];
            const std::size_t in = specs[i].in_width;
            const std::size_t out = specs[i].out_width;
            if (has_weights(specs[i].kind)) {
                const auto w = jl.at("weight").get<std::vector<double>>();
                if (w.size() != in * out) throw DataError("network file: wrong weight size");
                for (std::size_t r = 0; r < out; ++r) {
                    for (std::size_t c = 0; c < in; ++c) {
                        l.weight(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = w[r * in + c];
                    }
                }
                l.bias = detail::row_from(jl.at("bias"), out, "bias");
            } else if (specs[i].kind == LayerKind::batchnorm1d) {
                l.gain = detail::row_from(jl.at("gain"), out, "gain");
                l.shift = detail::row_from(jl.at("shift"), out, "shift");
                l.running_mean = detail::row_from(jl.at("running_mean"), out, "running_mean");
                l.running_var = detail::row_from(jl.at("running_var"), out, "running_var");
            }
        }
        net.bn_momentum = j.at("batchnorm").at("momentum").get<double>();
        net.bn_eps = j.at("batchnorm").at("eps").get<double>();
        const std::size_t width = net.input_width();
        net.input.mean = detail::row_from(j.at("standardization").at("mean"), width, "standardization mean");
        net.input.scale = detail::row_from(j.at("standardization").at("scale"), width, "standardization scale");
        const auto& md = j.at("metadata");
        net.metadata = {md.at("seed").get<std::uint64_t>(), md.at("epochs_run").get<int>(),
                        md.at("best_epoch").get<int>()};
        net.validate();
        return net;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("network file: ") + e.what());
    } catch (const ConfigError& e) {
        throw DataError(std::string("network file: ") + e.what());
    }
}

}  // namespace scalepred::nn
