#pragma once

// Checkpoint container: "<stem>.json" manifest + "<stem>.bin" payload.
// The manifest lists the model spec, the layer-group names, and every
// tensor (parameters plus batchnorm running statistics) with shape and
// byte offset; the payload holds raw little-endian float32 in manifest
// order. Save -> load round-trips bit-exactly.

#include <cstdint>
#include <fstream>
#include <string>

#include <json.hpp>

#include "segda/model.hpp"

namespace segda::nn {

inline constexpr int kCheckpointFormatVersion = 1;

namespace detail {

template <typename T>
void collect_tensors(Unet2D<T>& m,
                     std::vector<std::pair<std::string, Tensor<T>*>>& out) {
    m.for_each_param([&](Param<T>& p) { out.emplace_back(p.name, &p.value); });
    m.for_each_bn([&](BatchNorm2D<T>& bn) {
        out.emplace_back(bn.name + ".running_mean", &bn.running_mean);
        out.emplace_back(bn.name + ".running_var", &bn.running_var);
    });
}

} // namespace detail

template <typename T>
void save_checkpoint(Unet2D<T>& m, const std::string& stem) {
    nlohmann::json j;
    j["format_version"] = kCheckpointFormatVersion;
    j["spec"] = {{"variant", variant_name(m.spec().variant)},
                 {"depth", m.spec().depth},
                 {"base_filters", m.spec().base_filters},
                 {"in_channels", m.spec().in_channels},
                 {"out_channels", m.spec().out_channels}};
    std::vector<std::pair<std::string, Tensor<T>*>> tensors;
    detail::collect_tensors(m, tensors);

    nlohmann::json jt = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (auto& [name, t] : tensors) {
        jt.push_back({{"name", name},
                      {"shape", t->shape()},
                      {"offset", offset},
                      {"dtype", sizeof(T) == 4 ? "f32" : "f64"}});
        offset += t->numel() * sizeof(T);
    }
    j["tensors"] = std::move(jt);
    nlohmann::json jg = nlohmann::json::object();
    for (auto& [name, group] : m.layer_groups()) jg[name] = group.parameter_ids;
    j["layer_groups"] = std::move(jg);

    std::ofstream jf(stem + ".json");
    if (!jf) throw std::runtime_error("cannot write checkpoint manifest: " + stem + ".json");
    jf << j.dump(2) << "\n";

    std::ofstream bf(stem + ".bin", std::ios::binary);
    if (!bf) throw std::runtime_error("cannot write checkpoint payload: " + stem + ".bin");
    for (auto& [name, t] : tensors)
        bf.write(reinterpret_cast<const char*>(t->data()),
                 static_cast<std::streamsize>(t->numel() * sizeof(T)));
    if (!bf) throw std::runtime_error("short checkpoint write: " + stem + ".bin");
}

template <typename T>
Unet2D<T> load_checkpoint(const std::string& stem) {
    std::ifstream jf(stem + ".json");
    if (!jf) throw std::runtime_error("cannot read checkpoint manifest: " + stem + ".json");
    nlohmann::json j = nlohmann::json::parse(jf);
    if (j.at("format_version").get<int>() != kCheckpointFormatVersion)
        throw std::runtime_error(stem + ": unsupported checkpoint format version");

    ModelSpec spec;
    spec.variant = variant_from_name(j.at("spec").at("variant").get<std::string>());
    spec.depth = j.at("spec").at("depth").get<int>();
    spec.base_filters = j.at("spec").at("base_filters").get<int>();
    spec.in_channels = j.at("spec").at("in_channels").get<int>();
    spec.out_channels = j.at("spec").at("out_channels").get<int>();

    Unet2D<T> m = Unet2D<T>::build(spec, Rng(0));
    std::vector<std::pair<std::string, Tensor<T>*>> tensors;
    detail::collect_tensors(m, tensors);
    if (tensors.size() != j.at("tensors").size())
        throw std::runtime_error(stem + ": tensor count mismatch");

    std::ifstream bf(stem + ".bin", std::ios::binary);
    if (!bf) throw std::runtime_error("cannot read checkpoint payload: " + stem + ".bin");
    std::size_t i = 0;
    for (const auto& jt : j.at("tensors")) {
        auto& [name, t] = tensors[i++];
        if (jt.at("name").get<std::string>() != name)
            throw std::runtime_error(stem + ": tensor order mismatch at " + name);
        const auto shape = jt.at("shape").get<std::vector<std::size_t>>();
        if (shape != t->shape())
            throw std::runtime_error(stem + ": shape mismatch for " + name);
        bf.read(reinterpret_cast<char*>(t->data()),
                static_cast<std::streamsize>(t->numel() * sizeof(T)));
        if (!bf) throw std::runtime_error("short checkpoint read: " + stem + ".bin");
    }
    return m;
}

} // namespace segda::nn
