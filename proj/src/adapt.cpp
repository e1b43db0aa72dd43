#include "segda/adapt.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace segda::adapt {

const char* strategy_name(Strategy s) {
    switch (s) {
        case Strategy::all_layers: return "all_layers";
        case Strategy::first_layers: return "first_layers";
        case Strategy::last_layers: return "last_layers";
    }
    throw std::logic_error("bad strategy");
}

Strategy strategy_from_name(const std::string& s) {
    if (s == "all_layers") return Strategy::all_layers;
    if (s == "first_layers") return Strategy::first_layers;
    if (s == "last_layers") return Strategy::last_layers;
    throw std::invalid_argument("unknown strategy: " + s);
}

std::string AvailabilityLevel::to_string() const {
    if (kind == Kind::scans) return std::to_string(scans) + (scans == 1 ? "scan" : "scans");
    return std::to_string(frac_num) + "/" + std::to_string(frac_den);
}

AvailabilityLevel AvailabilityLevel::parse(const std::string& text) {
    AvailabilityLevel l;
    if (auto slash = text.find('/'); slash != std::string::npos) {
        l.kind = Kind::fraction;
        l.frac_num = std::stoi(text.substr(0, slash));
        l.frac_den = std::stoi(text.substr(slash + 1));
        if (l.frac_num < 1 || l.frac_den < 1 || l.frac_num > l.frac_den)
            throw std::invalid_argument("availability fraction must lie in (0, 1]: " + text);
        return l;
    }
    if (auto pos = text.find("scan"); pos != std::string::npos) {
        l.kind = Kind::scans;
        l.scans = std::stoi(text.substr(0, pos));
        if (l.scans < 1) throw std::invalid_argument("availability scans must be >= 1: " + text);
        return l;
    }
    throw std::invalid_argument("cannot parse availability level: " + text);
}

int AvailabilityLevel::stride() const {
    if (kind != Kind::fraction) return 1;
    return static_cast<int>(std::llround(static_cast<double>(frac_den) /
                                         static_cast<double>(frac_num)));
}

void apply_strategy(nn::Unet2D<float>& model, Strategy s) {
    auto groups = model.layer_groups();
    if (groups.find("first") == groups.end() || groups.find("last") == groups.end())
        throw std::runtime_error("apply_strategy: model has no populated layer groups");

    if (s == Strategy::all_layers) {
        model.for_each_param([](nn::Param<float>& p) { p.trainable = true; });
    } else {
        const auto& ids = groups.at(s == Strategy::first_layers ? "first" : "last").parameter_ids;
        const std::set<std::string> keep(ids.begin(), ids.end());
        model.for_each_param(
            [&](nn::Param<float>& p) { p.trainable = keep.count(p.name) != 0; });
    }
    model.sync_bn_freeze();
}

std::vector<std::size_t> subsample_slices(std::size_t n_total, const AvailabilityLevel& level) {
    if (n_total < 1) throw std::invalid_argument("subsample_slices: n_total must be >= 1");
    std::vector<std::size_t> idx;
    const auto stride = static_cast<std::size_t>(level.stride());
    for (std::size_t i = 0; i < n_total; i += stride) idx.push_back(i);
    return idx;
}

std::string ProvenanceRecord::to_json() const {
    nlohmann::json j;
    j["source_domain"] = source_domain;
    j["target_domain"] = target_domain;
    j["strategy"] = strategy;
    j["availability"] = availability;
    j["seed"] = seed;
    j["base_checkpoint_hash"] = base_checkpoint_hash;
    j["adaptation_case_ids"] = adaptation_case_ids;
    return j.dump(2);
}

FinetuneResult finetune(nn::Unet2D<float>& model, const std::vector<TargetCase>& pool,
                        Strategy s, const AvailabilityLevel& level,
                        train::TrainConfig config, const std::string& source_domain,
                        const std::string& target_domain,
                        const std::string& base_checkpoint_hash) {
    if (pool.empty()) throw std::invalid_argument("finetune: empty target pool");

    // scan selection: seeded shuffle of the pool, take what the level needs
    Rng scan_rng = Rng(config.seed).split(0x5ca75);
    std::vector<std::size_t> order(pool.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[scan_rng.next_below(i)]);

    const std::size_t want =
        level.kind == AvailabilityLevel::Kind::scans ? static_cast<std::size_t>(level.scans) : 1;
    if (want > pool.size())
        throw std::invalid_argument("finetune: availability " + level.to_string() + " needs " +
                                    std::to_string(want) + " scans but pool has " +
                                    std::to_string(pool.size()));

    train::SlicePool slices;
    std::vector<std::string> used_ids;
    for (std::size_t c = 0; c < want; ++c) {
        const TargetCase& tc = pool[order[c]];
        used_ids.push_back(tc.case_id);
        const auto keep = subsample_slices(tc.volume->nz(), level);
        for (std::size_t k : keep)
            slices.push_back({extract_axial_slice(*tc.volume, k),
                              extract_axial_mask_slice(*tc.mask, k)});
    }
    if (slices.empty())
        throw std::invalid_argument("finetune: availability " + level.to_string() +
                                    " produced an empty slice subsample");

    apply_strategy(model, s);
    FinetuneResult r;
    r.history = train::train(model, slices, config);
    r.provenance = {source_domain, target_domain, strategy_name(s), level.to_string(),
                    config.seed,   base_checkpoint_hash, used_ids};
    return r;
}

} // namespace segda::adapt
