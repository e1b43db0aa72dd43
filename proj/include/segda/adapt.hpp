#pragma once

// Supervised domain adaptation: the three fine-tuning strategies and the
// target-data availability protocol.

#include <string>
#include <vector>

#include "segda/model.hpp"
#include "segda/train.hpp"
#include "segda/volume.hpp"

namespace segda::adapt {

enum class Strategy { all_layers, first_layers, last_layers };

const char* strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& s);

struct AvailabilityLevel {
    enum class Kind { scans, fraction };
    Kind kind = Kind::scans;
    int scans = 1;                    // when kind == scans
    int frac_num = 1, frac_den = 1;   // exact rational when kind == fraction

    // "3scans", "1scan", "1/48"
    std::string to_string() const;
    static AvailabilityLevel parse(const std::string& text);

    // stride for even slice subsampling: round(1 / fraction)
    int stride() const;
};

// Marks exactly the strategy's layer group trainable (everything for
// all_layers) and freezes batchnorm running statistics alongside.
void apply_strategy(nn::Unet2D<float>& model, Strategy s);

// Indices of the evenly strided slice subset. For kind == scans every
// slice is kept (scan selection happens in finetune()).
std::vector<std::size_t> subsample_slices(std::size_t n_total, const AvailabilityLevel& level);

struct TargetCase {
    std::string case_id;
    const Volume* volume = nullptr;
    const Mask* mask = nullptr;
};

struct ProvenanceRecord {
    std::string source_domain;
    std::string target_domain;
    std::string strategy;
    std::string availability;
    std::uint64_t seed = 0;
    std::string base_checkpoint_hash;
    std::vector<std::string> adaptation_case_ids;

    std::string to_json() const;
};

struct FinetuneResult {
    train::TrainHistory history;
    ProvenanceRecord provenance;
};

// Composes scan selection -> slice subsampling -> apply_strategy -> train.
// `model` holds the loaded pretrained weights and is adapted in place.
// Scan choice is uniform from `pool` under the config seed and recorded
// in the provenance.
FinetuneResult finetune(nn::Unet2D<float>& model, const std::vector<TargetCase>& pool,
                        Strategy s, const AvailabilityLevel& level,
                        train::TrainConfig config, const std::string& source_domain,
                        const std::string& target_domain,
                        const std::string& base_checkpoint_hash);

} // namespace segda::adapt
