#pragma once

// Experiment orchestration: manifest parsing and validation, the run
// ledger with content-hash resume, and the end-to-end study driver
// (source training, oracle cross-validation, baseline transfer, the
// fine-tuning grid, aggregation and report).

#include <map>
#include <string>
#include <vector>

#include "segda/adapt.hpp"
#include "segda/eval.hpp"
#include "segda/model.hpp"
#include "segda/train.hpp"

namespace segda::study {

inline constexpr int kManifestSchemaVersion = 1;
inline constexpr int kOracleFolds = 3;

struct ExperimentManifest {
    std::string manifest_dir;  // directory of the manifest file, for relative paths
    std::string dataset_path;  // resolved dataset manifest path
    std::vector<std::string> domains;
    std::string model = "residual_unet";
    std::string profile = "desk";  // desk | paper
    std::vector<std::string> strategies;
    std::vector<std::string> levels;
    std::vector<std::uint64_t> seeds;
    std::vector<eval::PairKey> pairs;  // directed fine-tuning pairs
    std::string out_dir;
    std::map<std::string, double> overrides;

    nn::ModelSpec model_spec() const;
    train::TrainConfig source_config() const;
    train::TrainConfig finetune_config() const;

    // canonical echo with all defaults applied
    std::string to_json() const;
};

// Parses and schema-checks; fills defaults (domains/pairs from the
// dataset, all strategies, stock levels); verifies referenced files
// exist. Throws std::runtime_error naming the offending field.
ExperimentManifest validate_manifest(const std::string& path);

struct LedgerEntry {
    std::string step;
    std::string inputs_hash;
    std::string outputs_hash;
    std::vector<std::string> outputs;  // paths relative to the output dir
    double seconds = 0.0;
    std::uint64_t seed = 0;
    std::string error;  // nonempty for failed steps
};

// Append-only JSON-lines ledger. A step is skippable when its latest
// entry has the same inputs hash, no error, and every listed output
// still hashes to the recorded outputs hash.
class RunLedger {
public:
    RunLedger(std::string path, std::string root_dir);

    bool completed(const std::string& step, const std::string& inputs_hash) const;
    void record(const LedgerEntry& e);
    const std::vector<LedgerEntry>& entries() const { return entries_; }

private:
    std::string path_, root_;
    std::vector<LedgerEntry> entries_;
};

struct StudyResult {
    int steps_run = 0;
    int steps_skipped = 0;
    int steps_failed = 0;
    std::string records_path;
    std::string report_dir;
};

// Runs the full protocol into manifest.out_dir; resumable, deterministic
// for a fixed manifest in single-threaded mode. A failing step is
// recorded in the ledger and halts only the branches depending on it.
StudyResult run_full_study(const ExperimentManifest& manifest);

// --- dataset access (shared with the CLI) -----------------------------------

struct DatasetCase {
    std::string id;
    std::string domain;
    Volume volume;
    Mask mask;
};

struct Dataset {
    std::vector<std::string> domains;
    std::vector<DatasetCase> cases;

    std::vector<const DatasetCase*> in_domain(const std::string& domain) const;
};

Dataset load_dataset(const std::string& manifest_path);

// Deterministic adaptation/test split of a target domain's case ids:
// seeded shuffle, first ceil(n/3) cases form the adaptation pool.
struct DomainSplit {
    std::vector<std::string> adaptation_ids;
    std::vector<std::string> test_ids;
};

DomainSplit split_domain(std::vector<std::string> case_ids, std::uint64_t seed);

} // namespace segda::study
