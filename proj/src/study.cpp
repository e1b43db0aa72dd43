#include "segda/study.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "segda/hash.hpp"
#include "segda/model_io.hpp"
#include "segda/volume_io.hpp"

namespace fs = std::filesystem;

namespace segda::study {

namespace {

const std::vector<std::string> kAllStrategies = {"all_layers", "first_layers", "last_layers"};
const std::vector<std::string> kDefaultLevels = {"1scan", "1/3", "1/12"};

const std::set<std::string> kKnownOverrides = {
    "depth",           "base_filters",       "source_epochs", "source_iterations",
    "finetune_epochs", "finetune_iterations", "batch_size",   "crop"};

double now_seconds() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

std::string level_file_tag(const std::string& level) {
    std::string s = level;
    for (char& c : s)
        if (c == '/') c = 'o';  // "1/3" -> "1o3"
    return s;
}

void write_history_csv(const std::string& path, const train::TrainHistory& h) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write history: " + path);
    f << "epoch,lr,mean_loss\n";
    char buf[96];
    for (const auto& e : h.epochs) {
        std::snprintf(buf, sizeof(buf), "%d,%.10g,%.10g\n", e.epoch, e.lr, e.mean_loss);
        f << buf;
    }
}

// full rewrite so an interrupted step never leaves partial appends behind
void write_records_file(const std::string& path, const std::vector<eval::ScoreRecord>& records) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write records: " + path);
    for (const auto& r : records) {
        r.validate();
        f << r.to_json_line() << "\n";
    }
}

train::SlicePool pool_from_cases(const std::vector<const DatasetCase*>& cases) {
    train::SlicePool pool;
    for (const DatasetCase* c : cases)
        for (std::size_t k = 0; k < c->volume.nz(); ++k)
            pool.push_back({extract_axial_slice(c->volume, k),
                            extract_axial_mask_slice(c->mask, k)});
    return pool;
}

} // namespace

// --- dataset ----------------------------------------------------------------

std::vector<const DatasetCase*> Dataset::in_domain(const std::string& domain) const {
    std::vector<const DatasetCase*> out;
    for (const auto& c : cases)
        if (c.domain == domain) out.push_back(&c);
    return out;
}

Dataset load_dataset(const std::string& manifest_path) {
    std::ifstream f(manifest_path);
    if (!f) throw std::runtime_error("load_dataset: cannot read " + manifest_path);
    nlohmann::json j = nlohmann::json::parse(f);
    const fs::path base = fs::path(manifest_path).parent_path();

    Dataset ds;
    for (const auto& jd : j.at("domains")) ds.domains.push_back(jd.at("name").get<std::string>());
    for (const auto& jc : j.at("cases")) {
        DatasetCase c;
        c.id = jc.at("id").get<std::string>();
        c.domain = jc.at("domain").get<std::string>();
        c.volume = read_volume((base / jc.at("volume_path").get<std::string>()).string());
        c.mask = read_mask((base / jc.at("mask_path").get<std::string>()).string());
        ds.cases.push_back(std::move(c));
    }
    return ds;
}

DomainSplit split_domain(std::vector<std::string> case_ids, std::uint64_t seed) {
    if (case_ids.size() < 2)
        throw std::invalid_argument("split_domain: need at least 2 cases");
    std::sort(case_ids.begin(), case_ids.end());
    Rng rng(seed);
    for (std::size_t i = case_ids.size(); i > 1; --i)
        std::swap(case_ids[i - 1], case_ids[rng.next_below(i)]);
    const std::size_t pool = (case_ids.size() + 2) / 3;  // ceil(n/3), leaves >= 1 test case
    DomainSplit s;
    s.adaptation_ids.assign(case_ids.begin(), case_ids.begin() + static_cast<long>(pool));
    s.test_ids.assign(case_ids.begin() + static_cast<long>(pool), case_ids.end());
    std::sort(s.adaptation_ids.begin(), s.adaptation_ids.end());
    std::sort(s.test_ids.begin(), s.test_ids.end());
    return s;
}

// --- manifest ---------------------------------------------------------------

nn::ModelSpec ExperimentManifest::model_spec() const {
    nn::ModelSpec s;
    s.variant = nn::variant_from_name(model);
    if (profile == "desk") {
        s.depth = 3;
        s.base_filters = 8;
    } else {
        s.depth = 4;
        s.base_filters = 16;
    }
    if (auto it = overrides.find("depth"); it != overrides.end())
        s.depth = static_cast<int>(it->second);
    if (auto it = overrides.find("base_filters"); it != overrides.end())
        s.base_filters = static_cast<int>(it->second);
    s.validate();
    return s;
}

train::TrainConfig ExperimentManifest::source_config() const {
    train::TrainConfig c =
        profile == "desk" ? train::desk_source_config() : train::paper_source_config();
    if (auto it = overrides.find("source_epochs"); it != overrides.end()) {
        c.epochs = static_cast<int>(it->second);
        c.lr_drop_epoch = c.epochs * 4 / 5;
    }
    if (auto it = overrides.find("source_iterations"); it != overrides.end())
        c.iterations_per_epoch = static_cast<int>(it->second);
    if (auto it = overrides.find("batch_size"); it != overrides.end())
        c.batch_size = static_cast<int>(it->second);
    if (auto it = overrides.find("crop"); it != overrides.end())
        c.crop_h = c.crop_w = static_cast<std::size_t>(it->second);
    c.validate();
    return c;
}

train::TrainConfig ExperimentManifest::finetune_config() const {
    train::TrainConfig c =
        profile == "desk" ? train::desk_finetune_config() : train::paper_finetune_config();
    if (auto it = overrides.find("finetune_epochs"); it != overrides.end()) {
        c.epochs = static_cast<int>(it->second);
        c.lr_drop_epoch = c.epochs * 3 / 4;
    }
    if (auto it = overrides.find("finetune_iterations"); it != overrides.end())
        c.iterations_per_epoch = static_cast<int>(it->second);
    if (auto it = overrides.find("batch_size"); it != overrides.end())
        c.batch_size = static_cast<int>(it->second);
    if (auto it = overrides.find("crop"); it != overrides.end())
        c.crop_h = c.crop_w = static_cast<std::size_t>(it->second);
    c.validate();
    return c;
}

std::string ExperimentManifest::to_json() const {
    nlohmann::json j;
    j["schema_version"] = kManifestSchemaVersion;
    j["dataset"] = dataset_path;
    j["domains"] = domains;
    j["model"] = model;
    j["profile"] = profile;
    j["strategies"] = strategies;
    j["levels"] = levels;
    j["seeds"] = seeds;
    auto jp = nlohmann::json::array();
    for (const auto& p : pairs) jp.push_back({{"source", p.source}, {"target", p.target}});
    j["pairs"] = std::move(jp);
    j["out"] = out_dir;
    j["overrides"] = overrides;
    return j.dump(2);
}

ExperimentManifest validate_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("manifest: cannot read " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(f);
    } catch (const std::exception& e) {
        throw std::runtime_error("manifest: invalid JSON in " + path + ": " + e.what());
    }

    ExperimentManifest m;
    m.manifest_dir = fs::path(path).parent_path().string();
    if (j.contains("schema_version") && j["schema_version"].get<int>() != kManifestSchemaVersion)
        throw std::runtime_error("manifest: field schema_version must be " +
                                 std::to_string(kManifestSchemaVersion));

    if (!j.contains("dataset") || !j["dataset"].is_string())
        throw std::runtime_error("manifest: field dataset (path) is required");
    fs::path dp = j["dataset"].get<std::string>();
    if (dp.is_relative()) dp = fs::path(m.manifest_dir) / dp;
    if (!fs::exists(dp))
        throw std::runtime_error("manifest: dataset file not found: " + dp.string());
    m.dataset_path = dp.string();

    // domain list defaults to everything in the dataset manifest
    std::vector<std::string> dataset_domains;
    {
        std::ifstream df(m.dataset_path);
        nlohmann::json dj = nlohmann::json::parse(df);
        for (const auto& d : dj.at("domains"))
            dataset_domains.push_back(d.at("name").get<std::string>());
    }
    m.domains = j.contains("domains") ? j["domains"].get<std::vector<std::string>>()
                                      : dataset_domains;
    for (const auto& d : m.domains)
        if (std::find(dataset_domains.begin(), dataset_domains.end(), d) ==
            dataset_domains.end())
            throw std::runtime_error("manifest: field domains: unknown domain " + d);
    if (m.domains.size() < 2)
        throw std::runtime_error("manifest: field domains: at least 2 domains required");

    if (j.contains("model")) m.model = j["model"].get<std::string>();
    nn::variant_from_name(m.model);  // throws on unknown variant

    if (j.contains("profile")) m.profile = j["profile"].get<std::string>();
    if (m.profile != "desk" && m.profile != "paper")
        throw std::runtime_error("manifest: field profile must be one of {desk, paper}");

    m.strategies = j.contains("strategies") ? j["strategies"].get<std::vector<std::string>>()
                                            : kAllStrategies;
    for (const auto& s : m.strategies)
        if (std::find(kAllStrategies.begin(), kAllStrategies.end(), s) == kAllStrategies.end())
            throw std::runtime_error("manifest: field strategies: unknown strategy " + s);
    if (m.strategies.empty())
        throw std::runtime_error("manifest: field strategies must be nonempty");

    m.levels = j.contains("levels") ? j["levels"].get<std::vector<std::string>>()
                                    : kDefaultLevels;
    if (m.levels.empty()) throw std::runtime_error("manifest: field levels must be nonempty");
    for (const auto& l : m.levels) adapt::AvailabilityLevel::parse(l);

    if (!j.contains("seeds") || !j["seeds"].is_array() || j["seeds"].empty())
        throw std::runtime_error("manifest: field seeds: seeds nonempty");
    m.seeds = j["seeds"].get<std::vector<std::uint64_t>>();

    if (j.contains("pairs")) {
        for (const auto& jp : j["pairs"]) {
            eval::PairKey p{jp.at("source").get<std::string>(),
                            jp.at("target").get<std::string>()};
            for (const auto& d : {p.source, p.target})
                if (std::find(m.domains.begin(), m.domains.end(), d) == m.domains.end())
                    throw std::runtime_error("manifest: field pairs: unknown domain " + d);
            if (p.source == p.target)
                throw std::runtime_error("manifest: field pairs: source == target (" + p.source +
                                         ")");
            m.pairs.push_back(p);
        }
    } else {
        for (const auto& s : m.domains)
            for (const auto& t : m.domains)
                if (s != t) m.pairs.push_back({s, t});
    }
    if (m.pairs.empty()) throw std::runtime_error("manifest: field pairs must be nonempty");

    if (j.contains("out")) {
        fs::path op = j["out"].get<std::string>();
        if (op.is_relative()) op = fs::path(m.manifest_dir) / op;
        m.out_dir = op.string();
    }

    if (j.contains("overrides")) {
        for (const auto& [k, v] : j["overrides"].items()) {
            if (!kKnownOverrides.count(k))
                throw std::runtime_error("manifest: field overrides: unknown key " + k);
            m.overrides[k] = v.get<double>();
        }
    }
    m.model_spec();       // validate the composed configuration
    m.source_config();
    m.finetune_config();
    return m;
}

// --- ledger -----------------------------------------------------------------

RunLedger::RunLedger(std::string path, std::string root_dir)
    : path_(std::move(path)), root_(std::move(root_dir)) {
    std::ifstream f(path_);
    if (!f) return;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        LedgerEntry e;
        e.step = j.at("step").get<std::string>();
        e.inputs_hash = j.at("inputs_hash").get<std::string>();
        e.outputs_hash = j.at("outputs_hash").get<std::string>();
        e.outputs = j.at("outputs").get<std::vector<std::string>>();
        e.seconds = j.at("seconds").get<double>();
        e.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("error")) e.error = j["error"].get<std::string>();
        entries_.push_back(std::move(e));
    }
}

bool RunLedger::completed(const std::string& step, const std::string& inputs_hash) const {
    const LedgerEntry* latest = nullptr;
    for (const auto& e : entries_)
        if (e.step == step) latest = &e;
    if (!latest || !latest->error.empty() || latest->inputs_hash != inputs_hash) return false;
    std::uint64_t h = kFnvOffset;
    for (const auto& rel : latest->outputs) {
        const fs::path p = fs::path(root_) / rel;
        if (!fs::exists(p)) return false;
        const std::uint64_t fh = hash_file(p.string());
        h = fnv1a(&fh, sizeof(fh), h);
    }
    return hash_hex(h) == latest->outputs_hash;
}

void RunLedger::record(const LedgerEntry& e) {
    nlohmann::json j;
    j["step"] = e.step;
    j["inputs_hash"] = e.inputs_hash;
    j["outputs_hash"] = e.outputs_hash;
    j["outputs"] = e.outputs;
    j["seconds"] = e.seconds;
    j["seed"] = e.seed;
    if (!e.error.empty()) j["error"] = e.error;
    std::ofstream f(path_, std::ios::app);
    if (!f) throw std::runtime_error("ledger: cannot append to " + path_);
    f << j.dump() << "\n";
    f.flush();
    entries_.push_back(e);
}

// --- study driver -----------------------------------------------------------

namespace {

struct StudyContext {
    const ExperimentManifest& m;
    Dataset dataset;
    fs::path out;
    RunLedger ledger;
    StudyResult result;
    std::string config_fp;  // manifest + dataset fingerprint
    std::set<std::string> failed;

    StudyContext(const ExperimentManifest& manifest)
        : m(manifest),
          dataset(load_dataset(manifest.dataset_path)),
          out(manifest.out_dir),
          ledger((fs::path(manifest.out_dir) / "ledger.jsonl").string(), manifest.out_dir) {
        ExperimentManifest fp = manifest;  // exclude machine-local paths from the fingerprint
        fp.out_dir.clear();
        fp.manifest_dir.clear();
        fp.dataset_path.clear();
        const std::uint64_t dh = hash_file(manifest.dataset_path);
        config_fp = hash_hex(fnv1a(&dh, sizeof(dh), fnv1a(fp.to_json())));
    }

    std::string outputs_hash(const std::vector<std::string>& outputs_rel) const {
        std::uint64_t h = kFnvOffset;
        for (const auto& rel : outputs_rel) {
            const std::uint64_t fh = hash_file((out / rel).string());
            h = fnv1a(&fh, sizeof(fh), h);
        }
        return hash_hex(h);
    }

    // Runs one ledgered step; returns false when the step failed (now or
    // on a previous run with no successful retry).
    template <typename Fn>
    bool step(const std::string& name, const std::string& inputs, std::uint64_t seed,
              const std::vector<std::string>& outputs_rel, Fn&& fn) {
        const std::string inputs_hash = hash_hex(fnv1a(inputs, fnv1a(config_fp)));
        if (ledger.completed(name, inputs_hash)) {
            result.steps_skipped++;
            return true;
        }
        LedgerEntry e;
        e.step = name;
        e.inputs_hash = inputs_hash;
        e.outputs = outputs_rel;
        e.seed = seed;
        const double t0 = now_seconds();
        try {
            fn();
            e.seconds = now_seconds() - t0;
            e.outputs_hash = outputs_hash(outputs_rel);
            ledger.record(e);
            result.steps_run++;
            return true;
        } catch (const std::exception& ex) {
            e.seconds = now_seconds() - t0;
            e.error = ex.what();
            ledger.record(e);
            result.steps_failed++;
            failed.insert(name);
            return false;
        }
    }

    std::string ckpt_stem(const std::string& domain) const {
        return (out / "checkpoints" / ("source_" + domain)).string();
    }
};

std::vector<eval::ScoreRecord> score_cases(nn::Unet2D<float>& model,
                                           const std::vector<const DatasetCase*>& cases,
                                           const std::string& source, const std::string& target,
                                           const std::string& method,
                                           const std::string& availability,
                                           std::uint64_t seed) {
    std::vector<eval::ScoreRecord> out;
    for (const DatasetCase* c : cases) {
        const eval::CaseScore s = eval::score_case(model, c->id, c->volume, c->mask);
        out.push_back({source, target, method, availability, c->id, s.surface_dice, s.dice, seed});
    }
    return out;
}

std::vector<const DatasetCase*> cases_by_ids(const Dataset& ds,
                                             const std::vector<std::string>& ids) {
    std::vector<const DatasetCase*> out;
    for (const auto& id : ids) {
        const DatasetCase* found = nullptr;
        for (const auto& c : ds.cases)
            if (c.id == id) found = &c;
        if (!found) throw std::runtime_error("unknown case id: " + id);
        out.push_back(found);
    }
    return out;
}

} // namespace

StudyResult run_full_study(const ExperimentManifest& manifest) {
    if (manifest.out_dir.empty())
        throw std::runtime_error("run_full_study: manifest has no output directory");
    fs::create_directories(fs::path(manifest.out_dir) / "checkpoints");
    fs::create_directories(fs::path(manifest.out_dir) / "records");
    fs::create_directories(fs::path(manifest.out_dir) / "history");

    StudyContext ctx(manifest);
    const std::uint64_t seed0 = manifest.seeds.front();

    ctx.step("manifest-echo", "echo", seed0, {"manifest.echo.json"}, [&] {
        std::ofstream f(ctx.out / "manifest.echo.json");
        if (!f) throw std::runtime_error("cannot write manifest echo");
        f << manifest.to_json() << "\n";
    });

    // deterministic per-target splits
    std::map<std::string, DomainSplit> splits;
    for (const auto& d : manifest.domains) {
        std::vector<std::string> ids;
        for (const auto* c : ctx.dataset.in_domain(d)) ids.push_back(c->id);
        splits[d] = split_domain(ids, seed0 ^ fnv1a("split:" + d));
    }

    // 1. source models, trained on every case of the domain
    for (const auto& d : manifest.domains) {
        const std::string step = "source:" + d;
        const std::uint64_t seed = seed0 ^ fnv1a(step);
        ctx.step(step, step, seed,
                 {"checkpoints/source_" + d + ".json", "checkpoints/source_" + d + ".bin",
                  "history/source_" + d + ".csv"},
                 [&] {
                     train::TrainConfig cfg = manifest.source_config();
                     cfg.seed = seed;
                     auto model = nn::Unet2D<float>::build(manifest.model_spec(), Rng(seed));
                     const auto pool = pool_from_cases(ctx.dataset.in_domain(d));
                     const auto history = train::train(model, pool, cfg);
                     nn::save_checkpoint(model, ctx.ckpt_stem(d));
                     write_history_csv((ctx.out / "history" / ("source_" + d + ".csv")).string(),
                                       history);
                 });
    }

    // 2. oracle cross-validation per domain
    for (const auto& d : manifest.domains) {
        const std::string step = "oracle:" + d;
        const std::uint64_t seed = seed0 ^ fnv1a(step);
        ctx.step(step, step, seed, {"records/oracle_" + d + ".jsonl"}, [&] {
            std::vector<std::string> ids;
            for (const auto* c : ctx.dataset.in_domain(d)) ids.push_back(c->id);
            const auto folds = eval::fold_split(ids, kOracleFolds, seed);
            std::vector<eval::ScoreRecord> records;
            for (std::size_t k = 0; k < folds.size(); ++k) {
                std::vector<std::string> train_ids;
                for (std::size_t f = 0; f < folds.size(); ++f)
                    if (f != k) train_ids.insert(train_ids.end(), folds[f].begin(),
                                                 folds[f].end());
                train::TrainConfig cfg = manifest.source_config();
                cfg.seed = seed ^ (0xf01d + k);
                auto model = nn::Unet2D<float>::build(manifest.model_spec(), Rng(cfg.seed));
                train::train(model, pool_from_cases(cases_by_ids(ctx.dataset, train_ids)), cfg);
                auto scored = score_cases(model, cases_by_ids(ctx.dataset, folds[k]), d, d,
                                          "oracle", "", seed);
                records.insert(records.end(), scored.begin(), scored.end());
            }
            std::sort(records.begin(), records.end(),
                      [](const auto& a, const auto& b) { return a.case_id < b.case_id; });
            write_records_file((ctx.out / "records" / ("oracle_" + d + ".jsonl")).string(),
                               records);
        });
    }

    // 3. baseline transfer for every directed pair of included domains
    for (const auto& s : manifest.domains)
        for (const auto& t : manifest.domains) {
            if (s == t) continue;
            const std::string step = "baseline:" + s + "->" + t;
            if (ctx.failed.count("source:" + s)) continue;  // branch halted upstream
            const std::string ckpt = ctx.ckpt_stem(s);
            const std::string inputs = step + "|ckpt:" + hash_hex(hash_file(ckpt + ".bin"));
            ctx.step(step, inputs, seed0, {"records/baseline_" + s + "_" + t + ".jsonl"}, [&] {
                auto model = nn::load_checkpoint<float>(ckpt);
                auto records = score_cases(model, cases_by_ids(ctx.dataset, splits[t].test_ids),
                                           s, t, "baseline", "", seed0);
                write_records_file(
                    (ctx.out / "records" / ("baseline_" + s + "_" + t + ".jsonl")).string(),
                    records);
            });
        }

    // 4. fine-tuning grid
    for (const auto& pair : manifest.pairs)
        for (const auto& strat_name : manifest.strategies)
            for (const auto& level_str : manifest.levels)
                for (const std::uint64_t seed : manifest.seeds) {
                    if (ctx.failed.count("source:" + pair.source)) continue;
                    const std::string tag = pair.source + "_" + pair.target + "_" + strat_name +
                                            "_" + level_file_tag(level_str) + "_seed" +
                                            std::to_string(seed);
                    const std::string step = "finetune:" + tag;
                    const std::string ckpt = ctx.ckpt_stem(pair.source);
                    const std::string ckpt_hash = hash_hex(hash_file(ckpt + ".bin"));
                    const std::string inputs = step + "|ckpt:" + ckpt_hash;
                    ctx.step(step, inputs, seed,
                             {"records/ft_" + tag + ".jsonl", "records/prov_" + tag + ".json"},
                             [&] {
                                 auto model = nn::load_checkpoint<float>(ckpt);
                                 std::vector<adapt::TargetCase> pool;
                                 for (const auto* c : cases_by_ids(
                                          ctx.dataset, splits[pair.target].adaptation_ids))
                                     pool.push_back({c->id, &c->volume, &c->mask});

                                 train::TrainConfig cfg = manifest.finetune_config();
                                 // strategy left out of the seed so the three
                                 // strategies see identical data (paired tests)
                                 cfg.seed = seed ^ fnv1a("ft:" + pair.source + "->" +
                                                         pair.target + ":" + level_str);
                                 auto res = adapt::finetune(
                                     model, pool, adapt::strategy_from_name(strat_name),
                                     adapt::AvailabilityLevel::parse(level_str), cfg,
                                     pair.source, pair.target, ckpt_hash);
                                 auto records = score_cases(
                                     model, cases_by_ids(ctx.dataset, splits[pair.target].test_ids),
                                     pair.source, pair.target, strat_name, level_str, seed);
                                 write_records_file(
                                     (ctx.out / "records" / ("ft_" + tag + ".jsonl")).string(),
                                     records);
                                 std::ofstream pf(ctx.out / "records" / ("prov_" + tag + ".json"));
                                 if (!pf) throw std::runtime_error("cannot write provenance");
                                 pf << res.provenance.to_json() << "\n";
                             });
                }

    // 5. merge every record file into the single store, sorted by name
    std::vector<std::string> record_files;
    for (const auto& ent : fs::directory_iterator(ctx.out / "records"))
        if (ent.path().extension() == ".jsonl") record_files.push_back(ent.path().string());
    std::sort(record_files.begin(), record_files.end());
    std::string merge_inputs = "evaluate";
    for (const auto& p : record_files)
        merge_inputs += "|" + fs::path(p).filename().string() + ":" + hash_hex(hash_file(p));
    ctx.step("evaluate", merge_inputs, seed0, {"records.jsonl"}, [&] {
        std::ofstream f(ctx.out / "records.jsonl", std::ios::trunc);
        if (!f) throw std::runtime_error("cannot write records.jsonl");
        for (const auto& p : record_files) {
            std::ifstream in(p);
            f << in.rdbuf();
        }
    });

    // 6. aggregate and report
    const std::string records_path = (ctx.out / "records.jsonl").string();
    if (!ctx.failed.count("evaluate") && fs::exists(records_path)) {
        const std::string inputs = "report|" + hash_hex(hash_file(records_path));
        ctx.step("report", inputs, seed0,
                 {"report/transfer_matrix.csv", "report/trend.csv", "report/winners.csv",
                  "report/trend.svg", "report/winners.svg"},
                 [&] {
                     const auto records = eval::load_records(records_path);
                     const eval::ScoreTable table(records);
                     const auto matrix = eval::build_transfer_matrix(records, manifest.domains);
                     const auto trend =
                         eval::aggregate_trend(table, manifest.levels, manifest.strategies);
                     const auto winners =
                         eval::winner_counts(table, manifest.levels, manifest.strategies);
                     eval::emit_report(matrix, trend, winners, (ctx.out / "report").string());
                 });
    }

    ctx.result.records_path = records_path;
    ctx.result.report_dir = (ctx.out / "report").string();
    return ctx.result;
}

} // namespace segda::study
