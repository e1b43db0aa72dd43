#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "segda/hash.hpp"
#include "segda/study.hpp"
#include "segda/synth.hpp"

using namespace segda;
namespace fs = std::filesystem;

namespace {

// tiny two-domain dataset for manifest and study tests
std::string make_tiny_dataset(const fs::path& dir) {
    synth::BenchmarkSpec spec;
    spec.domains = {{"P", 1.0, 0.05, 0.01, 1.0, 1}, {"Q", 1.8, 0.3, 0.02, 1.0, 2}};
    spec.cases_per_domain = 3;
    spec.shape = {16, 16, 16};
    spec.seed = 9;
    return synth::build_benchmark(spec, dir.string());
}

void write_manifest(const fs::path& path, const nlohmann::json& j) {
    std::ofstream f(path);
    f << j.dump(2) << "\n";
}

nlohmann::json tiny_manifest_json() {
    nlohmann::json j;
    j["dataset"] = "data/dataset.json";
    j["seeds"] = {1};
    j["profile"] = "desk";
    j["levels"] = {"1scan"};
    j["strategies"] = {"first_layers", "last_layers"};
    j["pairs"] = {{{"source", "P"}, {"target", "Q"}}};
    j["out"] = "run";
    j["overrides"] = {{"depth", 2},          {"base_filters", 2},     {"source_epochs", 1},
                      {"source_iterations", 2}, {"finetune_epochs", 1}, {"finetune_iterations", 1},
                      {"batch_size", 2},     {"crop", 16}};
    return j;
}

struct TempTree {
    fs::path root;
    TempTree(const char* name) : root(fs::temp_directory_path() / name) {
        fs::remove_all(root);
        fs::create_directories(root / "data");
    }
    ~TempTree() { fs::remove_all(root); }
};

} // namespace

TEST_CASE("manifest validation: defaults, schema errors and file checks") {
    TempTree tt("segda_manifest_test");
    make_tiny_dataset(tt.root / "data");

    SUBCASE("minimal manifest gets defaults applied") {
        nlohmann::json j;
        j["dataset"] = "data/dataset.json";
        j["seeds"] = {7};
        write_manifest(tt.root / "m.json", j);
        const auto m = study::validate_manifest((tt.root / "m.json").string());
        CHECK(m.domains == std::vector<std::string>{"P", "Q"});
        CHECK(m.strategies.size() == 3);
        CHECK(m.levels.size() == 3);
        CHECK(m.pairs.size() == 2);  // both directed pairs
        CHECK(m.profile == "desk");
        CHECK(m.model == "residual_unet");
        // the echo contains the filled defaults
        CHECK(m.to_json().find("all_layers") != std::string::npos);
    }
    SUBCASE("unknown strategy is a schema error naming the field") {
        nlohmann::json j = tiny_manifest_json();
        j["strategies"] = {"middle_layers"};
        write_manifest(tt.root / "m.json", j);
        CHECK_THROWS_WITH_AS(study::validate_manifest((tt.root / "m.json").string()),
                             doctest::Contains("strategies"), std::runtime_error);
    }
    SUBCASE("missing seeds") {
        nlohmann::json j = tiny_manifest_json();
        j.erase("seeds");
        write_manifest(tt.root / "m.json", j);
        CHECK_THROWS_WITH_AS(study::validate_manifest((tt.root / "m.json").string()),
                             doctest::Contains("seeds nonempty"), std::runtime_error);
    }
    SUBCASE("missing dataset file names the path") {
        nlohmann::json j = tiny_manifest_json();
        j["dataset"] = "data/nowhere.json";
        write_manifest(tt.root / "m.json", j);
        CHECK_THROWS_WITH_AS(study::validate_manifest((tt.root / "m.json").string()),
                             doctest::Contains("nowhere.json"), std::runtime_error);
    }
    SUBCASE("unknown override key is rejected") {
        nlohmann::json j = tiny_manifest_json();
        j["overrides"]["learning_rate_warmup"] = 1;
        write_manifest(tt.root / "m.json", j);
        CHECK_THROWS_AS(study::validate_manifest((tt.root / "m.json").string()),
                        std::runtime_error);
    }
    SUBCASE("same-domain pair is rejected") {
        nlohmann::json j = tiny_manifest_json();
        j["pairs"] = {{{"source", "P"}, {"target", "P"}}};
        write_manifest(tt.root / "m.json", j);
        CHECK_THROWS_AS(study::validate_manifest((tt.root / "m.json").string()),
                        std::runtime_error);
    }
}

TEST_CASE("dataset loads with per-domain case access") {
    TempTree tt("segda_dataset_test");
    const std::string manifest = make_tiny_dataset(tt.root / "data");
    const study::Dataset ds = study::load_dataset(manifest);
    CHECK(ds.domains == std::vector<std::string>{"P", "Q"});
    CHECK(ds.cases.size() == 6);
    CHECK(ds.in_domain("P").size() == 3);
    CHECK(ds.in_domain("P")[0]->volume.nx() == 16);
}

TEST_CASE("domain split is deterministic with a nonempty test side") {
    const std::vector<std::string> ids = {"a", "b", "c", "d", "e"};
    const auto s1 = study::split_domain(ids, 4);
    const auto s2 = study::split_domain(ids, 4);
    CHECK(s1.adaptation_ids == s2.adaptation_ids);
    CHECK(s1.adaptation_ids.size() == 2);  // ceil(5/3)
    CHECK(s1.test_ids.size() == 3);
    CHECK_THROWS_AS(study::split_domain({"solo"}, 1), std::invalid_argument);
}

TEST_CASE("run ledger: resume on matching hashes, rerun on changes") {
    TempTree tt("segda_ledger_test");
    const std::string ledger_path = (tt.root / "ledger.jsonl").string();
    {
        std::ofstream out(tt.root / "artifact.txt");
        out << "payload\n";
    }
    const std::uint64_t fh = hash_file((tt.root / "artifact.txt").string());
    std::uint64_t combined = fnv1a(&fh, sizeof(fh), kFnvOffset);

    {
        study::RunLedger ledger(ledger_path, tt.root.string());
        study::LedgerEntry e;
        e.step = "demo";
        e.inputs_hash = "abc";
        e.outputs = {"artifact.txt"};
        e.outputs_hash = hash_hex(combined);
        e.seed = 1;
        ledger.record(e);
        CHECK(ledger.completed("demo", "abc"));
        CHECK(!ledger.completed("demo", "other-inputs"));
        CHECK(!ledger.completed("unknown", "abc"));
    }
    {
        // reload from disk: still complete
        study::RunLedger ledger(ledger_path, tt.root.string());
        CHECK(ledger.completed("demo", "abc"));
        // corrupt the artifact: no longer complete
        std::ofstream out(tt.root / "artifact.txt");
        out << "tampered\n";
        out.close();
        CHECK(!ledger.completed("demo", "abc"));
    }
    {
        // a failed entry is never skippable
        study::RunLedger ledger(ledger_path, tt.root.string());
        study::LedgerEntry e;
        e.step = "broken";
        e.inputs_hash = "xyz";
        e.error = "deliberate";
        ledger.record(e);
        CHECK(!ledger.completed("broken", "xyz"));
    }
}

TEST_CASE("full study on a micro benchmark: populated tree, resume, determinism") {
    TempTree tt("segda_study_test");
    make_tiny_dataset(tt.root / "data");
    write_manifest(tt.root / "m.json", tiny_manifest_json());

    const auto m = study::validate_manifest((tt.root / "m.json").string());
    const auto r1 = study::run_full_study(m);
    CHECK(r1.steps_failed == 0);
    CHECK(r1.steps_run > 0);
    CHECK(fs::exists(tt.root / "run" / "records.jsonl"));
    CHECK(fs::exists(tt.root / "run" / "report" / "transfer_matrix.csv"));
    CHECK(fs::exists(tt.root / "run" / "ledger.jsonl"));
    CHECK(fs::exists(tt.root / "run" / "manifest.echo.json"));

    // grid: 1 pair x 2 strategies x 1 level x 1 seed
    const auto records = eval::load_records((tt.root / "run" / "records.jsonl").string());
    std::size_t ft = 0;
    for (const auto& r : records)
        if (r.method == "first_layers" || r.method == "last_layers") ++ft;
    CHECK(ft > 0);

    // rerun: everything is skipped, stores stay byte-identical
    const std::uint64_t store_hash = hash_file((tt.root / "run" / "records.jsonl").string());
    const auto r2 = study::run_full_study(m);
    CHECK(r2.steps_run == 0);
    CHECK(r2.steps_failed == 0);
    CHECK(r2.steps_skipped == r1.steps_run + r1.steps_skipped);
    CHECK(hash_file((tt.root / "run" / "records.jsonl").string()) == store_hash);

    // a fresh run in a second directory produces the identical record store
    auto m2 = m;
    m2.out_dir = (tt.root / "run2").string();
    study::run_full_study(m2);
    CHECK(hash_file((tt.root / "run2" / "records.jsonl").string()) == store_hash);
    CHECK(hash_file((tt.root / "run2" / "report" / "trend.csv").string()) ==
          hash_file((tt.root / "run" / "report" / "trend.csv").string()));
}
