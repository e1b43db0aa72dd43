// Command-line driver for the domain-adaptation benchmark pipeline.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>
#include <omp.h>

#include "segda/adapt.hpp"
#include "segda/eval.hpp"
#include "segda/hash.hpp"
#include "segda/model_io.hpp"
#include "segda/nifti.hpp"
#include "segda/study.hpp"
#include "segda/synth.hpp"
#include "segda/train.hpp"
#include "segda/volume_io.hpp"

namespace fs = std::filesystem;
using namespace segda;

namespace {

struct GlobalOpts {
    std::string manifest;
    std::uint64_t seed = 0;
    std::string profile = "desk";
    std::string out;
    int threads = 0;  // 0 = library default
    std::string format = "csv";
};

train::TrainConfig profile_source(const std::string& p) {
    return p == "paper" ? train::paper_source_config() : train::desk_source_config();
}
train::TrainConfig profile_finetune(const std::string& p) {
    return p == "paper" ? train::paper_finetune_config() : train::desk_finetune_config();
}
nn::ModelSpec profile_model(const std::string& p) {
    nn::ModelSpec s;
    if (p == "desk") {
        s.depth = 3;
        s.base_filters = 8;
    }
    return s;
}

train::SlicePool pool_of(const std::vector<const study::DatasetCase*>& cases) {
    train::SlicePool pool;
    for (const auto* c : cases)
        for (std::size_t k = 0; k < c->volume.nz(); ++k)
            pool.push_back({extract_axial_slice(c->volume, k),
                            extract_axial_mask_slice(c->mask, k)});
    return pool;
}

void print_scores(const std::vector<eval::ScoreRecord>& records, const std::string& format) {
    if (format == "json") {
        for (const auto& r : records) std::cout << r.to_json_line() << "\n";
        return;
    }
    std::cout << "source,target,method,availability,case_id,surface_dice,dice,seed\n";
    char buf[64];
    for (const auto& r : records) {
        std::snprintf(buf, sizeof(buf), "%.6f,%.6f", r.surface_dice, r.dice);
        std::cout << r.source_domain << "," << r.target_domain << "," << r.method << ","
                  << r.availability << "," << r.case_id << "," << buf << "," << r.seed << "\n";
    }
}

std::vector<eval::ScoreRecord> score_on(nn::Unet2D<float>& model,
                                        const std::vector<const study::DatasetCase*>& cases,
                                        const std::string& src, const std::string& tgt,
                                        const std::string& method, const std::string& avail,
                                        std::uint64_t seed) {
    std::vector<eval::ScoreRecord> out;
    for (const auto* c : cases) {
        const eval::CaseScore s = eval::score_case(model, c->id, c->volume, c->mask);
        out.push_back({src, tgt, method, avail, c->id, s.surface_dice, s.dice, seed});
    }
    return out;
}

int run(int argc, char** argv) {
    CLI::App app{"domain-adaptation segmentation benchmark"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalOpts g;
    app.add_option("--manifest", g.manifest, "experiment manifest path");
    app.add_option("--seed", g.seed, "master seed");
    app.add_option("--profile", g.profile, "config profile")
        ->check(CLI::IsMember({"desk", "paper"}));
    app.add_option("--out", g.out, "output path or directory");
    app.add_option("--threads", g.threads, "worker threads; 1 = reference deterministic mode");
    app.add_option("--format", g.format, "stdout format")->check(CLI::IsMember({"csv", "json"}));

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "build the synthetic benchmark");
    int synth_cases = 8;
    synth_cmd->add_option("--cases", synth_cases, "cases per domain");

    // ingest
    auto* ingest_cmd = app.add_subcommand("ingest", "convert external volumes to native format");
    std::string ingest_listing;
    ingest_cmd->add_option("--listing", ingest_listing,
                           "JSON listing: {cases:[{id,domain,volume,mask}]}")
        ->required();

    // train-source
    auto* train_cmd = app.add_subcommand("train-source", "train a source model on one domain");
    std::string ds_path, domain_opt;
    train_cmd->add_option("--dataset", ds_path, "dataset manifest")->required();
    train_cmd->add_option("--domain", domain_opt, "source domain")->required();

    // oracle
    auto* oracle_cmd = app.add_subcommand("oracle", "3-fold cross-validated on-domain scores");
    oracle_cmd->add_option("--dataset", ds_path, "dataset manifest")->required();
    oracle_cmd->add_option("--domain", domain_opt, "domain")->required();

    // transfer
    auto* transfer_cmd = app.add_subcommand("transfer", "score a source model on a target domain");
    std::string ckpt_stem, source_opt, target_opt;
    transfer_cmd->add_option("--dataset", ds_path, "dataset manifest")->required();
    transfer_cmd->add_option("--checkpoint", ckpt_stem, "source checkpoint stem")->required();
    transfer_cmd->add_option("--source", source_opt, "source domain name")->required();
    transfer_cmd->add_option("--target", target_opt, "target domain")->required();

    // finetune
    auto* ft_cmd = app.add_subcommand("finetune", "adapt a source model to a target domain");
    std::string strategy_opt = "all_layers", level_opt = "1scan";
    ft_cmd->add_option("--dataset", ds_path, "dataset manifest")->required();
    ft_cmd->add_option("--checkpoint", ckpt_stem, "source checkpoint stem")->required();
    ft_cmd->add_option("--source", source_opt, "source domain name")->required();
    ft_cmd->add_option("--target", target_opt, "target domain")->required();
    ft_cmd->add_option("--strategy", strategy_opt, "all_layers|first_layers|last_layers");
    ft_cmd->add_option("--level", level_opt, "availability, e.g. 1scan, 3scans, 1/12");

    // evaluate
    auto* eval_cmd = app.add_subcommand("evaluate", "merge record files into one store");
    std::vector<std::string> record_inputs;
    eval_cmd->add_option("--records", record_inputs, "record files to merge")->required();

    // report
    auto* report_cmd = app.add_subcommand("report", "aggregate a record store into tables/plots");
    std::string store_path;
    report_cmd->add_option("--records", store_path, "record store (JSON lines)")->required();

    // study
    auto* study_cmd = app.add_subcommand("study", "run the full protocol from a manifest");

    CLI11_PARSE(app, argc, argv);
    if (g.threads > 0) omp_set_num_threads(g.threads);

    if (synth_cmd->parsed()) {
        if (g.out.empty()) throw std::runtime_error("synth: --out directory required");
        synth::BenchmarkSpec spec;
        spec.domains = synth::default_domains();
        spec.cases_per_domain = synth_cases;
        spec.seed = g.seed;
        const std::string manifest = synth::build_benchmark(spec, g.out);
        std::cout << manifest << "\n";
        return 0;
    }

    if (ingest_cmd->parsed()) {
        if (g.out.empty()) throw std::runtime_error("ingest: --out directory required");
        std::ifstream lf(ingest_listing);
        if (!lf) throw std::runtime_error("ingest: cannot read listing " + ingest_listing);
        nlohmann::json listing = nlohmann::json::parse(lf);
        const fs::path base = fs::path(ingest_listing).parent_path();
        fs::create_directories(g.out);

        nlohmann::json manifest;
        manifest["schema_version"] = 1;
        auto jd = nlohmann::json::array();
        auto jc = nlohmann::json::array();
        std::vector<std::string> seen_domains;
        for (const auto& e : listing.at("cases")) {
            const auto id = e.at("id").get<std::string>();
            const auto dom = e.at("domain").get<std::string>();
            if (std::find(seen_domains.begin(), seen_domains.end(), dom) == seen_domains.end()) {
                seen_domains.push_back(dom);
                jd.push_back({{"name", dom}});
                fs::create_directories(fs::path(g.out) / dom);
            }
            Volume v = nifti::read_nifti_volume((base / e.at("volume").get<std::string>()).string());
            Mask m = nifti::read_nifti_mask((base / e.at("mask").get<std::string>()).string());
            v = rescale_intensity(v);
            const std::string vrel = dom + "/" + id + ".json";
            const std::string mrel = dom + "/" + id + "_mask.json";
            write_volume((fs::path(g.out) / vrel).string(), v);
            write_mask((fs::path(g.out) / mrel).string(), m);
            jc.push_back({{"id", id}, {"domain", dom}, {"volume_path", vrel}, {"mask_path", mrel}});
        }
        manifest["domains"] = std::move(jd);
        manifest["cases"] = std::move(jc);
        const std::string mpath = (fs::path(g.out) / "dataset.json").string();
        std::ofstream mf(mpath);
        mf << manifest.dump(2) << "\n";
        std::cout << mpath << "\n";
        return 0;
    }

    if (train_cmd->parsed()) {
        if (g.out.empty()) throw std::runtime_error("train-source: --out checkpoint stem required");
        const study::Dataset ds = study::load_dataset(ds_path);
        const auto cases = ds.in_domain(domain_opt);
        if (cases.empty()) throw std::runtime_error("train-source: no cases in domain " + domain_opt);
        train::TrainConfig cfg = profile_source(g.profile);
        cfg.seed = g.seed;
        auto model = nn::Unet2D<float>::build(profile_model(g.profile), Rng(g.seed));
        const auto history = train::train(model, pool_of(cases), cfg);
        nn::save_checkpoint(model, g.out);
        std::cout << g.out << ".json\n";
        for (const auto& e : history.epochs)
            std::fprintf(stderr, "epoch %d lr %.2g loss %.5f\n", e.epoch, e.lr, e.mean_loss);
        return 0;
    }

    if (oracle_cmd->parsed()) {
        const study::Dataset ds = study::load_dataset(ds_path);
        const auto cases = ds.in_domain(domain_opt);
        std::vector<std::string> ids;
        for (const auto* c : cases) ids.push_back(c->id);
        const auto folds = eval::fold_split(ids, study::kOracleFolds, g.seed);
        std::vector<eval::ScoreRecord> records;
        for (std::size_t k = 0; k < folds.size(); ++k) {
            std::vector<const study::DatasetCase*> train_cases, test_cases;
            for (const auto* c : cases) {
                const bool held_out =
                    std::find(folds[k].begin(), folds[k].end(), c->id) != folds[k].end();
                (held_out ? test_cases : train_cases).push_back(c);
            }
            train::TrainConfig cfg = profile_source(g.profile);
            cfg.seed = g.seed ^ (0xf01d + k);
            auto model = nn::Unet2D<float>::build(profile_model(g.profile), Rng(cfg.seed));
            train::train(model, pool_of(train_cases), cfg);
            auto scored =
                score_on(model, test_cases, domain_opt, domain_opt, "oracle", "", g.seed);
            records.insert(records.end(), scored.begin(), scored.end());
        }
        if (!g.out.empty()) eval::append_records(g.out, records);
        print_scores(records, g.format);
        return 0;
    }

    if (transfer_cmd->parsed()) {
        const study::Dataset ds = study::load_dataset(ds_path);
        auto model = nn::load_checkpoint<float>(ckpt_stem);
        const auto records =
            score_on(model, ds.in_domain(target_opt), source_opt, target_opt, "baseline", "",
                     g.seed);
        if (!g.out.empty()) eval::append_records(g.out, records);
        print_scores(records, g.format);
        return 0;
    }

    if (ft_cmd->parsed()) {
        if (g.out.empty()) throw std::runtime_error("finetune: --out checkpoint stem required");
        const study::Dataset ds = study::load_dataset(ds_path);
        auto model = nn::load_checkpoint<float>(ckpt_stem);
        std::vector<adapt::TargetCase> pool;
        for (const auto* c : ds.in_domain(target_opt))
            pool.push_back({c->id, &c->volume, &c->mask});
        train::TrainConfig cfg = profile_finetune(g.profile);
        cfg.seed = g.seed;
        const auto res = adapt::finetune(model, pool, adapt::strategy_from_name(strategy_opt),
                                         adapt::AvailabilityLevel::parse(level_opt), cfg,
                                         source_opt, target_opt,
                                         hash_hex(hash_file(ckpt_stem + ".bin")));
        nn::save_checkpoint(model, g.out);
        std::ofstream pf(g.out + ".provenance.json");
        pf << res.provenance.to_json() << "\n";
        std::cout << g.out << ".json\n";
        return 0;
    }

    if (eval_cmd->parsed()) {
        if (g.out.empty()) throw std::runtime_error("evaluate: --out store path required");
        std::vector<eval::ScoreRecord> all;
        for (const auto& p : record_inputs) {
            const auto part = eval::load_records(p);
            all.insert(all.end(), part.begin(), part.end());
        }
        std::ofstream f(g.out, std::ios::trunc);
        if (!f) throw std::runtime_error("evaluate: cannot write " + g.out);
        for (const auto& r : all) f << r.to_json_line() << "\n";
        std::cout << g.out << "\n";
        return 0;
    }

    if (report_cmd->parsed()) {
        if (g.out.empty()) throw std::runtime_error("report: --out directory required");
        if (!fs::exists(store_path))
            throw std::runtime_error("report: record store not found: " + store_path);
        const auto records = eval::load_records(store_path);
        const eval::ScoreTable table(records);
        std::vector<std::string> domains;
        for (const auto& r : records)
            if (std::find(domains.begin(), domains.end(), r.target_domain) == domains.end())
                domains.push_back(r.target_domain);
        std::sort(domains.begin(), domains.end());
        const auto matrix = eval::build_transfer_matrix(records, domains);
        const auto trend = eval::aggregate_trend(table, table.availabilities(), table.methods());
        const auto winners = eval::winner_counts(table, table.availabilities(), table.methods());
        eval::emit_report(matrix, trend, winners, g.out);
        std::cout << g.out << "\n";
        return 0;
    }

    if (study_cmd->parsed()) {
        if (g.manifest.empty()) throw std::runtime_error("study: --manifest required");
        study::ExperimentManifest m = study::validate_manifest(g.manifest);
        if (!g.out.empty()) m.out_dir = fs::absolute(g.out).string();
        if (app.count("--profile")) m.profile = g.profile;
        const auto res = study::run_full_study(m);
        std::cout << "steps run " << res.steps_run << ", skipped " << res.steps_skipped
                  << ", failed " << res.steps_failed << "\n"
                  << res.records_path << "\n";
        return res.steps_failed == 0 ? 0 : 2;
    }

    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
