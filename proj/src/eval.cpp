#include "segda/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace segda::eval {

namespace {

const std::set<std::string> kKnownMethods = {"oracle", "baseline", "all_layers", "first_layers",
                                             "last_layers"};

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

} // namespace

void ScoreRecord::validate() const {
    if (!kKnownMethods.count(method))
        throw std::invalid_argument("ScoreRecord: unknown method " + method);
    if (!(surface_dice >= 0.0 && surface_dice <= 1.0))
        throw std::invalid_argument("ScoreRecord: surface_dice out of [0,1]");
    if (!(dice >= 0.0 && dice <= 1.0))
        throw std::invalid_argument("ScoreRecord: dice out of [0,1]");
    if (method == "oracle" && source_domain != target_domain)
        throw std::invalid_argument("ScoreRecord: oracle requires source == target");
}

std::string ScoreRecord::to_json_line() const {
    nlohmann::json j;
    j["source_domain"] = source_domain;
    j["target_domain"] = target_domain;
    j["method"] = method;
    j["availability"] = availability;
    j["case_id"] = case_id;
    j["surface_dice"] = surface_dice;
    j["dice"] = dice;
    j["seed"] = seed;
    return j.dump();
}

ScoreRecord ScoreRecord::from_json_line(const std::string& line) {
    nlohmann::json j = nlohmann::json::parse(line);
    ScoreRecord r;
    r.source_domain = j.at("source_domain").get<std::string>();
    r.target_domain = j.at("target_domain").get<std::string>();
    r.method = j.at("method").get<std::string>();
    r.availability = j.at("availability").get<std::string>();
    r.case_id = j.at("case_id").get<std::string>();
    r.surface_dice = j.at("surface_dice").get<double>();
    r.dice = j.at("dice").get<double>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.validate();
    return r;
}

void append_records(const std::string& path, const std::vector<ScoreRecord>& records) {
    std::ofstream f(path, std::ios::app);
    if (!f) throw std::runtime_error("append_records: cannot open " + path);
    for (const auto& r : records) {
        r.validate();
        f << r.to_json_line() << "\n";  // one line per record, single write
    }
    f.flush();
    if (!f) throw std::runtime_error("append_records: write failed for " + path);
}

std::vector<ScoreRecord> load_records(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_records: cannot open " + path);
    std::vector<ScoreRecord> out;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        out.push_back(ScoreRecord::from_json_line(line));
    }
    return out;
}

std::vector<std::vector<std::string>> fold_split(std::vector<std::string> case_ids, int k,
                                                 std::uint64_t seed) {
    if (k < 2) throw std::invalid_argument("fold_split: k must be >= 2");
    if (case_ids.size() < static_cast<std::size_t>(k))
        throw std::invalid_argument("fold_split: fewer cases than folds");
    std::sort(case_ids.begin(), case_ids.end());
    Rng rng(seed);
    for (std::size_t i = case_ids.size(); i > 1; --i)
        std::swap(case_ids[i - 1], case_ids[rng.next_below(i)]);
    std::vector<std::vector<std::string>> folds(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < case_ids.size(); ++i)
        folds[i % static_cast<std::size_t>(k)].push_back(case_ids[i]);
    return folds;
}

Mask predict_mask(nn::Unet2D<float>& model, const Volume& v, int batch_size) {
    model.set_training(false);
    const std::size_t div = model.spec().divisor();
    const std::size_t hp = (v.nx() + div - 1) / div * div;
    const std::size_t wp = (v.ny() + div - 1) / div * div;
    const std::size_t top = (hp - v.nx()) / 2, left = (wp - v.ny()) / 2;

    Mask out;
    out.data = Tensor<std::uint8_t>({v.nx(), v.ny(), v.nz()});
    out.spacing = v.spacing;

    const std::size_t plane = hp * wp;
    for (std::size_t z0 = 0; z0 < v.nz(); z0 += static_cast<std::size_t>(batch_size)) {
        const std::size_t zn = std::min(v.nz(), z0 + static_cast<std::size_t>(batch_size)) - z0;
        Tensor<float> batch({zn, 1, hp, wp});
        for (std::size_t b = 0; b < zn; ++b) {
            const Slice2D s = pad_to(extract_axial_slice(v, z0 + b), hp, wp);
            std::copy(s.data.data(), s.data.data() + plane, batch.data() + b * plane);
        }
        const Tensor<float> logits = model.forward(batch);
        for (std::size_t b = 0; b < zn; ++b)
            for (std::size_t i = 0; i < v.nx(); ++i)
                for (std::size_t j = 0; j < v.ny(); ++j)
                    out.at(i, j, z0 + b) =
                        logits[b * plane + (i + top) * wp + (j + left)] > 0.0f ? 1 : 0;
    }
    return out;
}

CaseScore score_case(nn::Unet2D<float>& model, const std::string& case_id, const Volume& v,
                     const Mask& gt, double tolerance_mm) {
    const Mask pred = predict_mask(model, v);
    CaseScore s;
    s.case_id = case_id;
    s.surface_dice = surface_dice(pred, gt, tolerance_mm).value;
    s.dice = dice(pred, gt).value;
    return s;
}

GapClosure gap_closure(double d, double d_b, double d_o, double eps) {
    for (double x : {d, d_b, d_o})
        if (!std::isfinite(x)) throw std::invalid_argument("gap_closure: non-finite input");
    GapClosure g;
    g.d = d;
    g.d_b = d_b;
    g.d_o = d_o;
    g.defined = std::abs(d_o - d_b) > eps;
    if (g.defined) g.d_r = (d - d_b) / (d_o - d_b);
    return g;
}

double binomial_tail_half(std::size_t wins, std::size_t n) {
    if (wins > n) throw std::invalid_argument("binomial_tail_half: wins > n");
    // P(X >= wins | n, 1/2) with exact binomial coefficients
    long double sum = 0.0L;
    long double coeff = 1.0L;  // C(n, k), updated incrementally
    for (std::size_t k = 0; k <= n; ++k) {
        if (k >= wins) sum += coeff;
        coeff = coeff * static_cast<long double>(n - k) / static_cast<long double>(k + 1);
    }
    return static_cast<double>(sum * std::pow(0.5L, static_cast<long double>(n)));
}

SignTestResult paired_sign_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size())
        throw std::invalid_argument("paired_sign_test: length mismatch");
    if (a.empty()) throw std::invalid_argument("paired_sign_test: need at least one pair");
    std::size_t wins_a = 0, wins_b = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        if (std::abs(d) <= kSignTestTieTolerance) continue;  // tie, excluded
        (d > 0 ? wins_a : wins_b)++;
    }
    SignTestResult r;
    r.n_effective = wins_a + wins_b;
    if (r.n_effective == 0) {
        r.p_value = 1.0;
        r.winner = 0;
        r.significant = false;
        return r;
    }
    const std::size_t lead = std::max(wins_a, wins_b);
    r.p_value = binomial_tail_half(lead, r.n_effective);
    r.winner = wins_a == wins_b ? 0 : (wins_a > wins_b ? +1 : -1);
    r.significant = r.p_value < kSignTestAlpha;
    return r;
}

SignTestResult paired_sign_test_by_case(const std::vector<std::pair<std::string, double>>& a,
                                        const std::vector<std::pair<std::string, double>>& b) {
    if (a.size() != b.size())
        throw std::invalid_argument("paired_sign_test_by_case: length mismatch");
    auto sa = a, sb = b;
    auto by_id = [](const auto& x, const auto& y) { return x.first < y.first; };
    std::sort(sa.begin(), sa.end(), by_id);
    std::sort(sb.begin(), sb.end(), by_id);
    std::vector<double> va, vb;
    for (std::size_t i = 0; i < sa.size(); ++i) {
        if (sa[i].first != sb[i].first)
            throw std::invalid_argument("paired_sign_test_by_case: unmatched case id " +
                                        sa[i].first + " vs " + sb[i].first);
        va.push_back(sa[i].second);
        vb.push_back(sb[i].second);
    }
    return paired_sign_test(va, vb);
}

// --- ScoreTable -------------------------------------------------------------

ScoreTable::ScoreTable(const std::vector<ScoreRecord>& records) : records_(records) {
    std::set<std::string> methods, avail;
    for (const auto& r : records_) {
        r.validate();
        if (r.method != "oracle" && r.method != "baseline") {
            methods.insert(r.method);
            avail.insert(r.availability);
        }
    }
    methods_.assign(methods.begin(), methods.end());
    availabilities_.assign(avail.begin(), avail.end());
}

std::vector<PairKey> ScoreTable::transfer_pairs() const {
    // pairs that were actually fine-tuned; baselines alone (computed for
    // the whole transfer matrix) do not make a pair part of the trend
    std::set<PairKey> pairs;
    for (const auto& r : records_)
        if (r.method != "oracle" && r.method != "baseline")
            pairs.insert({r.source_domain, r.target_domain});
    if (pairs.empty())
        for (const auto& r : records_)
            if (r.method == "baseline") pairs.insert({r.source_domain, r.target_domain});
    return {pairs.begin(), pairs.end()};
}

std::optional<double> ScoreTable::oracle_mean(const std::string& target) const {
    std::vector<double> v;
    for (const auto& r : records_)
        if (r.method == "oracle" && r.target_domain == target) v.push_back(r.surface_dice);
    if (v.empty()) return std::nullopt;
    return mean_of(v);
}

std::optional<double> ScoreTable::baseline_mean(const PairKey& pair) const {
    std::vector<double> v;
    for (const auto& r : records_)
        if (r.method == "baseline" && r.source_domain == pair.source &&
            r.target_domain == pair.target)
            v.push_back(r.surface_dice);
    if (v.empty()) return std::nullopt;
    return mean_of(v);
}

PairScores ScoreTable::pair_scores(const PairKey& pair, const std::string& method,
                                   const std::string& availability, double eps) const {
    PairScores ps;
    ps.pair = pair;

    // per-case values: oracle and baseline keyed by case, method scores
    // averaged over seeds per case
    std::map<std::string, double> oracle_by_case, baseline_by_case;
    std::map<std::string, std::vector<double>> method_by_case;
    for (const auto& r : records_) {
        if (r.target_domain != pair.target) continue;
        if (r.method == "oracle") oracle_by_case[r.case_id] = r.surface_dice;
        if (r.source_domain != pair.source) continue;
        if (r.method == "baseline") baseline_by_case[r.case_id] = r.surface_dice;
        if (r.method == method && r.availability == availability)
            method_by_case[r.case_id].push_back(r.surface_dice);
    }
    if (method_by_case.empty()) return ps;  // has_records stays false
    ps.has_records = true;

    // gap-closure denominator from the pair means over the evaluated cases
    std::vector<double> d_o, d_b;
    for (const auto& [cid, scores] : method_by_case) {
        auto bo = baseline_by_case.find(cid);
        auto oo = oracle_by_case.find(cid);
        if (bo == baseline_by_case.end() || oo == oracle_by_case.end())
            throw std::runtime_error("pair_scores: case " + cid +
                                     " lacks baseline or oracle records for pair " + pair.source +
                                     "->" + pair.target);
        d_b.push_back(bo->second);
        d_o.push_back(oo->second);
    }
    const double denom = mean_of(d_o) - mean_of(d_b);
    ps.defined = std::abs(denom) > eps;
    if (!ps.defined) return ps;

    std::size_t i = 0;
    double sum = 0.0;
    for (const auto& [cid, scores] : method_by_case) {
        const double d_case = mean_of(scores);
        const double d_r = (d_case - d_b[i]) / denom;
        ps.per_case_d_r.emplace_back(cid, d_r);
        sum += d_r;
        ++i;
    }
    ps.mean_d_r = sum / static_cast<double>(ps.per_case_d_r.size());
    return ps;
}

TransferMatrix build_transfer_matrix(const std::vector<ScoreRecord>& records,
                                     const std::vector<std::string>& domains) {
    TransferMatrix m;
    m.domains = domains;
    std::map<PairKey, std::vector<double>> cell_scores;
    for (const auto& r : records) {
        if (r.method == "oracle")
            cell_scores[{r.target_domain, r.target_domain}].push_back(r.surface_dice);
        else if (r.method == "baseline")
            cell_scores[{r.source_domain, r.target_domain}].push_back(r.surface_dice);
    }
    for (const auto& s : domains)
        for (const auto& t : domains) {
            auto it = cell_scores.find({s, t});
            if (it == cell_scores.end()) {
                if (s == t)
                    throw std::runtime_error("build_transfer_matrix: no oracle records for " + s);
                throw std::runtime_error("build_transfer_matrix: no baseline records for " + s +
                                         "->" + t);
            }
            MatrixCell c;
            c.n = it->second.size();
            c.mean = mean_of(it->second);
            double ss = 0.0;
            for (double x : it->second) ss += (x - c.mean) * (x - c.mean);
            c.stddev = c.n > 1 ? std::sqrt(ss / static_cast<double>(c.n)) : 0.0;
            m.cells[{s, t}] = c;
        }
    return m;
}

WinnerCounts winner_counts(const ScoreTable& table, const std::vector<std::string>& levels,
                           const std::vector<std::string>& methods) {
    if (methods.empty()) throw std::invalid_argument("winner_counts: no methods");
    const auto pairs = table.transfer_pairs();
    WinnerCounts wc;
    wc.pair_count = pairs.size();

    // every requested cell must have records; cells with records but a
    // degenerate gap denominator are merely excluded from the counts
    std::vector<std::string> missing;
    std::map<std::string, std::map<std::string, std::map<PairKey, PairScores>>> cache;
    for (const auto& level : levels)
        for (const auto& method : methods)
            for (const auto& pair : pairs) {
                PairScores ps = table.pair_scores(pair, method, level);
                if (!ps.has_records)
                    missing.push_back(pair.source + "->" + pair.target + "/" + method + "/" +
                                      level);
                cache[level][method][pair] = std::move(ps);
            }
    if (!missing.empty()) {
        std::string msg = "winner_counts: missing result cells:";
        for (const auto& m : missing) msg += " " + m;
        throw std::runtime_error(msg);
    }

    for (const auto& level : levels) {
        std::map<std::string, WinnerCell> counts;
        for (const auto& m : methods) counts[m] = {m, 0, 0};
        for (const auto& pair : pairs) {
            // winner by highest mean d_r among defined cells; ties keep
            // the earliest method in the requested order
            const PairScores* best = nullptr;
            std::string winner_method;
            for (const auto& m : methods) {
                const PairScores& ps = cache[level][m][pair];
                if (!ps.defined) continue;
                if (!best || ps.mean_d_r > best->mean_d_r) {
                    best = &ps;
                    winner_method = m;
                }
            }
            if (!best) continue;
            counts[winner_method].wins++;

            bool all_significant = true;
            for (const auto& m : methods) {
                if (m == winner_method) continue;
                const PairScores& other = cache[level][m][pair];
                if (!other.defined) continue;
                const SignTestResult st =
                    paired_sign_test_by_case(best->per_case_d_r, other.per_case_d_r);
                if (!(st.significant && st.winner == +1)) all_significant = false;
            }
            if (all_significant && methods.size() > 1) counts[winner_method].significant_wins++;
            if (methods.size() == 1) counts[winner_method].significant_wins++;
        }
        std::vector<WinnerCell> cells;
        for (const auto& m : methods) cells.push_back(counts[m]);
        wc.per_level[level] = std::move(cells);
    }
    return wc;
}

std::vector<TrendCell> aggregate_trend(const ScoreTable& table,
                                       const std::vector<std::string>& levels,
                                       const std::vector<std::string>& methods) {
    const auto pairs = table.transfer_pairs();
    std::vector<TrendCell> out;
    for (const auto& level : levels)
        for (const auto& method : methods) {
            TrendCell cell;
            cell.availability = level;
            cell.method = method;
            for (const auto& pair : pairs) {
                const PairScores ps = table.pair_scores(pair, method, level);
                if (ps.defined) {
                    cell.per_pair_d_r.push_back(ps.mean_d_r);
                    cell.pairs_defined++;
                } else {
                    cell.pairs_excluded++;
                }
            }
            cell.mean_d_r = mean_of(cell.per_pair_d_r);
            out.push_back(std::move(cell));
        }
    return out;
}

} // namespace segda::eval
