#pragma once

// Scoring protocol: oracle/baseline records, gap-closure, paired sign
// test, winner counts and trend aggregation, plus the report emitter.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "segda/metrics.hpp"
#include "segda/model.hpp"
#include "segda/volume.hpp"

namespace segda::eval {

struct ScoreRecord {
    std::string source_domain;
    std::string target_domain;
    std::string method;        // oracle | baseline | all_layers | first_layers | last_layers
    std::string availability;  // empty for oracle/baseline
    std::string case_id;
    double surface_dice = 0.0;
    double dice = 0.0;
    std::uint64_t seed = 0;

    void validate() const;
    std::string to_json_line() const;
    static ScoreRecord from_json_line(const std::string& line);
};

// Append-only JSON-lines store.
void append_records(const std::string& path, const std::vector<ScoreRecord>& records);
std::vector<ScoreRecord> load_records(const std::string& path);

// --- fold split for the oracle --------------------------------------------

// Deterministic seeded k-fold partition of case ids; folds differ in size
// by at most one, every id lands in exactly one fold.
std::vector<std::vector<std::string>> fold_split(std::vector<std::string> case_ids, int k,
                                                 std::uint64_t seed);

// --- per-volume inference ---------------------------------------------------

// Slice-wise prediction; spatial dims are padded to the model's divisor
// and the output is cropped back. Threshold: logit > 0.
Mask predict_mask(nn::Unet2D<float>& model, const Volume& v, int batch_size = 8);

struct CaseScore {
    std::string case_id;
    double surface_dice = 0.0;
    double dice = 0.0;
};

CaseScore score_case(nn::Unet2D<float>& model, const std::string& case_id, const Volume& v,
                     const Mask& gt, double tolerance_mm = kDefaultSurfaceToleranceMm);

// --- gap closure ------------------------------------------------------------

struct GapClosure {
    double d_r = 0.0;
    double d = 0.0;
    double d_b = 0.0;
    double d_o = 0.0;
    bool defined = false;
};

GapClosure gap_closure(double d, double d_b, double d_o, double eps = 1e-6);

// --- paired sign test -------------------------------------------------------

struct SignTestResult {
    double p_value = 1.0;
    std::size_t n_effective = 0;
    int winner = 0;  // +1 first argument, -1 second, 0 none
    bool significant = false;  // p < 0.1
};

inline constexpr double kSignTestAlpha = 0.1;
inline constexpr double kSignTestTieTolerance = 1e-12;

// Exact one-sided binomial tail for the observed leader; ties excluded.
SignTestResult paired_sign_test(const std::vector<double>& a, const std::vector<double>& b);

// Pairs by case id first; throws on unmatched ids.
SignTestResult paired_sign_test_by_case(const std::vector<std::pair<std::string, double>>& a,
                                        const std::vector<std::pair<std::string, double>>& b);

// exact tail P(X >= wins | n, 1/2), exposed for tests
double binomial_tail_half(std::size_t wins, std::size_t n);

// --- aggregation ------------------------------------------------------------

struct PairKey {
    std::string source, target;
    bool operator<(const PairKey& o) const {
        return source != o.source ? source < o.source : target < o.target;
    }
};

struct MatrixCell {
    double mean = 0.0;
    double stddev = 0.0;
    std::size_t n = 0;
};

struct TransferMatrix {
    std::vector<std::string> domains;
    std::map<PairKey, MatrixCell> cells;  // diagonal = oracle, off-diagonal = baseline
};

TransferMatrix build_transfer_matrix(const std::vector<ScoreRecord>& records,
                                     const std::vector<std::string>& domains);

// Per-pair mean D_R for one (method, availability); per-case values kept
// for the sign tests. Cases are averaged over seeds first.
struct PairScores {
    PairKey pair;
    std::vector<std::pair<std::string, double>> per_case_d_r;  // (case_id, d_r)
    double mean_d_r = 0.0;
    bool defined = false;      // denominator large enough
    bool has_records = false;  // any method records found at all
};

class ScoreTable {
public:
    explicit ScoreTable(const std::vector<ScoreRecord>& records);

    const std::vector<std::string>& methods() const { return methods_; }
    const std::vector<std::string>& availabilities() const { return availabilities_; }
    std::vector<PairKey> transfer_pairs() const;

    // oracle / baseline means for a pair
    std::optional<double> oracle_mean(const std::string& target) const;
    std::optional<double> baseline_mean(const PairKey& pair) const;

    PairScores pair_scores(const PairKey& pair, const std::string& method,
                           const std::string& availability, double eps = 1e-6) const;

private:
    std::vector<ScoreRecord> records_;
    std::vector<std::string> methods_;
    std::vector<std::string> availabilities_;
};

struct WinnerCell {
    std::string method;
    int wins = 0;
    int significant_wins = 0;
};

struct WinnerCounts {
    // availability -> per-method counts; wins over all evaluated pairs
    std::map<std::string, std::vector<WinnerCell>> per_level;
    std::size_t pair_count = 0;
};

WinnerCounts winner_counts(const ScoreTable& table, const std::vector<std::string>& levels,
                           const std::vector<std::string>& methods);

struct TrendCell {
    std::string availability;
    std::string method;
    double mean_d_r = 0.0;
    std::size_t pairs_defined = 0;
    std::size_t pairs_excluded = 0;
    std::vector<double> per_pair_d_r;
};

std::vector<TrendCell> aggregate_trend(const ScoreTable& table,
                                       const std::vector<std::string>& levels,
                                       const std::vector<std::string>& methods);

// --- report -----------------------------------------------------------------

// Writes transfer_matrix.csv, trend.csv, winners.csv, trend.svg and
// winners.svg; CSV output is byte-stable for identical inputs.
void emit_report(const TransferMatrix& matrix, const std::vector<TrendCell>& trend,
                 const WinnerCounts& winners, const std::string& out_dir);

} // namespace segda::eval
