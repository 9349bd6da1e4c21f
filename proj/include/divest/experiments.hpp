// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "divest/distributions.hpp"
#include "divest/divergence.hpp"
#include "divest/estimator.hpp"
#include "divest/netclass.hpp"
#include "divest/oracle.hpp"

namespace divest {

enum class KRuleKind { kFixed, kEqualN, kSqrtN, kPaperSchedule };

std::string_view to_string(KRuleKind kind);
KRuleKind parse_k_rule(std::string_view tag);

struct KRule {
  KRuleKind kind = KRuleKind::kPaperSchedule;
  std::size_t k = 32;     // kFixed only
  std::size_t cap = 512;  // applied to every rule
};

// Width for sample size n. Under the consistency regime paper_schedule
// returns consistency_width(n) instead.
std::size_t width_for(const KRule& rule, std::size_t n, Regime regime);

struct PairSpec {
  std::string id;  // [A-Za-z0-9_.-]+
  std::string p;   // distribution spec strings
  std::string q;
};

// How each cell builds its class. support = nullopt picks the ball mask
// when either law has unbounded support.
struct ScheduleOptions {
  Regime regime = Regime::kUnknownM;
  std::optional<double> M;
  std::optional<SupportKind> support;
  double smoothness = 1.0;
  double c0 = 1.0;
  double c1 = 1.0;
  Activation activation = Activation::kReLU;
};

struct SweepConfig {
  std::vector<DivergenceKind> kinds;
  std::vector<PairSpec> pairs;
  std::vector<std::size_t> n_grid;
  KRule k_rule;
  std::size_t seeds = 1;
  std::uint64_t root_seed = 0;
  OracleMethod oracle = OracleMethod::kQuadrature;
  std::size_t oracle_samples = 100000;  // mc-plugin only
  ScheduleOptions schedule;
  TrainOptions train;
  // 0: DIVEST_THREADS, else the hardware concurrency.
  std::size_t threads = 0;
  // wall_ms is left 0 unless set, so repeated sweeps write identical bytes.
  bool timing = false;
  std::string output;

  void validate() const;
};

struct SweepRecord {
  DivergenceKind kind = DivergenceKind::kKL;
  std::string pair;
  std::size_t d = 1;
  std::size_t n = 0;
  std::size_t k = 0;
  std::size_t seed = 0;
  double estimate = 0.0;
  double oracle = 0.0;
  double abs_error = 0.0;
  double signed_error = 0.0;
  double wall_ms = 0.0;
  std::size_t restarts = 0;
  double m_k = 0.0;
  double t_k = 0.0;
  double r_k = 0.0;
  std::string status = "ok";

  bool operator==(const SweepRecord&) const = default;
};

// One record per (kind, pair, n, seed), sorted by (kind, pair, n, k, seed).
// A failing cell keeps its place with status set to the error name.
std::vector<SweepRecord> run_sweep(const SweepConfig& cfg);

// Worker count from cfg.threads, then DIVEST_THREADS, then the hardware.
std::size_t resolve_threads(std::size_t requested);

enum class RateAxis { kN, kK };

std::string_view to_string(RateAxis axis);
RateAxis parse_rate_axis(std::string_view tag);

struct RatePoint {
  double axis = 0.0;
  double mean_abs_error = 0.0;
  double median_abs_error = 0.0;
  std::size_t count = 0;
};

struct RateFit {
  RateAxis axis = RateAxis::kN;
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  std::size_t points = 0;
  std::vector<RatePoint> table;
  std::vector<std::string> warnings;
};

// OLS of log2(seed-mean abs_error) on log2(axis) over records with status ok.
// Axis values whose mean error is exactly 0 are dropped with a warning;
// fewer than three usable values throws DegenerateFit.
RateFit fit_rate(const std::vector<SweepRecord>& records, RateAxis axis);

struct ApproxRow {
  std::size_t k = 0;
  std::size_t seed = 0;
  double sup_error = 0.0;
  double l2_error = 0.0;  // weighted by the nu density on the grid
};

struct ApproxSummary {
  std::size_t k = 0;
  double median_sup_error = 0.0;
  double median_l2_error = 0.0;
};

struct ApproxOptions {
  double a = 20.0;          // G_k^R(a)
  std::size_t grid = 4096;  // midpoint grid over the window
  std::size_t seeds = 5;
  std::uint64_t root_seed = 0;
  // Hidden units start with spread kinks; when set they are also trained
  // with these options before the exact output-layer solve.
  std::optional<TrainOptions> hidden_training;
};

struct ApproxReport {
  std::vector<ApproxRow> rows;
  std::vector<ApproxSummary> summary;
};

// Least-squares fit of one target on a grid from `start`: optional projected
// training of all weights, then the exact box-constrained solve for
// (beta, b0, w0) with the hidden units fixed. Returns the two errors.
ApproxRow approx_fit(const NetClassSpec& spec, const NetParams& start,
                     const SampleBatch& grid, const std::vector<double>& targets,
                     const std::vector<double>& nu_weights,
                     const std::optional<TrainOptions>& hidden_training, Rng& rng);

// Errors of a fitted net against the targets on the grid.
ApproxRow approx_errors(const NetClassSpec& spec, const NetParams& params,
                        const SampleBatch& grid, const std::vector<double>& targets,
                        const std::vector<double>& nu_weights);

// d = 1 start point: beta = 0, hidden kinks uniform on [lo, hi] with random
// orientation at the largest feasible slope.
NetParams spread_kinks(const NetClassSpec& spec, double lo, double hi, Rng& rng);

// Regresses f_KL = log(p/q) onto G_k^R(a) for each k. d = 1 only; the grid
// spans [0,1] for compact pairs, else the union of 8-sigma windows.
ApproxReport approx_check(const Distribution& p, const Distribution& q,
                          const std::vector<std::size_t>& k_grid,
                          const ApproxOptions& opts);

inline constexpr std::string_view kCsvHeader =
    "kind,pair,d,n,k,seed,estimate,oracle,abs_error,signed_error,wall_ms,"
    "restarts,m_k,t_k,r_k,status";

enum class ResultFormat { kCsv, kJson };

std::string to_csv(const std::vector<SweepRecord>& records);
std::vector<SweepRecord> parse_csv(std::string_view text);

void write_results(const std::vector<SweepRecord>& records,
                   const std::filesystem::path& path, ResultFormat format);
// Format taken from the extension (.json, otherwise csv).
void write_results(const std::vector<SweepRecord>& records,
                   const std::filesystem::path& path);
std::vector<SweepRecord> read_csv(const std::filesystem::path& path);
// Reads csv or json by extension.
std::vector<SweepRecord> read_results(const std::filesystem::path& path);

}  // namespace divest
