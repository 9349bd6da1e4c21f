// Apache License, Version 2.0, refer to LICENSE.txt

#include "divest/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>
#include <tuple>

#include <Eigen/Dense>

#include "divest/error.hpp"
#include "divest/serialize.hpp"

namespace divest {

std::string_view to_string(KRuleKind kind) {
  switch (kind) {
    case KRuleKind::kFixed: return "fixed";
    case KRuleKind::kEqualN: return "equal_n";
    case KRuleKind::kSqrtN: return "sqrt_n";
    case KRuleKind::kPaperSchedule: return "paper_schedule";
  }
  return "fixed";
}

KRuleKind parse_k_rule(std::string_view tag) {
  if (tag == "fixed") return KRuleKind::kFixed;
  if (tag == "equal_n") return KRuleKind::kEqualN;
  if (tag == "sqrt_n") return KRuleKind::kSqrtN;
  if (tag == "paper_schedule") return KRuleKind::kPaperSchedule;
  throw Error(ErrorCode::kInvalidRequest, "unknown k rule '" + std::string(tag) + "'");
}

std::size_t width_for(const KRule& rule, std::size_t n, Regime regime) {
  std::size_t k = 0;
  switch (rule.kind) {
    case KRuleKind::kFixed: k = rule.k; break;
    case KRuleKind::kEqualN: k = n; break;
    case KRuleKind::kSqrtN:
      k = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
      break;
    case KRuleKind::kPaperSchedule:
      k = regime == Regime::kConsistency ? consistency_width(n) : n;
      break;
  }
  return std::max<std::size_t>(1, std::min(k, rule.cap));
}

namespace {

bool valid_pair_id(std::string_view id) {
  if (id.empty()) return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' ||
           c == '-';
  });
}

}  // namespace

void SweepConfig::validate() const {
  if (kinds.empty() || pairs.empty() || n_grid.empty()) {
    throw Error(ErrorCode::kInvalidRequest,
                "sweep needs nonempty divergences, pairs and n_grid");
  }
  if (seeds < 1) throw Error(ErrorCode::kInvalidRequest, "seeds must be >= 1");
  for (std::size_t n : n_grid) {
    if (n < 1) throw Error(ErrorCode::kInvalidRequest, "n_grid entries must be >= 1");
  }
  if (k_rule.cap < 1) throw Error(ErrorCode::kInvalidRequest, "k cap must be >= 1");
  for (const auto& pair : pairs) {
    if (!valid_pair_id(pair.id)) {
      throw Error(ErrorCode::kInvalidRequest,
                  "pair id '" + pair.id + "' must match [A-Za-z0-9_.-]+");
    }
  }
  train.validate();
}

std::size_t resolve_threads(std::size_t requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("DIVEST_THREADS")) {
    std::size_t v = 0;
    const std::string_view s(env);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec == std::errc() && ptr == s.data() + s.size() && v > 0) return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

struct PairData {
  Distribution p;
  Distribution q;
};

struct Cell {
  std::size_t kind_index;
  std::size_t pair_index;
  std::size_t n;
  std::size_t seed;
};

bool is_compact(const Distribution& dist) { return dist.compact(); }

double oracle_value(DivergenceKind kind, const PairData& pair,
                    const SweepConfig& cfg, std::size_t pair_index) {
  const DivergenceKind target =
      kind == DivergenceKind::kKLDV ? DivergenceKind::kKL : kind;
  switch (cfg.oracle) {
    case OracleMethod::kClosedForm:
      return divergence_closed_form(target, pair.p, pair.q).value;
    case OracleMethod::kQuadrature:
      return divergence_quadrature(target, pair.p, pair.q).value;
    case OracleMethod::kMcPlugin: {
      Rng rng(derive_seed(derive_seed(cfg.root_seed, 0x6f7261636c65ULL), pair_index));
      return divergence_mc_plugin(target, pair.p, pair.q, cfg.oracle_samples, rng).value;
    }
  }
  return 0.0;
}

}  // namespace

std::vector<SweepRecord> run_sweep(const SweepConfig& cfg) {
  cfg.validate();
  std::vector<PairData> pairs;
  pairs.reserve(cfg.pairs.size());
  for (const auto& spec : cfg.pairs) {
    PairData data{parse_distribution(spec.p), parse_distribution(spec.q)};
    if (data.p.dim() != data.q.dim()) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "pair '" + spec.id + "' mixes dimensions");
    }
    pairs.push_back(std::move(data));
  }

  // Oracle once per (kind, pair); failures mark every cell of that block.
  std::vector<std::vector<std::optional<double>>> oracles(cfg.kinds.size());
  std::vector<std::vector<std::string>> oracle_status(cfg.kinds.size());
  for (std::size_t a = 0; a < cfg.kinds.size(); ++a) {
    for (std::size_t b = 0; b < pairs.size(); ++b) {
      try {
        oracles[a].push_back(oracle_value(cfg.kinds[a], pairs[b], cfg, b));
        oracle_status[a].push_back("ok");
      } catch (const Error& e) {
        oracles[a].push_back(std::nullopt);
        oracle_status[a].push_back(std::string(error_code_name(e.code())));
      }
    }
  }

  std::vector<Cell> cells;
  for (std::size_t a = 0; a < cfg.kinds.size(); ++a) {
    for (std::size_t b = 0; b < pairs.size(); ++b) {
      for (std::size_t n : cfg.n_grid) {
        for (std::size_t s = 0; s < cfg.seeds; ++s) cells.push_back({a, b, n, s});
      }
    }
  }
  std::vector<SweepRecord> records(cells.size());

  auto run_cell = [&](const Cell& cell) {
    const DivergenceKind kind = cfg.kinds[cell.kind_index];
    const PairData& pair = pairs[cell.pair_index];
    SweepRecord rec;
    rec.kind = kind;
    rec.pair = cfg.pairs[cell.pair_index].id;
    rec.d = pair.p.dim();
    rec.n = cell.n;
    rec.seed = cell.seed;
    rec.k = width_for(cfg.k_rule, cell.n, cfg.schedule.regime);
    rec.restarts = cfg.train.restarts;
    const auto start = std::chrono::steady_clock::now();
    try {
      ScheduleRequest req;
      req.kind = kind;
      req.k = rec.k;
      req.d = rec.d;
      req.regime = cfg.schedule.regime;
      req.M = cfg.schedule.M;
      req.support = cfg.schedule.support.value_or(
          is_compact(pair.p) && is_compact(pair.q) ? SupportKind::kCompactUnitCube
                                                   : SupportKind::kBall);
      req.smoothness = cfg.schedule.smoothness;
      req.c0 = cfg.schedule.c0;
      req.c1 = cfg.schedule.c1;
      req.activation = cfg.schedule.activation;
      const NetClassSpec spec = class_schedule(req);
      rec.m_k = schedule_m(spec);
      rec.t_k = schedule_t(spec);
      rec.r_k = schedule_r(spec);

      const auto& oracle = oracles[cell.kind_index][cell.pair_index];
      if (!oracle) {
        rec.status = oracle_status[cell.kind_index][cell.pair_index];
        return rec;
      }
      rec.oracle = *oracle;

      // Data depend on (pair, n, seed) only, so kinds share samples.
      const std::uint64_t data_seed = derive_seed(
          derive_seed(derive_seed(cfg.root_seed, cell.pair_index), cell.n), cell.seed);
      const SampleBatch X = sample(pair.p, cell.n, derive_seed(data_seed, 1));
      const SampleBatch Y = sample(pair.q, cell.n, derive_seed(data_seed, 2));
      TrainOptions opts = cfg.train;
      opts.seed = derive_seed(data_seed, 16 + cell.kind_index);
      const EstimateResult res = estimate(kind, spec, X, Y, opts);
      rec.estimate = res.value;
      rec.signed_error = rec.estimate - rec.oracle;
      rec.abs_error = std::abs(rec.signed_error);
    } catch (const Error& e) {
      rec.status = std::string(error_code_name(e.code()));
    }
    if (cfg.timing) {
      rec.wall_ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - start)
                        .count();
    }
    return rec;
  };

  const std::size_t workers = std::min(resolve_threads(cfg.threads), cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      records[i] = run_cell(cells[i]);
    }
  };
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(worker);
  }

  std::stable_sort(records.begin(), records.end(),
                   [](const SweepRecord& a, const SweepRecord& b) {
                     return std::tie(a.kind, a.pair, a.n, a.k, a.seed) <
                            std::tie(b.kind, b.pair, b.n, b.k, b.seed);
                   });
  return records;
}

std::string_view to_string(RateAxis axis) { return axis == RateAxis::kN ? "n" : "k"; }

RateAxis parse_rate_axis(std::string_view tag) {
  if (tag == "n") return RateAxis::kN;
  if (tag == "k") return RateAxis::kK;
  throw Error(ErrorCode::kInvalidRequest, "axis must be n or k");
}

RateFit fit_rate(const std::vector<SweepRecord>& records, RateAxis axis) {
  std::map<std::size_t, std::vector<double>> groups;
  for (const auto& r : records) {
    if (r.status != "ok") continue;
    groups[axis == RateAxis::kN ? r.n : r.k].push_back(r.abs_error);
  }
  RateFit fit;
  fit.axis = axis;
  std::vector<double> xs;
  std::vector<double> ys;
  for (auto& [value, errors] : groups) {
    RatePoint pt;
    pt.axis = static_cast<double>(value);
    pt.count = errors.size();
    double sum = 0.0;
    for (double e : errors) sum += e;
    pt.mean_abs_error = sum / static_cast<double>(errors.size());
    std::sort(errors.begin(), errors.end());
    const std::size_t m = errors.size();
    pt.median_abs_error =
        m % 2 == 1 ? errors[m / 2] : 0.5 * (errors[m / 2 - 1] + errors[m / 2]);
    fit.table.push_back(pt);
    if (pt.mean_abs_error == 0.0) {
      fit.warnings.push_back("dropped " + std::string(to_string(axis)) + "=" +
                             std::to_string(value) + " with zero mean error");
      continue;
    }
    xs.push_back(std::log2(pt.axis));
    ys.push_back(std::log2(pt.mean_abs_error));
  }
  if (xs.size() < 3) {
    throw Error(ErrorCode::kDegenerateFit,
                "rate fit needs at least 3 axis values with nonzero error, got " +
                    std::to_string(xs.size()));
  }
  const double m = static_cast<double>(xs.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= m;
  my /= m;
  double sxx = 0.0;
  double sxy = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  // A constant series is fitted exactly by slope 0.
  fit.r2 = syy > 0.0 ? std::clamp(sxy * sxy / (sxx * syy), 0.0, 1.0) : 1.0;
  fit.points = xs.size();
  return fit;
}

namespace {

// Minimizes 0.5 x'Gx - r'x over lo <= x <= hi by a bounded-variable
// active-set method; x holds the start and receives the solution.
void bounded_least_squares(const std::vector<double>& gram, const std::vector<double>& rhs,
                           const std::vector<double>& lo, const std::vector<double>& hi,
                           std::vector<double>& x) {
  const std::size_t m = rhs.size();
  const Eigen::Map<const Eigen::MatrixXd> G(gram.data(), static_cast<Eigen::Index>(m),
                                            static_cast<Eigen::Index>(m));
  const Eigen::Map<const Eigen::VectorXd> r(rhs.data(), static_cast<Eigen::Index>(m));
  // Ridge keeps near-collinear hidden features solvable.
  const double ridge = 1e-12 * std::max(1.0, G.diagonal().maxCoeff());
  enum State : char { kFree, kLower, kUpper };
  std::vector<State> state(m, kFree);
  for (std::size_t i = 0; i < m; ++i) {
    if (x[i] <= lo[i]) {
      x[i] = lo[i];
      state[i] = kLower;
    } else if (x[i] >= hi[i]) {
      x[i] = hi[i];
      state[i] = kUpper;
    }
  }
  const std::size_t max_outer = 20 * m + 100;
  for (std::size_t outer = 0; outer < max_outer; ++outer) {
    // Solve on the free set, stepping back to the box when the solution leaves it.
    for (std::size_t inner = 0; inner <= m; ++inner) {
      std::vector<Eigen::Index> free;
      for (std::size_t i = 0; i < m; ++i) {
        if (state[i] == kFree) free.push_back(static_cast<Eigen::Index>(i));
      }
      if (free.empty()) break;
      const Eigen::Index f = static_cast<Eigen::Index>(free.size());
      Eigen::MatrixXd A(f, f);
      Eigen::VectorXd b(f);
      for (Eigen::Index a = 0; a < f; ++a) {
        double s = r(free[a]);
        for (std::size_t j = 0; j < m; ++j) {
          if (state[j] != kFree) s -= G(free[a], static_cast<Eigen::Index>(j)) * x[j];
        }
        b(a) = s;
        for (Eigen::Index c = 0; c < f; ++c) A(a, c) = G(free[a], free[c]);
      }
      Eigen::MatrixXd ridged = A;
      ridged.diagonal().array() += ridge;
      const auto ldlt = ridged.ldlt();
      Eigen::VectorXd z = ldlt.solve(b);
      // Refinement against the unridged system removes the ridge bias.
      for (int it = 0; it < 3; ++it) z += ldlt.solve(b - A * z);
      double alpha = 1.0;
      Eigen::Index hit = -1;
      for (Eigen::Index a = 0; a < f; ++a) {
        const auto i = static_cast<std::size_t>(free[a]);
        const double step = z(a) - x[i];
        double limit = 1.0;
        if (z(a) < lo[i]) limit = (lo[i] - x[i]) / step;
        if (z(a) > hi[i]) limit = (hi[i] - x[i]) / step;
        if (limit < alpha) {
          alpha = std::max(0.0, limit);
          hit = a;
        }
      }
      for (Eigen::Index a = 0; a < f; ++a) {
        const auto i = static_cast<std::size_t>(free[a]);
        x[i] += alpha * (z(a) - x[i]);
      }
      if (hit < 0) break;
      for (Eigen::Index a = 0; a < f; ++a) {
        const auto i = static_cast<std::size_t>(free[a]);
        if (a == hit) {
          x[i] = z(a) < lo[i] ? lo[i] : hi[i];
        } else if (x[i] <= lo[i]) {
          x[i] = lo[i];
        } else if (x[i] >= hi[i]) {
          x[i] = hi[i];
        } else {
          continue;
        }
        state[i] = x[i] == lo[i] ? kLower : kUpper;
      }
    }
    // Release the bound variable whose multiplier has the wrong sign.
    double worst = 1e-12 * std::max(1.0, r.cwiseAbs().maxCoeff());
    std::size_t release = m;
    for (std::size_t i = 0; i < m; ++i) {
      if (state[i] == kFree) continue;
      double descent = r(static_cast<Eigen::Index>(i));
      for (std::size_t j = 0; j < m; ++j) descent -= G(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * x[j];
      const double v = state[i] == kLower ? descent : -descent;
      if (v > worst) {
        worst = v;
        release = i;
      }
    }
    if (release == m) return;
    state[release] = kFree;
  }
}

// Exact refit of the output layer for fixed hidden units: box-constrained
// least squares over (beta, b0, and w0 when d = 1).
void polish_outer(const NetClassSpec& spec, NetParams& params, const SampleBatch& grid,
                  const std::vector<double>& targets) {
  const std::size_t k = spec.k;
  const bool with_w0 = spec.d == 1;
  const std::size_t m = k + 1 + (with_w0 ? 1 : 0);
  const std::size_t n = grid.size();
  std::vector<double> lo(m);
  std::vector<double> hi(m);
  for (std::size_t i = 0; i < k; ++i) {
    lo[i] = -spec.bounds.a2;
    hi[i] = spec.bounds.a2;
  }
  lo[k] = -spec.bounds.a3;
  hi[k] = spec.bounds.a3;
  if (with_w0) {
    lo[k + 1] = -spec.bounds.a4;
    hi[k + 1] = spec.bounds.a4;
  }
  // Residual target: the part of g not being refit (w0 when d > 1).
  std::vector<double> y(n);
  std::vector<double> features(n * m);
  for (std::size_t r = 0; r < n; ++r) {
    const auto x = grid.row(r);
    double fixed = 0.0;
    if (!with_w0) {
      for (std::size_t j = 0; j < spec.d; ++j) fixed += params.w0[j] * x[j];
    }
    y[r] = targets[r] - fixed;
    double* f = features.data() + r * m;
    for (std::size_t i = 0; i < k; ++i) {
      double z = params.b[i];
      for (std::size_t j = 0; j < spec.d; ++j) z += params.w[i * spec.d + j] * x[j];
      f[i] = spec.activation == Activation::kReLU ? relu(z) : sigmoid(z);
    }
    f[k] = 1.0;
    if (with_w0) f[k + 1] = x[0];
  }
  std::vector<double> gram(m * m, 0.0);
  std::vector<double> rhs(m, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    const double* f = features.data() + r * m;
    for (std::size_t a = 0; a < m; ++a) {
      if (f[a] == 0.0) continue;
      rhs[a] += f[a] * y[r];
      for (std::size_t b = a; b < m; ++b) gram[a * m + b] += f[a] * f[b];
    }
  }
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = 0; b < a; ++b) gram[a * m + b] = gram[b * m + a];
  }
  std::vector<double> theta(m);
  for (std::size_t i = 0; i < k; ++i) theta[i] = params.beta[i];
  theta[k] = params.b0;
  if (with_w0) theta[k + 1] = params.w0[0];
  bounded_least_squares(gram, rhs, lo, hi, theta);
  for (std::size_t i = 0; i < k; ++i) params.beta[i] = theta[i];
  params.b0 = theta[k];
  if (with_w0) params.w0[0] = theta[k + 1];
}

}  // namespace

NetParams spread_kinks(const NetClassSpec& spec, double lo, double hi, Rng& rng) {
  if (spec.d != 1) {
    throw Error(ErrorCode::kDimensionTooHigh, "kink spreading needs d = 1");
  }
  NetParams p = NetParams::zeros(spec.k, 1);
  for (std::size_t i = 0; i < spec.k; ++i) {
    const double c = rng.uniform(lo, hi);
    const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    const double w = sign * spec.bounds.a1 / std::max(1.0, std::abs(c));
    p.w[i] = w;
    p.b[i] = -w * c;
  }
  return p;
}

ApproxRow approx_fit(const NetClassSpec& spec, const NetParams& start,
                     const SampleBatch& grid, const std::vector<double>& targets,
                     const std::vector<double>& nu_weights,
                     const std::optional<TrainOptions>& hidden_training, Rng& rng) {
  NetParams params = project(spec, start);
  if (hidden_training) {
    params = fit_least_squares(spec, grid, targets, {}, *hidden_training, rng, &params);
  }
  polish_outer(spec, params, grid, targets);
  return approx_errors(spec, params, grid, targets, nu_weights);
}

ApproxRow approx_errors(const NetClassSpec& spec, const NetParams& params,
                        const SampleBatch& grid, const std::vector<double>& targets,
                        const std::vector<double>& nu_weights) {
  NetEvaluator eval(spec, params);
  ApproxRow row;
  row.k = spec.k;
  double wsum = 0.0;
  double l2 = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double r = eval.forward(grid.row(i)) - targets[i];
    row.sup_error = std::max(row.sup_error, std::abs(r));
    const double w = nu_weights.empty() ? 1.0 : nu_weights[i];
    wsum += w;
    l2 += w * r * r;
  }
  row.l2_error = wsum > 0.0 ? std::sqrt(l2 / wsum) : 0.0;
  return row;
}

ApproxReport approx_check(const Distribution& p, const Distribution& q,
                          const std::vector<std::size_t>& k_grid,
                          const ApproxOptions& opts) {
  if (p.dim() != 1 || q.dim() != 1) {
    throw Error(ErrorCode::kDimensionTooHigh, "approx_check supports d = 1 only");
  }
  if (k_grid.empty() || opts.grid < 2 || opts.seeds < 1) {
    throw Error(ErrorCode::kInvalidRequest,
                "approx_check needs a nonempty k grid, grid >= 2 and seeds >= 1");
  }
  const auto [lo, hi] = p.compact() && q.compact()
                            ? std::pair{0.0, 1.0}
                            : integration_window(p, q, 0);
  SampleBatch grid;
  grid.d = 1;
  grid.source = "grid";
  std::vector<double> targets;
  std::vector<double> weights;
  const double h = (hi - lo) / static_cast<double>(opts.grid);
  for (std::size_t i = 0; i < opts.grid; ++i) {
    const double x = lo + (static_cast<double>(i) + 0.5) * h;
    const std::span<const double> pt(&x, 1);
    grid.points.push_back(x);
    targets.push_back(log_ratio(p, q, pt));
    weights.push_back(q.density(pt));
  }

  ApproxReport report;
  for (std::size_t k : k_grid) {
    const NetClassSpec spec = relu_class(1, k, opts.a);
    std::vector<double> sups;
    std::vector<double> l2s;
    for (std::size_t s = 0; s < opts.seeds; ++s) {
      Rng rng(derive_seed(derive_seed(opts.root_seed, k), s));
      const NetParams start = spread_kinks(spec, lo, hi, rng);
      ApproxRow row =
          approx_fit(spec, start, grid, targets, weights, opts.hidden_training, rng);
      row.seed = s;
      sups.push_back(row.sup_error);
      l2s.push_back(row.l2_error);
      report.rows.push_back(row);
    }
    auto median = [](std::vector<double> v) {
      std::sort(v.begin(), v.end());
      const std::size_t m = v.size();
      return m % 2 == 1 ? v[m / 2] : 0.5 * (v[m / 2 - 1] + v[m / 2]);
    };
    report.summary.push_back({k, median(sups), median(l2s)});
  }
  return report;
}

namespace {

std::string format_count(std::size_t v) { return std::to_string(v); }

template <class T>
T parse_number(std::string_view field, std::size_t line, std::string_view name) {
  T value{};
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw Error(ErrorCode::kParse, "line " + std::to_string(line) + ": bad " +
                                       std::string(name) + " '" + std::string(field) + "'");
  }
  return value;
}

}  // namespace

std::string to_csv(const std::vector<SweepRecord>& records) {
  std::string out(kCsvHeader);
  out += '\n';
  for (const auto& r : records) {
    out += to_string(r.kind);
    out += ',' + r.pair;
    out += ',' + format_count(r.d);
    out += ',' + format_count(r.n);
    out += ',' + format_count(r.k);
    out += ',' + format_count(r.seed);
    out += ',' + format_double(r.estimate);
    out += ',' + format_double(r.oracle);
    out += ',' + format_double(r.abs_error);
    out += ',' + format_double(r.signed_error);
    out += ',' + format_double(r.wall_ms);
    out += ',' + format_count(r.restarts);
    out += ',' + format_double(r.m_k);
    out += ',' + format_double(r.t_k);
    out += ',' + format_double(r.r_k);
    out += ',' + r.status;
    out += '\n';
  }
  return out;
}

std::vector<SweepRecord> parse_csv(std::string_view text) {
  std::vector<SweepRecord> records;
  std::size_t line_no = 0;
  bool header = true;
  while (!text.empty()) {
    const std::size_t eol = text.find('\n');
    std::string_view line = text.substr(0, eol);
    text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (header) {
      if (line != kCsvHeader) {
        throw Error(ErrorCode::kParse, "line 1: unexpected csv header");
      }
      header = false;
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string_view> f;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      f.push_back(line.substr(start, comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (f.size() != 16) {
      throw Error(ErrorCode::kParse, "line " + std::to_string(line_no) + ": expected 16 fields, got " +
                                         std::to_string(f.size()));
    }
    SweepRecord r;
    r.kind = parse_divergence(f[0]);
    r.pair = std::string(f[1]);
    r.d = parse_number<std::size_t>(f[2], line_no, "d");
    r.n = parse_number<std::size_t>(f[3], line_no, "n");
    r.k = parse_number<std::size_t>(f[4], line_no, "k");
    r.seed = parse_number<std::size_t>(f[5], line_no, "seed");
    r.estimate = parse_number<double>(f[6], line_no, "estimate");
    r.oracle = parse_number<double>(f[7], line_no, "oracle");
    r.abs_error = parse_number<double>(f[8], line_no, "abs_error");
    r.signed_error = parse_number<double>(f[9], line_no, "signed_error");
    r.wall_ms = parse_number<double>(f[10], line_no, "wall_ms");
    r.restarts = parse_number<std::size_t>(f[11], line_no, "restarts");
    r.m_k = parse_number<double>(f[12], line_no, "m_k");
    r.t_k = parse_number<double>(f[13], line_no, "t_k");
    r.r_k = parse_number<double>(f[14], line_no, "r_k");
    r.status = std::string(f[15]);
    records.push_back(std::move(r));
  }
  if (header) throw Error(ErrorCode::kParse, "empty csv");
  return records;
}

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "' for writing");
  out << data;
  out.flush();
  if (!out) throw Error(ErrorCode::kIo, "write to '" + path.string() + "' failed");
}

bool has_json_extension(const std::filesystem::path& path) {
  return path.extension() == ".json";
}

}  // namespace

void write_results(const std::vector<SweepRecord>& records,
                   const std::filesystem::path& path, ResultFormat format) {
  if (format == ResultFormat::kCsv) {
    write_file(path, to_csv(records));
  } else {
    write_file(path, records_to_json(records).dump(2) + "\n");
  }
}

void write_results(const std::vector<SweepRecord>& records,
                   const std::filesystem::path& path) {
  write_results(records, path,
                has_json_extension(path) ? ResultFormat::kJson : ResultFormat::kCsv);
}

std::vector<SweepRecord> read_csv(const std::filesystem::path& path) {
  return parse_csv(read_file(path));
}

std::vector<SweepRecord> read_results(const std::filesystem::path& path) {
  if (!has_json_extension(path)) return read_csv(path);
  try {
    return records_from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, path.string() + ": " + e.what());
  }
}

}  // namespace divest
