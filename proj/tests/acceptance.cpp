// Apache License, Version 2.0, refer to LICENSE.txt
//
// Acceptance checks 1-10. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails. Usage: acceptance [--out-dir DIR] [N ...]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "divest/distributions.hpp"
#include "divest/error.hpp"
#include "divest/estimator.hpp"
#include "divest/experiments.hpp"
#include "divest/netclass.hpp"
#include "divest/oracle.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace divest;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size();
  return m % 2 == 1 ? v[m / 2] : 0.5 * (v[m / 2 - 1] + v[m / 2]);
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path g_out = "acceptance_out";

// 1 ----------------------------------------------------------------------

NetClassSpec random_spec(DivergenceKind kind, Activation act, Rng& rng) {
  const std::size_t d = 1 + rng.below(3);
  const std::size_t k = 1 + rng.below(8);
  const double a = rng.uniform(0.5, 3.0);
  NetClassSpec spec = act == Activation::kReLU ? relu_class(d, k, a) : sigmoid_class(d, k, a);
  if (act == Activation::kSigmoid) spec.bounds.a4 = rng.uniform(0.0, 1.0);
  if (kind == DivergenceKind::kH2) spec.transform = Transform::cap(rng.uniform(0.05, 0.95));
  if (kind == DivergenceKind::kTV) spec.transform = Transform::clip();
  if (rng.below(4) == 0) spec.mask_radius = rng.uniform(0.5, 2.0);
  return spec;
}

Outcome gradient_exactness() {
  Rng rng(derive_seed(1, 1));
  double worst = 0.0;
  std::size_t configs = 0;
  std::size_t resampled = 0;
  for (DivergenceKind kind : {DivergenceKind::kKL, DivergenceKind::kKLDV, DivergenceKind::kChi2,
                              DivergenceKind::kH2, DivergenceKind::kTV}) {
    for (int i = 0; i < 200; ++i) {
      const Activation act = i % 2 == 0 ? Activation::kSigmoid : Activation::kReLU;
      while (true) {
        const NetClassSpec spec = random_spec(kind, act, rng);
        const SampleBatch X = testing::random_batch(5 + rng.below(26), spec.d, rng, 1.5);
        const SampleBatch Y = testing::random_batch(5 + rng.below(26), spec.d, rng, 1.5);
        const NetParams p = init_params(spec, rng);
        if (testing::near_nonsmooth(spec, p, X, 1e-4) ||
            testing::near_nonsmooth(spec, p, Y, 1e-4)) {
          ++resampled;
          continue;
        }
        const auto exact = flatten(objective_gradient(kind, spec, p, X, Y));
        const auto fd = testing::fd_gradient(kind, spec, p, X, Y, 1e-6);
        worst = std::max(worst, testing::l2_diff(exact, fd) / std::max(testing::l2(exact), 1e-3));
        ++configs;
        break;
      }
    }
  }
  return {worst <= 1e-5, fmt("%zu configs, max relative error %.2e (%zu resampled near kinks)",
                             configs, worst, resampled)};
}

// 2 ----------------------------------------------------------------------

// Closest point of the l1 ball on a grid of spacing h, refined from a
// coarse pass over the whole ball.
std::vector<double> grid_projection(const std::vector<double>& v, double r) {
  const std::size_t d = v.size();
  std::vector<double> best(d, 0.0);
  double best_dist = 1e300;
  auto scan = [&](const std::vector<double>& center, double half, double h) {
    const int m = static_cast<int>(std::ceil(half / h));
    std::vector<int> idx(d, -m);
    std::vector<double> u(d);
    std::vector<double> local_best = best;
    double local_dist = 1e300;
    while (true) {
      double l1 = 0.0;
      double dist = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        u[c] = center[c] + idx[c] * h;
        l1 += std::abs(u[c]);
        dist += (u[c] - v[c]) * (u[c] - v[c]);
      }
      if (l1 <= r + 1e-12 && dist < local_dist) {
        local_dist = dist;
        local_best = u;
      }
      std::size_t c = 0;
      while (c < d && ++idx[c] > m) idx[c++] = -m;
      if (c == d) break;
    }
    best = local_best;
    best_dist = local_dist;
  };
  const double coarse = d == 2 ? 1e-3 : 1e-2;
  scan(std::vector<double>(d, 0.0), r, coarse);
  if (d > 2) scan(best, 3 * coarse, 1e-3);
  (void)best_dist;
  return best;
}

Outcome projection_correctness() {
  Rng rng(derive_seed(1, 2));
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const std::size_t d = i < 50 ? 2 : 3;
    std::vector<double> v(d);
    for (double& x : v) x = rng.uniform(-2.0, 2.0);
    const double r = rng.uniform(0.5, 1.5);
    const auto got = l1_ball_project(v, r);
    worst = std::max(worst, testing::l2_diff(got, grid_projection(v, r)));
  }
  bool idempotent = true;
  double expansion = 0.0;
  for (int i = 0; i < 500; ++i) {
    const std::size_t d = 1 + rng.below(3);
    const std::size_t k = 1 + rng.below(6);
    const NetClassSpec spec = relu_class(d, k, rng.uniform(0.1, 3.0));
    std::vector<double> u(NetParams::zeros(k, d).size());
    std::vector<double> w(u.size());
    for (std::size_t c = 0; c < u.size(); ++c) {
      u[c] = rng.uniform(-4.0, 4.0);
      w[c] = rng.uniform(-4.0, 4.0);
    }
    const NetParams pu = project(spec, unflatten(k, d, u));
    const NetParams pw = project(spec, unflatten(k, d, w));
    idempotent &= flatten(project(spec, pu)) == flatten(pu);
    expansion = std::max(expansion, std::sqrt(squared_distance(pu, pw)) - testing::l2_diff(u, w));
  }
  const bool pass = worst <= 2e-3 && idempotent && expansion <= 1e-12;
  return {pass, fmt("max grid distance %.2e; idempotent %s; max expansion %.1e", worst,
                    idempotent ? "yes" : "no", expansion)};
}

// 3 ----------------------------------------------------------------------

Outcome oracle_concordance() {
  struct Pair {
    const char* p;
    const char* q;
  };
  const Pair pairs[] = {{"gauss:d=1,mean=0,sigma=1", "gauss:d=1,mean=1,sigma=1"},
                        {"gauss:d=1,mean=0,sigma=1", "gauss:d=1,mean=0.5,sigma=1.2"},
                        {"gauss:d=1,mean=0.3,sigma=0.8", "gauss:d=1,mean=-0.2,sigma=1"},
                        {"tgauss:d=1,mean=0.35,sigma=0.15", "tgauss:d=1,mean=0.6,sigma=0.2"}};
  bool pass = true;
  double worst_z = 0.0;
  double worst_cf = 0.0;
  std::size_t checks = 0;
  for (std::size_t i = 0; i < std::size(pairs); ++i) {
    const Distribution p = parse_distribution(pairs[i].p);
    const Distribution q = parse_distribution(pairs[i].q);
    for (DivergenceKind kind : kHFormKinds) {
      const double quad = divergence_quadrature(kind, p, q).value;
      Rng rng(derive_seed(derive_seed(3, i), static_cast<std::uint64_t>(kind)));
      const OracleResult mc = divergence_mc_plugin(kind, p, q, 100000, rng);
      const double z = std::abs(quad - mc.value) / mc.std_error;
      worst_z = std::max(worst_z, z);
      pass &= z <= 3.0;
      ++checks;
      if (kind == DivergenceKind::kKL && p.as<Gaussian>()) {
        const double cf = divergence_closed_form(kind, p, q).value;
        worst_cf = std::max(worst_cf, std::abs(quad - cf));
        pass &= std::abs(quad - cf) <= 1e-6;
      }
    }
  }
  return {pass, fmt("%zu quadrature/mc pairs, max |diff|/stderr %.2f; max |quad-closed| %.1e",
                    checks, worst_z, worst_cf)};
}

// 4, 5, 7 sweeps ------------------------------------------------------------

SweepConfig zero_divergence_config() {
  SweepConfig cfg;
  cfg.kinds = {DivergenceKind::kKL, DivergenceKind::kChi2, DivergenceKind::kH2,
               DivergenceKind::kTV};
  cfg.pairs = {{"tg_same", "tgauss:d=1,mean=0.4,sigma=0.2", "tgauss:d=1,mean=0.4,sigma=0.2"}};
  cfg.n_grid = {10000};
  cfg.k_rule = {KRuleKind::kFixed, 32, 512};
  cfg.seeds = 10;
  cfg.root_seed = 4;
  cfg.train.restarts = 5;
  cfg.train.steps = 200;
  return cfg;
}

SweepConfig recovery_config(bool mine) {
  SweepConfig cfg;
  if (mine) {
    cfg.kinds = {DivergenceKind::kKLDV};
    cfg.pairs = {{"mine_0.5", "minejoint:rho=0.5", "mineprod:rho=0.5"}};
  } else {
    cfg.kinds = {DivergenceKind::kKL};
    cfg.pairs = {{"gauss_shift", "gauss:d=1,mean=0,sigma=1", "gauss:d=1,mean=1,sigma=1"}};
  }
  cfg.n_grid = {20000};
  cfg.k_rule = {KRuleKind::kFixed, 128, 512};
  cfg.seeds = 10;
  cfg.root_seed = 5;
  cfg.schedule.regime = Regime::kKnownM;
  cfg.schedule.M = 2.0;
  cfg.schedule.support = SupportKind::kBall;
  cfg.train.restarts = 1;
  cfg.train.steps = 300;
  return cfg;
}

SweepConfig rate_config() {
  SweepConfig cfg;
  cfg.kinds = {DivergenceKind::kKL};
  cfg.pairs = {{"tg_rate", "tgauss:d=1,mean=0.35,sigma=0.15", "tgauss:d=1,mean=0.6,sigma=0.2"}};
  cfg.n_grid = {256, 512, 1024, 2048, 4096, 8192};
  cfg.k_rule = {KRuleKind::kPaperSchedule, 0, 512};
  cfg.seeds = 20;
  cfg.root_seed = 7;
  cfg.schedule.regime = Regime::kKnownM;
  cfg.schedule.M = 20.0;
  cfg.train.restarts = 1;
  cfg.train.steps = 500;
  return cfg;
}

std::vector<SweepRecord> run_to(const SweepConfig& cfg, const std::string& name) {
  const auto records = run_sweep(cfg);
  write_results(records, g_out / name);
  return records;
}

Outcome zero_divergence() {
  const auto records = run_to(zero_divergence_config(), "c4.csv");
  std::map<DivergenceKind, double> worst;
  bool pass = records.size() == 40;
  for (const auto& r : records) {
    pass &= r.status == "ok" && r.oracle == 0.0;
    worst[r.kind] = std::max(worst[r.kind], std::abs(r.estimate));
    pass &= std::abs(r.estimate) <= (r.kind == DivergenceKind::kTV ? 0.10 : 0.05);
  }
  return {pass, fmt("max |estimate|: kl %.4f chi2 %.4f h2 %.4f tv %.4f",
                    worst[DivergenceKind::kKL], worst[DivergenceKind::kChi2],
                    worst[DivergenceKind::kH2], worst[DivergenceKind::kTV])};
}

std::vector<double> estimates(const std::vector<SweepRecord>& records) {
  std::vector<double> v;
  for (const auto& r : records) v.push_back(r.estimate);
  return v;
}

std::vector<SweepRecord> g_c5_kl;
std::vector<SweepRecord> g_c5_mine;

Outcome closed_form_recovery() {
  g_c5_kl = run_to(recovery_config(false), "c5_kl.csv");
  g_c5_mine = run_to(recovery_config(true), "c5_mine.csv");
  const double kl = median(estimates(g_c5_kl));
  const double mi = median(estimates(g_c5_mine));
  const double target = gaussian_mutual_information(0.5);
  bool pass = g_c5_kl.size() == 10 && g_c5_mine.size() == 10;
  for (const auto& r : g_c5_kl) pass &= r.status == "ok";
  for (const auto& r : g_c5_mine) pass &= r.status == "ok";
  pass &= kl >= 0.40 && kl <= 0.55 && std::abs(mi - target) <= 0.05;
  return {pass, fmt("median KL %.4f in [0.40, 0.55]; median MI %.4f vs %.6f +- 0.05", kl, mi,
                    target)};
}

Outcome variational_ceiling() {
  if (g_c5_kl.empty()) {
    g_c5_kl = run_sweep(recovery_config(false));
    g_c5_mine = run_sweep(recovery_config(true));
  }
  Rng rng(derive_seed(6, 1));
  const OracleResult kl_se = divergence_mc_plugin(
      DivergenceKind::kKL, gaussian({0.0}, 1.0), gaussian({1.0}, 1.0), 20000, rng);
  auto [joint, prod] = mine_pair(0.5);
  const OracleResult mi_se = divergence_mc_plugin(DivergenceKind::kKL, joint, prod, 20000, rng,
                                                  true);
  bool pass = true;
  double margin = 1e300;
  for (const auto& r : g_c5_kl) {
    const double bound = r.oracle + 3 * kl_se.std_error;
    pass &= r.estimate <= bound;
    margin = std::min(margin, bound - r.estimate);
  }
  for (const auto& r : g_c5_mine) {
    const double bound = r.oracle + 3 * mi_se.std_error;
    pass &= r.estimate <= bound;
    margin = std::min(margin, bound - r.estimate);
  }
  return {pass, fmt("stderr kl %.4f mi %.4f; smallest margin below bound %.4f", kl_se.std_error,
                    mi_se.std_error, margin)};
}

Outcome rate_trend() {
  const auto records = run_to(rate_config(), "c7.csv");
  const RateFit fit = fit_rate(records, RateAxis::kN);
  std::string table;
  for (const auto& pt : fit.table) table += fmt(" %g:%.4f", pt.axis, pt.mean_abs_error);
  const bool pass = fit.slope >= -0.75 && fit.slope <= -0.25 && fit.r2 >= 0.8;
  return {pass, fmt("slope %.3f r2 %.3f; mean abs error by n:", fit.slope, fit.r2) + table};
}

// 8 ----------------------------------------------------------------------

Outcome dv_dominance() {
  Rng rng(derive_seed(1, 8));
  bool dominance = true;
  double worst_shift = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t d = 1 + rng.below(3);
    const std::size_t k = 1 + rng.below(16);
    const double a = rng.uniform(0.2, 4.0);
    const NetClassSpec spec =
        i % 2 == 0 ? relu_class(d, k, a) : sigmoid_class(d, k, a);
    const SampleBatch X = testing::random_batch(10 + rng.below(90), d, rng, 2.0);
    const SampleBatch Y = testing::random_batch(10 + rng.below(90), d, rng, 2.0);
    NetParams p = init_params(spec, rng);
    const double dv = dv_objective(spec, p, X, Y);
    dominance &= dv >= empirical_objective(DivergenceKind::kKL, spec, p, X, Y);
    p.b0 = rng.uniform(-spec.bounds.a3, spec.bounds.a3);
    worst_shift = std::max(worst_shift, std::abs(dv_objective(spec, p, X, Y) - dv));
  }
  return {dominance && worst_shift <= 1e-12,
          fmt("dominance %s on 1000 draws; max shift change %.1e", dominance ? "held" : "failed",
              worst_shift)};
}

// 9 ----------------------------------------------------------------------

Outcome approximation_trend() {
  const std::vector<std::size_t> ks{8, 16, 32, 64, 128, 256};
  const ApproxReport report =
      approx_check(truncated_gaussian({0.35}, 0.15), truncated_gaussian({0.6}, 0.2), ks, {});
  bool monotone = true;
  std::string table;
  for (std::size_t i = 0; i < report.summary.size(); ++i) {
    table += fmt(" %zu:%.4f", report.summary[i].k, report.summary[i].median_sup_error);
    if (i > 0) {
      monotone &= report.summary[i].median_sup_error <= report.summary[i - 1].median_sup_error;
    }
  }
  const double ratio =
      report.summary.back().median_sup_error / report.summary.front().median_sup_error;
  return {monotone && ratio <= 0.5,
          fmt("nonincreasing %s, final/initial %.3f; median sup error by k:",
              monotone ? "yes" : "no", ratio) +
              table};
}

// 10 ---------------------------------------------------------------------

Outcome determinism() {
  struct Run {
    std::string name;
    SweepConfig cfg;
  };
  std::vector<Run> runs{{"c4.csv", zero_divergence_config()},
                        {"c5_kl.csv", recovery_config(false)},
                        {"c5_mine.csv", recovery_config(true)},
                        {"c7.csv", rate_config()}};
  bool pass = true;
  std::string detail;
  for (auto& run : runs) {
    if (!fs::exists(g_out / run.name)) write_results(run_sweep(run.cfg), g_out / run.name);
    // A different worker count on the rerun also checks scheduling independence.
    run.cfg.threads = 2;
    const std::string again = run.name + ".rerun";
    write_results(run_sweep(run.cfg), g_out / again, ResultFormat::kCsv);
    const bool same = read_file(g_out / run.name) == read_file(g_out / again);
    pass &= same;
    detail += " " + run.name + (same ? " identical" : " DIFFERS");
  }
  return {pass, "reruns:" + detail};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--out-dir" && i + 1 < argc) {
      g_out = argv[++i];
    } else {
      selected.insert(std::stoi(arg));
    }
  }
  fs::create_directories(g_out);

  const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
      {1, gradient_exactness},  {2, projection_correctness}, {3, oracle_concordance},
      {4, zero_divergence},     {5, closed_form_recovery},   {6, variational_ceiling},
      {7, rate_trend},          {8, dv_dominance},           {9, approximation_trend},
      {10, determinism}};

  int failures = 0;
  for (const auto& [id, check] : criteria) {
    if (!selected.empty() && !selected.contains(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failures += o.pass ? 0 : 1;
    std::printf("criterion %2d: %s (%.1f s) %s\n", id, o.pass ? "PASS" : "FAIL", secs,
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
