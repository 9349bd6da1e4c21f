// Apache License, Version 2.0, refer to LICENSE.txt

#include "cli.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "divest/distributions.hpp"
#include "divest/error.hpp"
#include "divest/estimator.hpp"
#include "divest/experiments.hpp"
#include "divest/oracle.hpp"
#include "divest/serialize.hpp"

namespace divest::cli {

namespace {

// Raised for bad flag values found after CLI11 parsing; maps to exit 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Runs `f`, turning library errors into usage errors.
template <class F>
auto resolve(const std::string& flag, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw UsageError(flag + ": " + e.what());
  }
}

enum class OutFormat { kJson, kText };

struct TrainFlags {
  std::size_t restarts = 5;
  std::size_t steps = TrainOptions{}.steps;
  double lr = TrainOptions{}.step_size;
  std::string optimizer = "adam";
  double momentum = TrainOptions{}.momentum;
  std::size_t batch = 0;
  double hidden_rate = TrainOptions{}.hidden_rate;
  double init_scale = TrainOptions{}.init_scale;
  std::string init{to_string(TrainOptions{}.init)};

  void attach(CLI::App* app) {
    app->add_option("--restarts", restarts, "independent restarts")->capture_default_str();
    app->add_option("--steps", steps, "ascent steps per restart")->capture_default_str();
    app->add_option("--lr", lr, "base step size")->capture_default_str();
    app->add_option("--optimizer", optimizer, "adam or nesterov")->capture_default_str();
    app->add_option("--momentum", momentum)->capture_default_str();
    app->add_option("--batch", batch, "mini-batch size, 0 for full batch")
        ->capture_default_str();
    app->add_option("--hidden-rate", hidden_rate)->capture_default_str();
    app->add_option("--init-scale", init_scale)->capture_default_str();
    app->add_option("--init", init, "uniform or data")->capture_default_str();
  }

  TrainOptions options(std::uint64_t seed, bool trace) const {
    TrainOptions o;
    o.restarts = restarts;
    o.steps = steps;
    o.step_size = lr;
    o.optimizer = resolve("--optimizer", [&] { return parse_optimizer(optimizer); });
    o.momentum = momentum;
    o.batch = batch;
    o.hidden_rate = hidden_rate;
    o.init_scale = init_scale;
    o.init = resolve("--init", [&] { return parse_init(init); });
    o.seed = seed;
    o.record_trace = trace;
    resolve("train options", [&] { o.validate(); });
    return o;
  }
};

struct ClassFlags {
  std::optional<std::size_t> k;
  std::size_t k_cap = 512;
  std::string schedule = "unknown-m";
  std::optional<double> m;
  std::string support = "auto";
  std::optional<double> radius;
  std::string activation = "relu";
  double smoothness = 1.0;
  double c0 = 1.0;
  double c1 = 1.0;

  void attach(CLI::App* app, const std::string& default_schedule) {
    schedule = default_schedule;
    app->add_option("--k", k, "width; default min(n, k-cap) or the consistency width");
    app->add_option("--k-cap", k_cap, "cap on the automatic width")->capture_default_str();
    app->add_option("--schedule", schedule, "known-m, unknown-m or consistency")
        ->capture_default_str();
    app->add_option("--m", m, "moment bound M for known-m");
    app->add_option("--support", support, "auto, cube or ball")->capture_default_str();
    app->add_option("--radius", radius, "mask radius for ball support");
    app->add_option("--activation", activation, "relu or sigmoid")->capture_default_str();
    app->add_option("--smoothness", smoothness, "TV smoothness s")->capture_default_str();
    app->add_option("--c0", c0, "TV bound prefactor")->capture_default_str();
    app->add_option("--c1", c1, "ball radius prefactor")->capture_default_str();
  }

  NetClassSpec build(DivergenceKind kind, std::size_t d, std::size_t n, bool compact) const {
    ScheduleRequest req;
    req.kind = kind;
    req.d = d;
    req.regime = resolve("--schedule", [&] { return parse_regime(schedule); });
    req.k = k ? *k : width_for({KRuleKind::kPaperSchedule, 0, k_cap}, n, req.regime);
    req.M = m;
    if (support == "auto") {
      req.support = compact ? SupportKind::kCompactUnitCube : SupportKind::kBall;
    } else if (support == "cube") {
      req.support = SupportKind::kCompactUnitCube;
    } else if (support == "ball") {
      req.support = SupportKind::kBall;
    } else {
      throw UsageError("--support: expected auto, cube or ball, got '" + support + "'");
    }
    req.radius = radius;
    req.activation = resolve("--activation", [&] { return parse_activation(activation); });
    req.smoothness = smoothness;
    req.c0 = c0;
    req.c1 = c1;
    return resolve("class schedule", [&] { return class_schedule(req); });
  }
};

OutFormat parse_out(const std::string& s) {
  if (s == "json") return OutFormat::kJson;
  if (s == "text") return OutFormat::kText;
  throw UsageError("--out: expected json or text, got '" + s + "'");
}

Distribution parse_dist(const std::string& flag, const std::string& text) {
  return resolve(flag, [&] { return parse_distribution(text); });
}

void log_config(std::ostream& err, const std::string& command, const json& cfg) {
  err << "divest " << command << " config: " << cfg.dump() << "\n";
}

std::string fmt(double v) { return format_double(v); }

// estimate ---------------------------------------------------------------

struct EstimateCmd {
  std::string divergence;
  std::string dist_p;
  std::string dist_q;
  std::size_t n = 10000;
  std::optional<std::size_t> n_q;
  bool dv = false;
  std::uint64_t seed = 0;
  std::string out = "json";
  bool trace = false;
  std::string save_params;
  ClassFlags cls;
  TrainFlags train;

  void attach(CLI::App* app) {
    app->add_option("--divergence", divergence, "kl, kl-dv, chi2, h2 or tv")->required();
    app->add_option("--dist-p", dist_p, "law of the X sample")->required();
    app->add_option("--dist-q", dist_q, "law of the Y sample")->required();
    app->add_option("--n", n, "samples from p")->capture_default_str();
    app->add_option("--n-q", n_q, "samples from q (default n)");
    app->add_flag("--dv", dv, "use the DV objective (kl only)");
    app->add_option("--seed", seed)->capture_default_str();
    app->add_option("--out", out, "json or text")->capture_default_str();
    app->add_flag("--trace", trace, "include the objective trace");
    app->add_option("--save-params", save_params, "write fitted params as JSON");
    cls.attach(app, "unknown-m");
    train.attach(app);
  }

  int run(std::ostream& os, std::ostream& err) const {
    const OutFormat format = parse_out(out);
    DivergenceKind kind = resolve("--divergence", [&] { return parse_divergence(divergence); });
    if (dv) {
      if (kind != DivergenceKind::kKL && kind != DivergenceKind::kKLDV) {
        throw UsageError("--dv: only valid with --divergence kl");
      }
      kind = DivergenceKind::kKLDV;
    }
    const Distribution p = parse_dist("--dist-p", dist_p);
    const Distribution q = parse_dist("--dist-q", dist_q);
    if (p.dim() != q.dim()) throw UsageError("--dist-q: dimension differs from --dist-p");
    const std::size_t nq = n_q.value_or(n);
    if (n == 0 || nq == 0) throw UsageError("--n: sample sizes must be >= 1");
    const NetClassSpec spec = cls.build(kind, p.dim(), std::min(n, nq),
                                        p.compact() && q.compact());
    const TrainOptions opts = train.options(derive_seed(seed, 3), trace);

    log_config(err, "estimate",
               {{"divergence", std::string(to_string(kind))},
                {"dist_p", p.spec()},
                {"dist_q", q.spec()},
                {"n", n},
                {"n_q", nq},
                {"seed", seed},
                {"class", to_json(spec)},
                {"train", to_json(opts)},
                {"out", out}});

    const SampleBatch X = sample(p, n, derive_seed(seed, 1));
    const SampleBatch Y = sample(q, nq, derive_seed(seed, 2));
    const EstimateResult res = estimate(kind, spec, X, Y, opts);
    if (!save_params.empty()) {
      std::ofstream f(save_params);
      if (!f) throw Error(ErrorCode::kIo, "cannot write '" + save_params + "'");
      f << params_to_json(res.params, spec.activation).dump(2) << "\n";
    }
    if (format == OutFormat::kJson) {
      json j = result_to_json(res, trace);
      j["dist_p"] = p.spec();
      j["dist_q"] = q.spec();
      j["seed"] = seed;
      os << j.dump(2) << "\n";
    } else {
      os << "divergence " << to_string(kind) << "\n"
         << "estimate " << fmt(res.value) << "\n"
         << "k " << spec.k << "\n"
         << "m_k " << fmt(schedule_m(spec)) << "\n"
         << "restarts";
      for (double v : res.per_restart) os << " " << fmt(v);
      os << "\n";
    }
    return 0;
  }
};

// oracle -----------------------------------------------------------------

struct OracleCmd {
  std::string divergence;
  std::string dist_p;
  std::string dist_q;
  std::string method = "quadrature";
  std::size_t nodes = kDefaultQuadratureNodes;
  std::size_t n = 100000;
  std::uint64_t seed = 0;
  bool dv = false;
  std::string out = "json";

  void attach(CLI::App* app) {
    app->add_option("--divergence", divergence)->required();
    app->add_option("--dist-p", dist_p)->required();
    app->add_option("--dist-q", dist_q)->required();
    app->add_option("--method", method, "closed-form, quadrature or mc-plugin")
        ->capture_default_str();
    app->add_option("--nodes", nodes, "quadrature nodes per axis")->capture_default_str();
    app->add_option("--n", n, "mc-plugin samples per law")->capture_default_str();
    app->add_option("--seed", seed)->capture_default_str();
    app->add_flag("--dv", dv, "mc-plugin of the DV form (kl only)");
    app->add_option("--out", out, "json or text")->capture_default_str();
  }

  int run(std::ostream& os, std::ostream& err) const {
    const OutFormat format = parse_out(out);
    const DivergenceKind kind =
        resolve("--divergence", [&] { return parse_divergence(divergence); });
    const OracleMethod m = resolve("--method", [&] { return parse_oracle_method(method); });
    const Distribution p = parse_dist("--dist-p", dist_p);
    const Distribution q = parse_dist("--dist-q", dist_q);
    log_config(err, "oracle",
               {{"divergence", std::string(to_string(kind))},
                {"dist_p", p.spec()},
                {"dist_q", q.spec()},
                {"method", std::string(to_string(m))},
                {"nodes", nodes},
                {"n", n},
                {"seed", seed},
                {"dv", dv},
                {"out", out}});
    OracleResult r;
    switch (m) {
      case OracleMethod::kClosedForm: r = divergence_closed_form(kind, p, q); break;
      case OracleMethod::kQuadrature: r = divergence_quadrature(kind, p, q, nodes); break;
      case OracleMethod::kMcPlugin: {
        Rng rng(seed);
        const DivergenceKind target = kind == DivergenceKind::kKLDV ? DivergenceKind::kKL : kind;
        r = divergence_mc_plugin(target, p, q, n, rng, dv || kind == DivergenceKind::kKLDV);
        break;
      }
    }
    if (format == OutFormat::kJson) {
      os << oracle_to_json(kind, r).dump(2) << "\n";
    } else {
      os << to_string(kind) << " " << to_string(r.method) << " " << fmt(r.value) << " +- "
         << fmt(r.std_error) << "\n";
    }
    return 0;
  }
};

// sweep ------------------------------------------------------------------

json read_json_file(const std::string& path, const std::string& flag) {
  std::ifstream in(path);
  if (!in) throw UsageError(flag + ": cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError(flag + ": " + path + ": " + e.what());
  }
}

struct SweepCmd {
  std::string config;
  std::string out_path;
  std::string format;
  std::size_t threads = 0;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "sweep config JSON")->required();
    app->add_option("--out", out_path, "result file; stdout CSV when absent");
    app->add_option("--format", format, "csv or json (default: by extension)");
    app->add_option("--threads", threads, "worker count (default DIVEST_THREADS)");
  }

  int run(std::ostream& os, std::ostream& err) const {
    const json j = read_json_file(config, "--config");
    SweepConfig cfg = resolve("--config", [&] {
      try {
        return sweep_config_from_json(j);
      } catch (const json::exception& e) {
        throw Error(ErrorCode::kParse, e.what());
      }
    });
    if (!out_path.empty()) cfg.output = out_path;
    if (threads > 0) cfg.threads = threads;
    std::optional<ResultFormat> fmt_choice;
    if (format == "csv") {
      fmt_choice = ResultFormat::kCsv;
    } else if (format == "json") {
      fmt_choice = ResultFormat::kJson;
    } else if (!format.empty()) {
      throw UsageError("--format: expected csv or json, got '" + format + "'");
    }
    json resolved = to_json(cfg);
    resolved["threads_resolved"] = resolve_threads(cfg.threads);
    log_config(err, "sweep", resolved);

    const auto records = run_sweep(cfg);
    std::size_t failed = 0;
    for (const auto& r : records) failed += r.status != "ok";
    if (cfg.output.empty()) {
      if (fmt_choice == ResultFormat::kJson) {
        os << records_to_json(records).dump(2) << "\n";
      } else {
        os << to_csv(records);
      }
    } else {
      if (fmt_choice) {
        write_results(records, cfg.output, *fmt_choice);
      } else {
        write_results(records, cfg.output);
      }
      os << json{{"records", records.size()}, {"failed", failed}, {"output", cfg.output}}.dump(2)
         << "\n";
    }
    if (failed > 0) err << "divest sweep: " << failed << " cell(s) failed\n";
    return 0;
  }
};

// rate-fit ---------------------------------------------------------------

struct RateFitCmd {
  std::string in;
  std::string axis = "n";
  std::string kind;
  std::string pair;
  std::string out = "json";

  void attach(CLI::App* app) {
    app->add_option("--in", in, "sweep results (csv or json)")->required();
    app->add_option("--axis", axis, "n or k")->capture_default_str();
    app->add_option("--kind", kind, "keep only this divergence");
    app->add_option("--pair", pair, "keep only this pair id");
    app->add_option("--out", out, "json or text")->capture_default_str();
  }

  int run(std::ostream& os, std::ostream& err) const {
    const OutFormat format = parse_out(out);
    const RateAxis ax = resolve("--axis", [&] { return parse_rate_axis(axis); });
    std::optional<DivergenceKind> only_kind;
    if (!kind.empty()) only_kind = resolve("--kind", [&] { return parse_divergence(kind); });
    log_config(err, "rate-fit",
               {{"in", in}, {"axis", axis}, {"kind", kind}, {"pair", pair}, {"out", out}});
    auto records = resolve("--in", [&] { return read_results(in); });
    std::erase_if(records, [&](const SweepRecord& r) {
      return (only_kind && r.kind != *only_kind) || (!pair.empty() && r.pair != pair);
    });
    const RateFit fit = fit_rate(records, ax);
    for (const auto& w : fit.warnings) err << "divest rate-fit: warning: " << w << "\n";
    if (format == OutFormat::kJson) {
      os << to_json(fit).dump(2) << "\n";
    } else {
      os << "slope " << fmt(fit.slope) << "\nintercept " << fmt(fit.intercept) << "\nr2 "
         << fmt(fit.r2) << "\npoints " << fit.points << "\n";
    }
    return 0;
  }
};

// approx-check -----------------------------------------------------------

struct ApproxCmd {
  std::string dist_p;
  std::string dist_q;
  std::vector<std::size_t> k_grid{8, 16, 32, 64, 128, 256};
  double a = ApproxOptions{}.a;
  std::size_t grid = ApproxOptions{}.grid;
  std::size_t seeds = ApproxOptions{}.seeds;
  std::uint64_t seed = 0;
  std::size_t hidden_steps = 0;
  double lr = TrainOptions{}.step_size;
  std::string out = "json";

  void attach(CLI::App* app) {
    app->add_option("--dist-p", dist_p)->required();
    app->add_option("--dist-q", dist_q)->required();
    app->add_option("--k-grid", k_grid, "widths")->capture_default_str()->delimiter(',');
    app->add_option("--a", a, "class size of G_k^R(a)")->capture_default_str();
    app->add_option("--grid", grid, "grid points")->capture_default_str();
    app->add_option("--seeds", seeds)->capture_default_str();
    app->add_option("--seed", seed)->capture_default_str();
    app->add_option("--hidden-steps", hidden_steps,
                    "train hidden units for this many steps first (0: keep spread kinks)")
        ->capture_default_str();
    app->add_option("--lr", lr, "step size for hidden training")->capture_default_str();
    app->add_option("--out", out, "json or text")->capture_default_str();
  }

  int run(std::ostream& os, std::ostream& err) const {
    const OutFormat format = parse_out(out);
    const Distribution p = parse_dist("--dist-p", dist_p);
    const Distribution q = parse_dist("--dist-q", dist_q);
    ApproxOptions opts;
    opts.a = a;
    opts.grid = grid;
    opts.seeds = seeds;
    opts.root_seed = seed;
    if (hidden_steps > 0) {
      TrainOptions t;
      t.steps = hidden_steps;
      t.step_size = lr;
      t.restarts = 1;
      t.init_scale = 0.0;
      resolve("--hidden-steps", [&] { t.validate(); });
      opts.hidden_training = t;
    }
    json cfg = {{"dist_p", p.spec()}, {"dist_q", q.spec()}, {"k_grid", k_grid},
                {"a", a}, {"grid", grid}, {"seeds", seeds}, {"seed", seed},
                {"hidden_steps", hidden_steps}, {"lr", lr}, {"out", out}};
    log_config(err, "approx-check", cfg);
    const ApproxReport report = approx_check(p, q, k_grid, opts);
    if (format == OutFormat::kJson) {
      os << to_json(report).dump(2) << "\n";
    } else {
      for (const auto& s : report.summary) {
        os << "k " << s.k << " sup " << fmt(s.median_sup_error) << " l2 "
           << fmt(s.median_l2_error) << "\n";
      }
    }
    return 0;
  }
};

// mine -------------------------------------------------------------------

struct MineCmd {
  double rho = 0.0;
  std::size_t n = 20000;
  std::uint64_t seed = 0;
  std::string out = "json";
  bool trace = false;
  ClassFlags cls;
  TrainFlags train;

  void attach(CLI::App* app) {
    app->add_option("--rho", rho, "correlation, |rho| < 1")->required();
    app->add_option("--n", n, "samples per law")->capture_default_str();
    app->add_option("--seed", seed)->capture_default_str();
    app->add_option("--out", out, "json or text")->capture_default_str();
    app->add_flag("--trace", trace, "include the objective trace");
    cls.attach(app, "known-m");
    cls.m = 20.0;
    train.attach(app);
  }

  int run(std::ostream& os, std::ostream& err) const {
    const OutFormat format = parse_out(out);
    const auto pair = resolve("--rho", [&] { return mine_pair(rho); });
    if (n == 0) throw UsageError("--n: must be >= 1");
    const NetClassSpec spec = cls.build(DivergenceKind::kKLDV, 2, n, false);
    const TrainOptions opts = train.options(derive_seed(seed, 3), trace);
    log_config(err, "mine",
               {{"rho", rho},
                {"n", n},
                {"seed", seed},
                {"class", to_json(spec)},
                {"train", to_json(opts)},
                {"out", out}});
    const SampleBatch X = sample(pair.first, n, derive_seed(seed, 1));
    const SampleBatch Y = sample(pair.second, n, derive_seed(seed, 2));
    const EstimateResult res = estimate(DivergenceKind::kKLDV, spec, X, Y, opts);
    const double reference = gaussian_mutual_information(rho);
    if (format == OutFormat::kJson) {
      os << json{{"rho", rho},
                 {"estimate", res.value},
                 {"reference", reference},
                 {"reference_method", "closed form -0.5 log(1 - rho^2), cross-check only"},
                 {"result", result_to_json(res, trace)}}
                .dump(2)
         << "\n";
    } else {
      os << "estimate " << fmt(res.value) << "\nreference " << fmt(reference) << "\n";
    }
    return 0;
  }
};

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Neural estimators of f-divergences"};
  app.name("divest");
  app.require_subcommand(1);

  EstimateCmd estimate_cmd;
  OracleCmd oracle_cmd;
  SweepCmd sweep_cmd;
  RateFitCmd rate_cmd;
  ApproxCmd approx_cmd;
  MineCmd mine_cmd;
  auto* est = app.add_subcommand("estimate", "train the neural estimator on two samples");
  estimate_cmd.attach(est);
  auto* orc = app.add_subcommand("oracle", "ground-truth divergence");
  oracle_cmd.attach(orc);
  auto* swp = app.add_subcommand("sweep", "grid of estimates against oracles");
  sweep_cmd.attach(swp);
  auto* rfit = app.add_subcommand("rate-fit", "log-log error slope of sweep results");
  rate_cmd.attach(rfit);
  auto* apx = app.add_subcommand("approx-check", "least-squares fit of the optimal KL potential");
  approx_cmd.attach(apx);
  auto* mine = app.add_subcommand("mine", "DV estimate of Gaussian mutual information");
  mine_cmd.attach(mine);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "divest: " << e.what() << "\n";
    return 2;
  }
  // Subcommand help is raised during parse as CallForHelp on the subcommand.

  try {
    if (est->parsed()) return estimate_cmd.run(out, err);
    if (orc->parsed()) return oracle_cmd.run(out, err);
    if (swp->parsed()) return sweep_cmd.run(out, err);
    if (rfit->parsed()) return rate_cmd.run(out, err);
    if (apx->parsed()) return approx_cmd.run(out, err);
    if (mine->parsed()) return mine_cmd.run(out, err);
  } catch (const UsageError& e) {
    err << "divest: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << "divest: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "divest: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace divest::cli
