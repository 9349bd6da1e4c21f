// Apache License, Version 2.0, refer to LICENSE.txt

#include "divest/serialize.hpp"

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <limits>
#include <string>
#include <string_view>

#include "divest/error.hpp"

namespace divest {

namespace {

constexpr std::string_view kParamsFormat = "divest.netparams";
constexpr int kParamsVersion = 1;

[[noreturn]] void fail(const std::string& what) {
  throw Error(ErrorCode::kParse, what);
}

void require_object(const json& j, std::string_view where) {
  if (!j.is_object()) fail(std::string(where) + " must be a JSON object");
}

void reject_unknown(const json& j, std::initializer_list<std::string_view> keys,
                    std::string_view where) {
  for (const auto& [key, value] : j.items()) {
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      fail("unknown key '" + key + "' in " + std::string(where));
    }
  }
}

const json& field(const json& j, const char* key, std::string_view where) {
  if (!j.contains(key)) fail("missing key '" + std::string(key) + "' in " + std::string(where));
  return j.at(key);
}

double read_double(const json& v, std::string_view what) {
  if (v.is_null()) return std::numeric_limits<double>::infinity();
  if (!v.is_number()) fail(std::string(what) + " must be a number");
  return v.get<double>();
}

std::size_t read_count(const json& v, std::string_view what) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
    fail(std::string(what) + " must be a nonnegative integer");
  }
  return v.get<std::size_t>();
}

std::string read_string(const json& v, std::string_view what) {
  if (!v.is_string()) fail(std::string(what) + " must be a string");
  return v.get<std::string>();
}

std::vector<double> read_vector(const json& v, std::string_view what) {
  if (!v.is_array()) fail(std::string(what) + " must be an array");
  std::vector<double> out;
  for (const auto& x : v) out.push_back(read_double(x, what));
  return out;
}

}  // namespace

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json to_json(const NetClassSpec& spec) {
  json t = {{"kind", spec.transform.kind == TransformKind::kIdentity ? "identity"
                     : spec.transform.kind == TransformKind::kCap   ? "cap"
                                                                     : "clip"}};
  if (spec.transform.kind == TransformKind::kCap) t["t"] = spec.transform.t;
  return {{"d", spec.d},
          {"k", spec.k},
          {"activation", std::string(to_string(spec.activation))},
          {"bounds",
           {{"a1", spec.bounds.a1},
            {"a2", spec.bounds.a2},
            {"a3", spec.bounds.a3},
            {"a4", spec.bounds.a4}}},
          {"transform", t},
          {"mask_radius", number_or_null(spec.mask_radius)}};
}

NetClassSpec class_spec_from_json(const json& j) {
  constexpr std::string_view where = "class spec";
  require_object(j, where);
  reject_unknown(j, {"d", "k", "activation", "bounds", "transform", "mask_radius"}, where);
  NetClassSpec spec;
  spec.d = read_count(field(j, "d", where), "d");
  spec.k = read_count(field(j, "k", where), "k");
  spec.activation = parse_activation(read_string(field(j, "activation", where), "activation"));
  const json& b = field(j, "bounds", where);
  require_object(b, "bounds");
  reject_unknown(b, {"a1", "a2", "a3", "a4"}, "bounds");
  spec.bounds = {read_double(field(b, "a1", "bounds"), "a1"),
                 read_double(field(b, "a2", "bounds"), "a2"),
                 read_double(field(b, "a3", "bounds"), "a3"),
                 read_double(field(b, "a4", "bounds"), "a4")};
  if (j.contains("transform")) {
    const json& t = j.at("transform");
    require_object(t, "transform");
    reject_unknown(t, {"kind", "t"}, "transform");
    const std::string kind = read_string(field(t, "kind", "transform"), "transform kind");
    if (kind == "identity") {
      spec.transform = Transform::identity();
    } else if (kind == "cap") {
      spec.transform = Transform::cap(read_double(field(t, "t", "transform"), "t"));
    } else if (kind == "clip") {
      spec.transform = Transform::clip();
    } else {
      fail("unknown transform '" + kind + "'");
    }
  }
  if (j.contains("mask_radius")) spec.mask_radius = read_double(j.at("mask_radius"), "mask_radius");
  spec.validate();
  return spec;
}

json params_to_json(const NetParams& params, Activation activation) {
  json rows = json::array();
  for (std::size_t i = 0; i < params.k; ++i) {
    const auto h = params.hidden(i);
    rows.push_back(std::vector<double>(h.begin(), h.end()));
  }
  return {{"format", kParamsFormat},
          {"version", kParamsVersion},
          {"k", params.k},
          {"d", params.d},
          {"activation", std::string(to_string(activation))},
          {"beta", params.beta},
          {"w", rows},
          {"b", params.b},
          {"w0", params.w0},
          {"b0", params.b0}};
}

NetParams params_from_json(const json& j) {
  constexpr std::string_view where = "net params";
  require_object(j, where);
  reject_unknown(j, {"format", "version", "k", "d", "activation", "beta", "w", "b", "w0", "b0"},
                 where);
  if (read_string(field(j, "format", where), "format") != kParamsFormat) {
    fail("net params: unexpected format tag");
  }
  if (read_count(field(j, "version", where), "version") != kParamsVersion) {
    fail("net params: unsupported version");
  }
  const std::size_t k = read_count(field(j, "k", where), "k");
  const std::size_t d = read_count(field(j, "d", where), "d");
  parse_activation(read_string(field(j, "activation", where), "activation"));
  NetParams p = NetParams::zeros(k, d);
  p.beta = read_vector(field(j, "beta", where), "beta");
  p.b = read_vector(field(j, "b", where), "b");
  p.w0 = read_vector(field(j, "w0", where), "w0");
  p.b0 = read_double(field(j, "b0", where), "b0");
  const json& rows = field(j, "w", where);
  if (!rows.is_array() || rows.size() != k) fail("net params: w must have k rows");
  for (std::size_t i = 0; i < k; ++i) {
    const auto row = read_vector(rows[i], "w row");
    if (row.size() != d) fail("net params: w rows must have d entries");
    std::copy(row.begin(), row.end(), p.w.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  if (p.beta.size() != k || p.b.size() != k || p.w0.size() != d) {
    fail("net params: vector lengths do not match k and d");
  }
  return p;
}

json to_json(const TrainOptions& o) {
  return {{"steps", o.steps},
          {"lr", o.step_size},
          {"final_fraction", o.final_fraction},
          {"optimizer", std::string(to_string(o.optimizer))},
          {"momentum", o.momentum},
          {"batch", o.batch},
          {"restarts", o.restarts},
          {"seed", o.seed},
          {"trace", o.record_trace},
          {"hidden_rate", o.hidden_rate},
          {"init_scale", o.init_scale},
          {"init", std::string(to_string(o.init))}};
}

TrainOptions train_options_from_json(const json& j, TrainOptions o) {
  constexpr std::string_view where = "train options";
  require_object(j, where);
  reject_unknown(j, {"steps", "lr", "final_fraction", "optimizer", "momentum", "batch",
                     "restarts", "seed", "trace", "hidden_rate", "init_scale", "init"},
                 where);
  if (j.contains("steps")) o.steps = read_count(j["steps"], "steps");
  if (j.contains("lr")) o.step_size = read_double(j["lr"], "lr");
  if (j.contains("final_fraction")) o.final_fraction = read_double(j["final_fraction"], "final_fraction");
  if (j.contains("optimizer")) o.optimizer = parse_optimizer(read_string(j["optimizer"], "optimizer"));
  if (j.contains("momentum")) o.momentum = read_double(j["momentum"], "momentum");
  if (j.contains("batch")) o.batch = read_count(j["batch"], "batch");
  if (j.contains("restarts")) o.restarts = read_count(j["restarts"], "restarts");
  if (j.contains("seed")) o.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("trace")) {
    if (!j["trace"].is_boolean()) fail("trace must be a boolean");
    o.record_trace = j["trace"].get<bool>();
  }
  if (j.contains("hidden_rate")) o.hidden_rate = read_double(j["hidden_rate"], "hidden_rate");
  if (j.contains("init_scale")) o.init_scale = read_double(j["init_scale"], "init_scale");
  if (j.contains("init")) o.init = parse_init(read_string(j["init"], "init"));
  o.validate();
  return o;
}

json result_to_json(const EstimateResult& r, bool include_trace) {
  json out = {{"kind", std::string(to_string(r.kind))},
              {"value", r.value},
              {"per_restart", r.per_restart},
              {"n_mu", r.n_mu},
              {"n_nu", r.n_nu},
              {"class", to_json(r.spec)},
              {"schedule",
               {{"m_k", schedule_m(r.spec)},
                {"t_k", schedule_t(r.spec)},
                {"r_k", number_or_null(schedule_r(r.spec))}}},
              {"params", params_to_json(r.params, r.spec.activation)}};
  if (include_trace) {
    json t = json::array();
    for (const auto& pt : r.trace) t.push_back({{"step", pt.step}, {"objective", pt.objective}});
    out["trace"] = t;
  }
  return out;
}

json oracle_to_json(DivergenceKind kind, const OracleResult& r) {
  return {{"kind", std::string(to_string(kind))},
          {"method", std::string(to_string(r.method))},
          {"value", r.value},
          {"stderr", r.std_error},
          {"detail", r.detail}};
}

json to_json(const SweepRecord& r) {
  return {{"kind", std::string(to_string(r.kind))},
          {"pair", r.pair},
          {"d", r.d},
          {"n", r.n},
          {"k", r.k},
          {"seed", r.seed},
          {"estimate", r.estimate},
          {"oracle", r.oracle},
          {"abs_error", r.abs_error},
          {"signed_error", r.signed_error},
          {"wall_ms", r.wall_ms},
          {"restarts", r.restarts},
          {"m_k", r.m_k},
          {"t_k", r.t_k},
          {"r_k", number_or_null(r.r_k)},
          {"status", r.status}};
}

SweepRecord record_from_json(const json& j) {
  constexpr std::string_view where = "record";
  require_object(j, where);
  SweepRecord r;
  r.kind = parse_divergence(read_string(field(j, "kind", where), "kind"));
  r.pair = read_string(field(j, "pair", where), "pair");
  r.d = read_count(field(j, "d", where), "d");
  r.n = read_count(field(j, "n", where), "n");
  r.k = read_count(field(j, "k", where), "k");
  r.seed = read_count(field(j, "seed", where), "seed");
  r.estimate = read_double(field(j, "estimate", where), "estimate");
  r.oracle = read_double(field(j, "oracle", where), "oracle");
  r.abs_error = read_double(field(j, "abs_error", where), "abs_error");
  r.signed_error = read_double(field(j, "signed_error", where), "signed_error");
  r.wall_ms = read_double(field(j, "wall_ms", where), "wall_ms");
  r.restarts = read_count(field(j, "restarts", where), "restarts");
  r.m_k = read_double(field(j, "m_k", where), "m_k");
  r.t_k = read_double(field(j, "t_k", where), "t_k");
  r.r_k = read_double(field(j, "r_k", where), "r_k");
  r.status = read_string(field(j, "status", where), "status");
  return r;
}

json records_to_json(const std::vector<SweepRecord>& records) {
  json out = json::array();
  for (const auto& r : records) out.push_back(to_json(r));
  return out;
}

std::vector<SweepRecord> records_from_json(const json& j) {
  if (!j.is_array()) fail("records must be a JSON array");
  std::vector<SweepRecord> out;
  for (const auto& r : j) out.push_back(record_from_json(r));
  return out;
}

json to_json(const RateFit& fit) {
  json table = json::array();
  for (const auto& p : fit.table) {
    table.push_back({{"axis", p.axis},
                     {"mean_abs_error", p.mean_abs_error},
                     {"median_abs_error", p.median_abs_error},
                     {"count", p.count}});
  }
  return {{"axis", std::string(to_string(fit.axis))},
          {"slope", fit.slope},
          {"intercept", fit.intercept},
          {"r2", fit.r2},
          {"points", fit.points},
          {"table", table},
          {"warnings", fit.warnings}};
}

json to_json(const ApproxReport& report) {
  json rows = json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"k", r.k}, {"seed", r.seed}, {"sup_error", r.sup_error},
                    {"l2_error", r.l2_error}});
  }
  json summary = json::array();
  for (const auto& s : report.summary) {
    summary.push_back({{"k", s.k},
                       {"median_sup_error", s.median_sup_error},
                       {"median_l2_error", s.median_l2_error}});
  }
  return {{"rows", rows}, {"summary", summary}};
}

json to_json(const SweepConfig& cfg) {
  json kinds = json::array();
  for (auto k : cfg.kinds) kinds.push_back(std::string(to_string(k)));
  json pairs = json::array();
  for (const auto& p : cfg.pairs) pairs.push_back({{"id", p.id}, {"p", p.p}, {"q", p.q}});
  json schedule = {{"regime", std::string(to_string(cfg.schedule.regime))},
                   {"support", !cfg.schedule.support ? "auto"
                               : *cfg.schedule.support == SupportKind::kBall ? "ball"
                                                                             : "cube"},
                   {"smoothness", cfg.schedule.smoothness},
                   {"c0", cfg.schedule.c0},
                   {"c1", cfg.schedule.c1},
                   {"activation", std::string(to_string(cfg.schedule.activation))}};
  if (cfg.schedule.M) schedule["M"] = *cfg.schedule.M;
  return {{"divergences", kinds},
          {"pairs", pairs},
          {"n_grid", cfg.n_grid},
          {"k_rule",
           {{"rule", std::string(to_string(cfg.k_rule.kind))},
            {"k", cfg.k_rule.k},
            {"cap", cfg.k_rule.cap}}},
          {"seeds", cfg.seeds},
          {"root_seed", cfg.root_seed},
          {"oracle",
           {{"method", std::string(to_string(cfg.oracle))}, {"samples", cfg.oracle_samples}}},
          {"schedule", schedule},
          {"train", to_json(cfg.train)},
          {"threads", cfg.threads},
          {"timing", cfg.timing},
          {"output", cfg.output}};
}

SweepConfig sweep_config_from_json(const json& j) {
  constexpr std::string_view where = "sweep config";
  require_object(j, where);
  reject_unknown(j, {"divergences", "pairs", "n_grid", "k_rule", "seeds", "root_seed",
                     "oracle", "schedule", "train", "threads", "timing", "output"},
                 where);
  SweepConfig cfg;
  const json& kinds = field(j, "divergences", where);
  if (!kinds.is_array()) fail("divergences must be an array");
  for (const auto& k : kinds) cfg.kinds.push_back(parse_divergence(read_string(k, "divergence")));
  const json& pairs = field(j, "pairs", where);
  if (!pairs.is_array()) fail("pairs must be an array");
  for (const auto& p : pairs) {
    require_object(p, "pair");
    reject_unknown(p, {"id", "p", "q"}, "pair");
    cfg.pairs.push_back({read_string(field(p, "id", "pair"), "id"),
                         read_string(field(p, "p", "pair"), "p"),
                         read_string(field(p, "q", "pair"), "q")});
  }
  const json& grid = field(j, "n_grid", where);
  if (!grid.is_array()) fail("n_grid must be an array");
  for (const auto& n : grid) cfg.n_grid.push_back(read_count(n, "n_grid entry"));
  if (j.contains("k_rule")) {
    const json& r = j["k_rule"];
    require_object(r, "k_rule");
    reject_unknown(r, {"rule", "k", "cap"}, "k_rule");
    if (r.contains("rule")) cfg.k_rule.kind = parse_k_rule(read_string(r["rule"], "rule"));
    if (r.contains("k")) cfg.k_rule.k = read_count(r["k"], "k");
    if (r.contains("cap")) cfg.k_rule.cap = read_count(r["cap"], "cap");
  }
  if (j.contains("seeds")) cfg.seeds = read_count(j["seeds"], "seeds");
  if (j.contains("root_seed")) cfg.root_seed = j["root_seed"].get<std::uint64_t>();
  if (j.contains("oracle")) {
    const json& o = j["oracle"];
    require_object(o, "oracle");
    reject_unknown(o, {"method", "samples"}, "oracle");
    if (o.contains("method")) cfg.oracle = parse_oracle_method(read_string(o["method"], "method"));
    if (o.contains("samples")) cfg.oracle_samples = read_count(o["samples"], "samples");
  }
  if (j.contains("schedule")) {
    const json& s = j["schedule"];
    require_object(s, "schedule");
    reject_unknown(s, {"regime", "M", "support", "smoothness", "c0", "c1", "activation"},
                   "schedule");
    if (s.contains("regime")) cfg.schedule.regime = parse_regime(read_string(s["regime"], "regime"));
    if (s.contains("M")) cfg.schedule.M = read_double(s["M"], "M");
    if (s.contains("support")) {
      const std::string sup = read_string(s["support"], "support");
      if (sup == "auto") {
        cfg.schedule.support.reset();
      } else if (sup == "ball") {
        cfg.schedule.support = SupportKind::kBall;
      } else if (sup == "cube") {
        cfg.schedule.support = SupportKind::kCompactUnitCube;
      } else {
        fail("support must be auto, ball or cube");
      }
    }
    if (s.contains("smoothness")) cfg.schedule.smoothness = read_double(s["smoothness"], "smoothness");
    if (s.contains("c0")) cfg.schedule.c0 = read_double(s["c0"], "c0");
    if (s.contains("c1")) cfg.schedule.c1 = read_double(s["c1"], "c1");
    if (s.contains("activation")) {
      cfg.schedule.activation = parse_activation(read_string(s["activation"], "activation"));
    }
  }
  if (j.contains("train")) cfg.train = train_options_from_json(j["train"], cfg.train);
  if (j.contains("threads")) cfg.threads = read_count(j["threads"], "threads");
  if (j.contains("timing")) {
    if (!j["timing"].is_boolean()) fail("timing must be a boolean");
    cfg.timing = j["timing"].get<bool>();
  }
  if (j.contains("output")) cfg.output = read_string(j["output"], "output");
  cfg.validate();
  return cfg;
}

}  // namespace divest
