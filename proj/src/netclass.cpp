// Apache License, Version 2.0, refer to LICENSE.txt

#include "divest/netclass.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>

#include "divest/error.hpp"

namespace divest {

std::string_view to_string(Activation act) {
  return act == Activation::kReLU ? "relu" : "sigmoid";
}

Activation parse_activation(std::string_view tag) {
  if (tag == "relu") return Activation::kReLU;
  if (tag == "sigmoid") return Activation::kSigmoid;
  throw Error(ErrorCode::kInvalidRequest,
              "unknown activation '" + std::string(tag) + "'");
}

void NetClassSpec::validate() const {
  if (d == 0 || k == 0) {
    throw Error(ErrorCode::kInvalidRequest, "class needs d >= 1 and k >= 1");
  }
  for (double a : {bounds.a1, bounds.a2, bounds.a3, bounds.a4}) {
    if (!(a >= 0.0) || !std::isfinite(a)) {
      throw Error(ErrorCode::kInvalidRequest,
                  "parameter bounds must be finite and nonnegative");
    }
  }
  if (transform.kind == TransformKind::kCap &&
      !(transform.t > 0.0 && transform.t < 1.0)) {
    throw Error(ErrorCode::kInvalidRequest,
                "cap level t must lie in (0, 1), got " +
                    std::to_string(transform.t));
  }
  if (!(mask_radius > 0.0)) {
    throw Error(ErrorCode::kInvalidRequest, "mask radius must be positive");
  }
}

NetClassSpec relu_class(std::size_t d, std::size_t k, double a) {
  NetClassSpec spec;
  spec.d = d;
  spec.k = k;
  spec.activation = Activation::kReLU;
  spec.bounds = {1.0, 2.0 * a / static_cast<double>(k), a, a};
  return spec;
}

NetClassSpec sigmoid_class(std::size_t d, std::size_t k, double a) {
  NetClassSpec spec;
  spec.d = d;
  spec.k = k;
  spec.activation = Activation::kSigmoid;
  const double kk = static_cast<double>(k);
  spec.bounds = {std::sqrt(kk) * std::log(kk), 2.0 * a / kk, a, 0.0};
  return spec;
}

NetClassSpec star_class(std::size_t d, std::size_t k, Activation act) {
  NetClassSpec spec;
  spec.d = d;
  spec.k = k;
  spec.activation = act;
  spec.bounds = {1.0, 1.0, 1.0, 0.0};
  return spec;
}

NetParams NetParams::zeros(std::size_t k, std::size_t d) {
  NetParams p;
  p.k = k;
  p.d = d;
  p.beta.assign(k, 0.0);
  p.w.assign(k * d, 0.0);
  p.b.assign(k, 0.0);
  p.w0.assign(d, 0.0);
  p.b0 = 0.0;
  return p;
}

std::vector<double> flatten(const NetParams& params) {
  std::vector<double> flat;
  flat.reserve(params.size());
  flat.insert(flat.end(), params.beta.begin(), params.beta.end());
  flat.insert(flat.end(), params.w.begin(), params.w.end());
  flat.insert(flat.end(), params.b.begin(), params.b.end());
  flat.insert(flat.end(), params.w0.begin(), params.w0.end());
  flat.push_back(params.b0);
  return flat;
}

NetParams unflatten(std::size_t k, std::size_t d,
                    std::span<const double> flat) {
  NetParams p = NetParams::zeros(k, d);
  if (flat.size() != p.size()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "flat parameter vector has " + std::to_string(flat.size()) +
                    " entries, expected " + std::to_string(p.size()));
  }
  auto it = flat.begin();
  auto take = [&it](std::vector<double>& dst) {
    std::copy(it, it + static_cast<std::ptrdiff_t>(dst.size()), dst.begin());
    it += static_cast<std::ptrdiff_t>(dst.size());
  };
  take(p.beta);
  take(p.w);
  take(p.b);
  take(p.w0);
  p.b0 = *it;
  return p;
}

namespace {

void require_shape(const NetParams& lhs, const NetParams& rhs) {
  if (!lhs.same_shape(rhs)) {
    throw Error(ErrorCode::kDimensionMismatch, "parameter shapes differ");
  }
}

void require_spec_shape(const NetClassSpec& spec, const NetParams& params) {
  if (spec.k != params.k || spec.d != params.d ||
      params.beta.size() != params.k || params.b.size() != params.k ||
      params.w.size() != params.k * params.d || params.w0.size() != params.d) {
    throw Error(ErrorCode::kDimensionMismatch,
                "parameters (k=" + std::to_string(params.k) +
                    ", d=" + std::to_string(params.d) +
                    ") do not match class (k=" + std::to_string(spec.k) +
                    ", d=" + std::to_string(spec.d) + ")");
  }
}

}  // namespace

void axpy(double alpha, const NetParams& other, NetParams& target) {
  require_shape(other, target);
  auto add = [alpha](const std::vector<double>& src, std::vector<double>& dst) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += alpha * src[i];
  };
  add(other.beta, target.beta);
  add(other.w, target.w);
  add(other.b, target.b);
  add(other.w0, target.w0);
  target.b0 += alpha * other.b0;
}

double squared_distance(const NetParams& lhs, const NetParams& rhs) {
  require_shape(lhs, rhs);
  const auto a = flatten(lhs);
  const auto b = flatten(rhs);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

NetParams pad_neurons(const NetParams& params, std::size_t extra, double w_fill,
                      double b_fill) {
  NetParams out = params;
  out.k = params.k + extra;
  out.beta.resize(out.k, 0.0);
  out.b.resize(out.k, b_fill);
  out.w.resize(out.k * out.d, w_fill);
  return out;
}

double relu(double z) { return z > 0.0 ? z : 0.0; }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

NetEvaluator::NetEvaluator(const NetClassSpec& spec, const NetParams& params)
    : spec_(spec), params_(params), pre_(params.k, 0.0) {
  require_spec_shape(spec, params);
}

double NetEvaluator::forward(std::span<const double> x) {
  if (x.size() != params_.d) {
    throw Error(ErrorCode::kDimensionMismatch,
                "input has dimension " + std::to_string(x.size()) +
                    ", net expects " + std::to_string(params_.d));
  }
  x_ = x;
  if (std::isfinite(spec_.mask_radius)) {
    double norm2 = 0.0;
    for (double v : x) norm2 += v * v;
    if (norm2 > spec_.mask_radius * spec_.mask_radius) {
      raw_ = 0.0;
      slope_ = 0.0;
      return 0.0;
    }
  }
  const std::size_t k = params_.k;
  const std::size_t d = params_.d;
  const double* w = params_.w.data();
  for (std::size_t i = 0; i < k; ++i) {
    double z = params_.b[i];
    for (std::size_t j = 0; j < d; ++j) z += w[i * d + j] * x[j];
    pre_[i] = z;
  }
  double g = params_.b0;
  for (std::size_t j = 0; j < d; ++j) g += params_.w0[j] * x[j];
  if (spec_.activation == Activation::kReLU) {
    for (std::size_t i = 0; i < k; ++i) g += params_.beta[i] * relu(pre_[i]);
  } else {
    for (std::size_t i = 0; i < k; ++i) g += params_.beta[i] * sigmoid(pre_[i]);
  }
  raw_ = g;
  switch (spec_.transform.kind) {
    case TransformKind::kIdentity:
      slope_ = 1.0;
      return g;
    case TransformKind::kCap: {
      const double level = 1.0 - spec_.transform.t;
      slope_ = g <= level ? 1.0 : 0.0;
      return std::min(level, g);
    }
    case TransformKind::kClip:
      slope_ = std::abs(g) <= 1.0 ? 1.0 : 0.0;
      return std::clamp(g, -1.0, 1.0);
  }
  return g;
}

void NetEvaluator::accumulate_gradient(double weight, NetParams& grad) const {
  const double c = weight * slope_;
  if (c == 0.0) return;
  const std::size_t k = params_.k;
  const std::size_t d = params_.d;
  for (std::size_t j = 0; j < d; ++j) grad.w0[j] += c * x_[j];
  grad.b0 += c;
  for (std::size_t i = 0; i < k; ++i) {
    double act;
    double dact;
    if (spec_.activation == Activation::kReLU) {
      act = relu(pre_[i]);
      dact = pre_[i] > 0.0 ? 1.0 : 0.0;
    } else {
      act = sigmoid(pre_[i]);
      dact = act * (1.0 - act);
    }
    grad.beta[i] += c * act;
    const double back = c * params_.beta[i] * dact;
    grad.b[i] += back;
    for (std::size_t j = 0; j < d; ++j) grad.w[i * d + j] += back * x_[j];
  }
}

double net_eval(const NetClassSpec& spec, const NetParams& params,
                std::span<const double> x) {
  NetEvaluator ev(spec, params);
  return ev.forward(x);
}

NetParams net_param_gradient(const NetClassSpec& spec, const NetParams& params,
                             std::span<const double> x) {
  NetEvaluator ev(spec, params);
  ev.forward(x);
  NetParams grad = NetParams::zeros(params.k, params.d);
  ev.accumulate_gradient(1.0, grad);
  return grad;
}

void l1_ball_project_inplace(std::span<double> v, double radius) {
  if (radius < 0.0) {
    throw Error(ErrorCode::kInvalidRequest, "l1 radius must be nonnegative");
  }
  double l1 = 0.0;
  for (double x : v) l1 += std::abs(x);
  // Slack for the rounding of a previous projection keeps this idempotent.
  if (l1 <= radius * (1.0 + 1e-12)) return;
  if (radius == 0.0) {
    std::fill(v.begin(), v.end(), 0.0);
    return;
  }
  std::vector<double> u(v.size());
  std::transform(v.begin(), v.end(), u.begin(),
                 [](double x) { return std::abs(x); });
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumsum = 0.0;
  double theta = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cumsum += u[j];
    const double candidate = (cumsum - radius) / static_cast<double>(j + 1);
    if (u[j] - candidate > 0.0) theta = candidate;
  }
  for (double& x : v) {
    const double mag = std::max(std::abs(x) - theta, 0.0);
    x = std::copysign(mag, x);
  }
}

std::vector<double> l1_ball_project(std::span<const double> v, double radius) {
  std::vector<double> out(v.begin(), v.end());
  l1_ball_project_inplace(out, radius);
  return out;
}

void project_inplace(const NetClassSpec& spec, NetParams& params) {
  require_spec_shape(spec, params);
  const Bounds& a = spec.bounds;
  for (std::size_t i = 0; i < params.k; ++i) {
    l1_ball_project_inplace(params.hidden(i), a.a1);
    params.b[i] = std::clamp(params.b[i], -a.a1, a.a1);
    params.beta[i] = std::clamp(params.beta[i], -a.a2, a.a2);
  }
  params.b0 = std::clamp(params.b0, -a.a3, a.a3);
  l1_ball_project_inplace(params.w0, a.a4);
}

NetParams project(const NetClassSpec& spec, const NetParams& params) {
  NetParams out = params;
  project_inplace(spec, out);
  return out;
}

bool is_feasible(const NetClassSpec& spec, const NetParams& params,
                 double tol) {
  require_spec_shape(spec, params);
  const Bounds& a = spec.bounds;
  auto l1 = [](std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += std::abs(x);
    return s;
  };
  for (std::size_t i = 0; i < params.k; ++i) {
    if (l1(params.hidden(i)) > a.a1 + tol) return false;
    if (std::abs(params.b[i]) > a.a1 + tol) return false;
    if (std::abs(params.beta[i]) > a.a2 + tol) return false;
  }
  return std::abs(params.b0) <= a.a3 + tol && l1(params.w0) <= a.a4 + tol;
}

namespace {

// Uniform point in the l1 ball of the given radius: the first m coordinates of
// a uniform point on the (m+1)-simplex, with random signs.
void sample_l1_ball(std::span<double> out, double radius, Rng& rng) {
  if (radius == 0.0) {
    std::fill(out.begin(), out.end(), 0.0);
    return;
  }
  double total = 0.0;
  for (double& x : out) {
    x = rng.exponential();
    total += x;
  }
  total += rng.exponential();
  for (double& x : out) {
    const double sign = (rng() & 1u) ? 1.0 : -1.0;
    x = sign * radius * x / total;
  }
}

}  // namespace

NetParams init_params(const NetClassSpec& spec, Rng& rng) {
  spec.validate();
  NetParams p = NetParams::zeros(spec.k, spec.d);
  const Bounds& a = spec.bounds;
  for (std::size_t i = 0; i < spec.k; ++i) {
    sample_l1_ball(p.hidden(i), a.a1, rng);
    p.b[i] = rng.uniform(-a.a1, a.a1);
    p.beta[i] = rng.uniform(-a.a2, a.a2);
  }
  sample_l1_ball(p.w0, a.a4, rng);
  p.b0 = rng.uniform(-a.a3, a.a3);
  return p;
}

std::string_view to_string(Regime regime) {
  switch (regime) {
    case Regime::kKnownM: return "known-m";
    case Regime::kUnknownM: return "unknown-m";
    case Regime::kConsistency: return "consistency";
  }
  return "?";
}

Regime parse_regime(std::string_view tag) {
  if (tag == "known-m") return Regime::kKnownM;
  if (tag == "unknown-m") return Regime::kUnknownM;
  if (tag == "consistency") return Regime::kConsistency;
  throw Error(ErrorCode::kInvalidRequest,
              "unknown schedule '" + std::string(tag) +
                  "' (expected known-m, unknown-m or consistency)");
}

NetClassSpec class_schedule(const ScheduleRequest& req) {
  if (req.d == 0) throw Error(ErrorCode::kInvalidRequest, "d must be >= 1");
  const bool consistency = req.regime == Regime::kConsistency;
  if (!consistency && req.k < 2) {
    throw Error(ErrorCode::kInvalidRequest,
                "schedules need k >= 2 so that log k > 0");
  }
  if (req.regime == Regime::kKnownM && !(req.M.has_value() && *req.M > 0.0)) {
    throw Error(ErrorCode::kInvalidRequest,
                "known-m schedule requires M > 0");
  }
  if (req.kind == DivergenceKind::kTV &&
      !(req.smoothness > 0.0 && req.smoothness <= 1.0)) {
    throw Error(ErrorCode::kInvalidRequest, "TV smoothness s must be in (0, 1]");
  }
  const double k = static_cast<double>(req.k);
  const double d = static_cast<double>(req.d);
  const bool known = req.regime == Regime::kKnownM;

  NetClassSpec spec;
  auto shorthand = [&](double a) {
    return req.activation == Activation::kReLU ? relu_class(req.d, req.k, a)
                                               : sigmoid_class(req.d, req.k, a);
  };

  if (consistency) {
    spec = star_class(req.d, req.k, req.activation);
    if (req.kind == DivergenceKind::kH2) {
      if (!(req.M.has_value() && *req.M > 1.0)) {
        throw Error(ErrorCode::kInvalidRequest,
                    "h2 consistency class needs M > 1 for the cap M^{-1/2}");
      }
      spec.transform = Transform::cap(1.0 / std::sqrt(*req.M));
    } else if (req.kind == DivergenceKind::kTV) {
      spec.transform = Transform::clip();
    }
  } else {
    switch (req.kind) {
      case DivergenceKind::kKL:
      case DivergenceKind::kKLDV:
        spec = shorthand(known ? *req.M : std::max(std::log(std::log(k)), 1.0));
        break;
      case DivergenceKind::kChi2:
        spec = shorthand(known ? *req.M : std::log(k));
        break;
      case DivergenceKind::kH2: {
        const double a = known ? *req.M : std::log(k);
        const double t = known ? 1.0 / std::sqrt(*req.M) : 1.0 / std::log(k);
        if (!(t > 0.0 && t < 1.0)) {
          throw Error(ErrorCode::kInvalidRequest,
                      "h2 cap level " + std::to_string(t) +
                          " is outside (0, 1); need k >= 3 or M > 1");
        }
        spec = shorthand(a);
        spec.transform = Transform::cap(t);
        break;
      }
      case DivergenceKind::kTV: {
        const double s = req.smoothness;
        const double exponent = (d + 2.0) / (2.0 * (s + d + 2.0));
        spec = shorthand(req.c0 * std::pow(k, exponent));
        spec.transform = Transform::clip();
        break;
      }
    }
  }

  if (req.support == SupportKind::kBall) {
    if (req.radius.has_value()) {
      spec.mask_radius = *req.radius;
    } else {
      const double base = std::max(1.0, req.M.value_or(1.0));
      spec.mask_radius = base + req.c1 * std::sqrt(std::log(std::max(k, 2.0)));
    }
  }
  spec.validate();
  return spec;
}

std::size_t consistency_width(std::size_t n, double rho) {
  const double bound = 0.25 * (1.0 - rho) * std::log(static_cast<double>(n));
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(bound)));
}

double schedule_m(const NetClassSpec& spec) { return spec.bounds.a3; }

double schedule_t(const NetClassSpec& spec) {
  return spec.transform.kind == TransformKind::kCap ? spec.transform.t : 0.0;
}

double schedule_r(const NetClassSpec& spec) { return spec.mask_radius; }

}  // namespace divest
