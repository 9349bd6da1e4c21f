// Apache License, Version 2.0, refer to LICENSE.txt

#include "divest/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>

#include "divest/error.hpp"

namespace divest {

std::string_view to_string(Optimizer opt) {
  return opt == Optimizer::kAdam ? "adam" : "nesterov";
}

Optimizer parse_optimizer(std::string_view name) {
  if (name == "adam") return Optimizer::kAdam;
  if (name == "nesterov") return Optimizer::kNesterov;
  throw Error(ErrorCode::kInvalidRequest,
              "unknown optimizer '" + std::string(name) + "'");
}

std::string_view to_string(InitKind init) {
  return init == InitKind::kUniform ? "uniform" : "data";
}

InitKind parse_init(std::string_view name) {
  if (name == "uniform") return InitKind::kUniform;
  if (name == "data") return InitKind::kData;
  throw Error(ErrorCode::kInvalidRequest,
              "unknown init '" + std::string(name) + "' (expected uniform or data)");
}

void TrainOptions::validate() const {
  if (steps < 1) throw Error(ErrorCode::kInvalidRequest, "steps must be >= 1");
  if (restarts < 1) {
    throw Error(ErrorCode::kInvalidRequest, "restarts must be >= 1");
  }
  if (!(step_size > 0.0)) {
    throw Error(ErrorCode::kInvalidRequest, "step size must be positive");
  }
  if (!(final_fraction > 0.0 && final_fraction <= 1.0)) {
    throw Error(ErrorCode::kInvalidRequest, "final_fraction must be in (0, 1]");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw Error(ErrorCode::kInvalidRequest, "momentum must be in [0, 1)");
  }
  if (!(hidden_rate >= 0.0)) {
    throw Error(ErrorCode::kInvalidRequest, "hidden_rate must be >= 0");
  }
  if (!(init_scale >= 0.0 && init_scale <= 1.0)) {
    throw Error(ErrorCode::kInvalidRequest, "init_scale must be in [0, 1]");
  }
}

void check_transform(DivergenceKind kind, const NetClassSpec& spec) {
  if (kind == DivergenceKind::kH2 && spec.transform.kind != TransformKind::kCap) {
    throw Error(ErrorCode::kTransformMismatch,
                "h2 objective needs a cap(t) output transform");
  }
  if (kind == DivergenceKind::kTV && spec.transform.kind != TransformKind::kClip) {
    throw Error(ErrorCode::kTransformMismatch,
                "tv objective needs the clip output transform");
  }
}

namespace {

// Evaluates the net over many points. Hidden weights are held transposed
// (d x k) so the per-neuron loops vectorize; gradients accumulate in the same
// layout and are folded back by export_gradient(). Summation order is fixed.
class BatchKernel {
 public:
  BatchKernel(const NetClassSpec& spec, const NetParams& params)
      : spec_(spec),
        params_(params),
        k_(params.k),
        d_(params.d),
        wt_(params.k * params.d),
        z_(params.k),
        act_(params.k),
        dact_(params.k),
        gbeta_(params.k, 0.0),
        gwt_(params.k * params.d, 0.0),
        gb_(params.k, 0.0),
        gw0_(params.d, 0.0) {
    if (spec.k != params.k || spec.d != params.d) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "parameters do not match the class dimensions");
    }
    for (std::size_t i = 0; i < k_; ++i) {
      for (std::size_t j = 0; j < d_; ++j) wt_[j * k_ + i] = params.w[i * d_ + j];
    }
    radius2_ = std::isfinite(spec.mask_radius)
                   ? spec.mask_radius * spec.mask_radius
                   : std::numeric_limits<double>::infinity();
  }

  double forward(const double* x) {
    x_ = x;
    if (radius2_ < std::numeric_limits<double>::infinity()) {
      double r2 = 0.0;
      for (std::size_t j = 0; j < d_; ++j) r2 += x[j] * x[j];
      if (r2 > radius2_) {
        slope_ = 0.0;
        return 0.0;
      }
    }
    const double* b = params_.b.data();
    const double* beta = params_.beta.data();
    double* z = z_.data();
    double* act = act_.data();
    for (std::size_t i = 0; i < k_; ++i) z[i] = b[i];
    for (std::size_t j = 0; j < d_; ++j) {
      const double xj = x[j];
      const double* wrow = wt_.data() + j * k_;
      for (std::size_t i = 0; i < k_; ++i) z[i] += wrow[i] * xj;
    }
    if (spec_.activation == Activation::kReLU) {
      double* dact = dact_.data();
      for (std::size_t i = 0; i < k_; ++i) {
        const bool on = z[i] > 0.0;
        act[i] = on ? z[i] : 0.0;
        dact[i] = on ? 1.0 : 0.0;
      }
    } else {
      double* dact = dact_.data();
      for (std::size_t i = 0; i < k_; ++i) {
        act[i] = sigmoid(z[i]);
        dact[i] = act[i] * (1.0 - act[i]);
      }
    }
    // Four interleaved partial sums, combined in a fixed order.
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= k_; i += 4) {
      s0 += beta[i] * act[i];
      s1 += beta[i + 1] * act[i + 1];
      s2 += beta[i + 2] * act[i + 2];
      s3 += beta[i + 3] * act[i + 3];
    }
    for (; i < k_; ++i) s0 += beta[i] * act[i];
    double g = params_.b0 + ((s0 + s1) + (s2 + s3));
    for (std::size_t j = 0; j < d_; ++j) g += params_.w0[j] * x[j];

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

  // Adds weight * grad g at the last forward point.
  void backward(double weight) {
    const double c = weight * slope_;
    if (c == 0.0) return;
    const double* beta = params_.beta.data();
    const double* act = act_.data();
    const double* dact = dact_.data();
    double* gbeta = gbeta_.data();
    double* gb = gb_.data();
    double* back = z_.data();  // z is dead after forward; reuse as scratch
    for (std::size_t i = 0; i < k_; ++i) {
      gbeta[i] += c * act[i];
      back[i] = c * beta[i] * dact[i];
      gb[i] += back[i];
    }
    for (std::size_t j = 0; j < d_; ++j) {
      const double xj = x_[j];
      double* grow = gwt_.data() + j * k_;
      for (std::size_t i = 0; i < k_; ++i) grow[i] += back[i] * xj;
      gw0_[j] += c * xj;
    }
    gb0_ += c;
  }

  void export_gradient(NetParams& out) const {
    out = NetParams::zeros(k_, d_);
    out.beta = gbeta_;
    out.b = gb_;
    out.w0 = gw0_;
    out.b0 = gb0_;
    for (std::size_t i = 0; i < k_; ++i) {
      for (std::size_t j = 0; j < d_; ++j) out.w[i * d_ + j] = gwt_[j * k_ + i];
    }
  }

 private:
  const NetClassSpec& spec_;
  const NetParams& params_;
  std::size_t k_;
  std::size_t d_;
  std::vector<double> wt_;
  std::vector<double> z_;
  std::vector<double> act_;
  std::vector<double> dact_;
  std::vector<double> gbeta_;
  std::vector<double> gwt_;
  std::vector<double> gb_;
  std::vector<double> gw0_;
  double gb0_ = 0.0;
  double radius2_;
  const double* x_ = nullptr;
  double slope_ = 0.0;
};

// Index view over a sample batch: all rows, or a chosen subset.
struct Rows {
  const SampleBatch* batch;
  const std::vector<std::size_t>* subset = nullptr;

  std::size_t size() const { return subset ? subset->size() : batch->size(); }
  const double* operator[](std::size_t i) const {
    const std::size_t r = subset ? (*subset)[i] : i;
    return batch->points.data() + r * batch->d;
  }
};

void check_batches(const NetClassSpec& spec, const SampleBatch& X,
                   const SampleBatch& Y) {
  if (X.size() == 0 || Y.size() == 0) {
    throw Error(ErrorCode::kInvalidRequest, "sample batches must be nonempty");
  }
  if (X.d != spec.d || Y.d != spec.d) {
    throw Error(ErrorCode::kDimensionMismatch,
                "sample dimension does not match the class dimension " +
                    std::to_string(spec.d));
  }
}

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) {
    throw Error(ErrorCode::kNonFinite, std::string(what) + " is not finite");
  }
}

// Objective value, plus its gradient when `grad` is non-null.
double evaluate(DivergenceKind kind, const NetClassSpec& spec,
                const NetParams& params, Rows X, Rows Y, NetParams* grad) {
  BatchKernel kernel(spec, params);
  const double inv_n = 1.0 / static_cast<double>(X.size());
  const double inv_m = 1.0 / static_cast<double>(Y.size());

  double sum_x = 0.0;
  for (std::size_t i = 0; i < X.size(); ++i) {
    sum_x += kernel.forward(X[i]);
    if (grad) kernel.backward(inv_n);
  }
  const double mean_x = sum_x * inv_n;

  double value;
  if (kind == DivergenceKind::kKLDV) {
    std::vector<double> gy(Y.size());
    double gmax = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < Y.size(); ++j) {
      gy[j] = kernel.forward(Y[j]);
      gmax = std::max(gmax, gy[j]);
    }
    double s = 0.0;
    for (double g : gy) s += std::exp(g - gmax);
    const double log_mean_exp = gmax + std::log(s * inv_m);
    value = mean_x - log_mean_exp;
    if (grad) {
      for (std::size_t j = 0; j < Y.size(); ++j) {
        kernel.forward(Y[j]);
        kernel.backward(-std::exp(gy[j] - gmax) / s);
      }
    }
  } else {
    double sum_h = 0.0;
    for (std::size_t j = 0; j < Y.size(); ++j) {
      const double g = kernel.forward(Y[j]);
      sum_h += h_value(kind, g);
      if (grad) kernel.backward(-h_derivative(kind, g) * inv_m);
    }
    value = mean_x - sum_h * inv_m;
  }
  require_finite(value, "objective");
  if (grad) kernel.export_gradient(*grad);
  return value;
}

}  // namespace

double empirical_objective(DivergenceKind kind, const NetClassSpec& spec,
                           const NetParams& params, const SampleBatch& X,
                           const SampleBatch& Y) {
  if (kind == DivergenceKind::kKLDV) {
    throw Error(ErrorCode::kUnsupportedKind,
                "kl-dv has no h-form objective; use dv_objective");
  }
  check_transform(kind, spec);
  check_batches(spec, X, Y);
  return evaluate(kind, spec, params, Rows{&X}, Rows{&Y}, nullptr);
}

double dv_objective(const NetClassSpec& spec, const NetParams& params,
                    const SampleBatch& X, const SampleBatch& Y) {
  check_batches(spec, X, Y);
  return evaluate(DivergenceKind::kKLDV, spec, params, Rows{&X}, Rows{&Y},
                  nullptr);
}

double objective(DivergenceKind kind, const NetClassSpec& spec,
                 const NetParams& params, const SampleBatch& X,
                 const SampleBatch& Y) {
  return kind == DivergenceKind::kKLDV ? dv_objective(spec, params, X, Y)
                                       : empirical_objective(kind, spec, params, X, Y);
}

NetParams objective_gradient(DivergenceKind kind, const NetClassSpec& spec,
                             const NetParams& params, const SampleBatch& X,
                             const SampleBatch& Y) {
  check_transform(kind, spec);
  check_batches(spec, X, Y);
  NetParams grad;
  evaluate(kind, spec, params, Rows{&X}, Rows{&Y}, &grad);
  return grad;
}

namespace {

double cosine_step(const TrainOptions& opts, std::size_t step) {
  const double progress =
      opts.steps > 1 ? static_cast<double>(step) / static_cast<double>(opts.steps - 1)
                     : 1.0;
  const double f = opts.final_fraction;
  return opts.step_size *
         (f + (1.0 - f) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
}

// Per-coordinate step multipliers over the flattened layout
// (beta, w, b, w0, b0).
//   nesterov: outer weights share one output, so their step is divided by k;
//     hidden weights are rescaled by a1/(a2 k).
//   adam: each group steps in units of its own constraint radius.
std::vector<double> step_scales(const NetClassSpec& spec, const TrainOptions& opts) {
  const std::size_t k = spec.k;
  const std::size_t d = spec.d;
  const Bounds& a = spec.bounds;
  double outer;
  double hidden;
  double bias0;
  double lin0;
  if (opts.optimizer == Optimizer::kAdam) {
    outer = a.a2;
    hidden = opts.hidden_rate * a.a1;
    bias0 = a.a3;
    lin0 = a.a4;
  } else {
    outer = 1.0 / static_cast<double>(k);
    hidden = a.a2 > 0.0 ? opts.hidden_rate * a.a1 / a.a2 / static_cast<double>(k)
                        : 0.0;
    bias0 = 1.0;
    lin0 = 1.0;
  }
  std::vector<double> s;
  s.reserve(2 * k + k * d + d + 1);
  s.insert(s.end(), k, outer);
  s.insert(s.end(), k * d + k, hidden);
  s.insert(s.end(), d, lin0);
  s.push_back(bias0);
  return s;
}

NetClassSpec init_class(const NetClassSpec& spec, double scale) {
  NetClassSpec out = spec;
  out.bounds.a2 *= scale;
  out.bounds.a3 *= scale;
  out.bounds.a4 *= scale;
  return out;
}

// Hidden units at full norm with kinks through random pooled samples.
NetParams data_start(const NetClassSpec& spec, const TrainOptions& opts,
                     const SampleBatch& X, const SampleBatch& Y, Rng& rng) {
  NetParams p = init_params(init_class(spec, opts.init_scale), rng);
  const double a1 = spec.bounds.a1;
  for (std::size_t i = 0; i < p.k; ++i) {
    auto w = p.hidden(i);
    double l1 = 0.0;
    for (double v : w) l1 += std::abs(v);
    if (l1 > 0.0) {
      for (double& v : w) v *= a1 / l1;
    }
    const SampleBatch& src = (rng() & 1u) ? X : Y;
    const auto x = src.row(rng.below(src.size()));
    double z = 0.0;
    for (std::size_t c = 0; c < p.d; ++c) z += w[c] * x[c];
    p.b[i] = std::clamp(-z, -a1, a1);
  }
  return p;
}

constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-12;

}  // namespace

namespace {

// Projected first-order ascent from init_params(rng). `eval` returns the
// objective at its argument and writes the gradient.
template <class Eval>
NetParams projected_ascent(const NetClassSpec& spec, const TrainOptions& opts,
                           Rng& rng, Eval&& eval, std::vector<TracePoint>* trace,
                           const NetParams* start = nullptr) {
  const std::size_t k = spec.k;
  const std::size_t d = spec.d;
  NetParams theta = start ? project(spec, *start)
                          : init_params(init_class(spec, opts.init_scale), rng);
  std::vector<double> flat = flatten(theta);
  std::vector<double> previous = flat;
  std::vector<double> point = flat;
  std::vector<double> m1(flat.size(), 0.0);
  std::vector<double> m2(flat.size(), 0.0);
  const std::vector<double> scales = step_scales(spec, opts);
  const bool adam = opts.optimizer == Optimizer::kAdam;
  const std::size_t trace_every = std::max<std::size_t>(1, opts.steps / 200);
  NetParams grad;
  double decay1 = 1.0;
  double decay2 = 1.0;

  for (std::size_t step = 0; step < opts.steps; ++step) {
    // Nesterov evaluates at a projected look-ahead point; Adam at the iterate.
    point = flat;
    if (!adam && opts.momentum > 0.0 && step > 0) {
      for (std::size_t i = 0; i < point.size(); ++i) {
        point[i] += opts.momentum * (flat[i] - previous[i]);
      }
      theta = unflatten(k, d, point);
      project_inplace(spec, theta);
      point = flatten(theta);
    } else {
      theta = unflatten(k, d, point);
    }

    const double value = eval(theta, grad);
    if (trace && step % trace_every == 0) trace->push_back({step, value});

    const std::vector<double> g = flatten(grad);
    const double eta = cosine_step(opts, step);
    previous = flat;
    if (adam) {
      decay1 *= opts.momentum;
      decay2 *= kAdamBeta2;
      for (std::size_t i = 0; i < g.size(); ++i) {
        m1[i] = opts.momentum * m1[i] + (1.0 - opts.momentum) * g[i];
        m2[i] = kAdamBeta2 * m2[i] + (1.0 - kAdamBeta2) * g[i] * g[i];
        const double mhat = m1[i] / (1.0 - decay1);
        const double vhat = m2[i] / (1.0 - decay2);
        flat[i] = point[i] + eta * scales[i] * mhat / (std::sqrt(vhat) + kAdamEps);
      }
    } else {
      for (std::size_t i = 0; i < g.size(); ++i) {
        flat[i] = point[i] + eta * scales[i] * g[i];
      }
    }
    theta = unflatten(k, d, flat);
    project_inplace(spec, theta);
    flat = flatten(theta);
  }
  return unflatten(k, d, flat);
}

}  // namespace

EstimateResult train(DivergenceKind kind, const NetClassSpec& spec,
                     const SampleBatch& X, const SampleBatch& Y,
                     const TrainOptions& opts, Rng& rng) {
  opts.validate();
  spec.validate();
  check_transform(kind, spec);
  check_batches(spec, X, Y);

  const bool minibatch = opts.batch > 0 &&
                         (opts.batch < X.size() || opts.batch < Y.size());
  std::vector<std::size_t> idx_x;
  std::vector<std::size_t> idx_y;
  auto eval = [&](const NetParams& theta, NetParams& grad) {
    if (!minibatch) return evaluate(kind, spec, theta, Rows{&X}, Rows{&Y}, &grad);
    idx_x.resize(std::min(opts.batch, X.size()));
    idx_y.resize(std::min(opts.batch, Y.size()));
    for (auto& i : idx_x) i = rng.below(X.size());
    for (auto& j : idx_y) j = rng.below(Y.size());
    return evaluate(kind, spec, theta, Rows{&X, &idx_x}, Rows{&Y, &idx_y}, &grad);
  };

  EstimateResult result;
  std::optional<NetParams> start;
  if (opts.init == InitKind::kData) start = data_start(spec, opts, X, Y, rng);
  NetParams theta = projected_ascent(spec, opts, rng, eval,
                                     opts.record_trace ? &result.trace : nullptr,
                                     start ? &*start : nullptr);
  result.value = objective(kind, spec, theta, X, Y);
  if (opts.record_trace) result.trace.push_back({opts.steps, result.value});
  result.params = std::move(theta);
  result.per_restart = {result.value};
  result.spec = spec;
  result.kind = kind;
  result.n_mu = X.size();
  result.n_nu = Y.size();
  return result;
}

NetParams fit_least_squares(const NetClassSpec& spec, const SampleBatch& points,
                            std::span<const double> targets,
                            std::span<const double> weights,
                            const TrainOptions& opts, Rng& rng,
                            const NetParams* start) {
  opts.validate();
  spec.validate();
  if (start && (start->k != spec.k || start->d != spec.d)) {
    throw Error(ErrorCode::kDimensionMismatch, "start parameters do not match the class");
  }
  const std::size_t n = points.size();
  if (n == 0 || targets.size() != n || (!weights.empty() && weights.size() != n)) {
    throw Error(ErrorCode::kDimensionMismatch,
                "points, targets and weights must have matching lengths");
  }
  if (points.d != spec.d) {
    throw Error(ErrorCode::kDimensionMismatch,
                "point dimension does not match the class dimension");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += weights.empty() ? 1.0 : weights[i];
  if (!(total > 0.0)) {
    throw Error(ErrorCode::kInvalidRequest, "weights must have positive sum");
  }
  auto eval = [&](const NetParams& theta, NetParams& grad) {
    BatchKernel kernel(spec, theta);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double wi = (weights.empty() ? 1.0 : weights[i]) / total;
      const double r = kernel.forward(points.points.data() + i * points.d) - targets[i];
      loss += wi * r * r;
      kernel.backward(-2.0 * wi * r);
    }
    require_finite(loss, "least-squares loss");
    kernel.export_gradient(grad);
    return -loss;
  };
  return projected_ascent(spec, opts, rng, eval, nullptr, start);
}

EstimateResult estimate(DivergenceKind kind, const ClassChoice& cls,
                        const SampleBatch& X, const SampleBatch& Y,
                        const TrainOptions& opts) {
  opts.validate();
  NetClassSpec spec;
  if (const auto* req = std::get_if<ScheduleRequest>(&cls)) {
    ScheduleRequest r = *req;
    r.kind = kind;
    spec = class_schedule(r);
  } else {
    spec = std::get<NetClassSpec>(cls);
  }
  EstimateResult best;
  std::vector<double> values;
  values.reserve(opts.restarts);
  for (std::size_t r = 0; r < opts.restarts; ++r) {
    Rng rng(derive_seed(opts.seed, r));
    EstimateResult run = train(kind, spec, X, Y, opts, rng);
    values.push_back(run.value);
    if (r == 0 || run.value > best.value) best = std::move(run);
  }
  best.per_restart = std::move(values);
  return best;
}

}  // namespace divest
