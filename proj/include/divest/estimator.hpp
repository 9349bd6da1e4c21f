// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "divest/distributions.hpp"
#include "divest/divergence.hpp"
#include "divest/netclass.hpp"

namespace divest {

enum class Optimizer { kAdam, kNesterov };

std::string_view to_string(Optimizer opt);
Optimizer parse_optimizer(std::string_view name);

// Starting point of each restart.
//   uniform: init_params on the class with (a2, a3, a4) scaled by init_scale.
//   data:    same outer weights; hidden weights at full l1 norm a1 with the
//            kink w.x + b = 0 placed at a random pooled sample point.
enum class InitKind { kUniform, kData };

std::string_view to_string(InitKind init);
InitKind parse_init(std::string_view name);

struct TrainOptions {
  std::size_t steps = 500;
  // Base step size; decays along a half cosine to step_size * final_fraction.
  double step_size = 0.03;
  double final_fraction = 0.01;
  Optimizer optimizer = Optimizer::kAdam;
  // First-moment decay for adam, look-ahead coefficient for nesterov.
  // nesterov with momentum 0 is plain projected ascent.
  double momentum = 0.9;
  // Mini-batch size per sample set; 0 means full batch.
  std::size_t batch = 0;
  std::size_t restarts = 5;
  std::uint64_t seed = 0;
  bool record_trace = false;
  // Step multiplier for the hidden weights relative to the affine part.
  double hidden_rate = 1.0;
  // init_params draws from the class with (a2, a3, a4) scaled by this factor.
  double init_scale = 0.1;
  InitKind init = InitKind::kData;

  void validate() const;
};

struct TracePoint {
  std::size_t step = 0;
  double objective = 0.0;
};

struct EstimateResult {
  double value = 0.0;
  NetParams params;
  std::vector<double> per_restart;
  NetClassSpec spec;
  DivergenceKind kind = DivergenceKind::kKL;
  std::size_t n_mu = 0;
  std::size_t n_nu = 0;
  std::vector<TracePoint> trace;
};

// (1/n) sum g(X_i) - (1/m) sum h(g(Y_j)). KL_DV is rejected; H2 requires a cap
// transform and TV a clip transform.
double empirical_objective(DivergenceKind kind, const NetClassSpec& spec,
                           const NetParams& params, const SampleBatch& X,
                           const SampleBatch& Y);

// (1/n) sum g(X_i) - log((1/m) sum exp g(Y_j)), max-shifted.
double dv_objective(const NetClassSpec& spec, const NetParams& params,
                    const SampleBatch& X, const SampleBatch& Y);

// Exact parameter gradient of the objective for `kind` (KL_DV allowed).
NetParams objective_gradient(DivergenceKind kind, const NetClassSpec& spec,
                             const NetParams& params, const SampleBatch& X,
                             const SampleBatch& Y);

// Objective for any kind, including KL_DV.
double objective(DivergenceKind kind, const NetClassSpec& spec,
                 const NetParams& params, const SampleBatch& X,
                 const SampleBatch& Y);

// One projected ascent run from init_params(rng).
EstimateResult train(DivergenceKind kind, const NetClassSpec& spec,
                     const SampleBatch& X, const SampleBatch& Y,
                     const TrainOptions& opts, Rng& rng);

// Weighted least-squares regression of `targets` onto the class with the same
// optimizer (restarts ignored). Empty weights mean uniform. Starts from the
// projection of `start` when given, else from init_params.
NetParams fit_least_squares(const NetClassSpec& spec, const SampleBatch& points,
                            std::span<const double> targets,
                            std::span<const double> weights,
                            const TrainOptions& opts, Rng& rng,
                            const NetParams* start = nullptr);

using ClassChoice = std::variant<NetClassSpec, ScheduleRequest>;

// Best of opts.restarts independent runs; restart r uses derive_seed(seed, r).
EstimateResult estimate(DivergenceKind kind, const ClassChoice& cls,
                        const SampleBatch& X, const SampleBatch& Y,
                        const TrainOptions& opts);

// Throws TransformMismatch when `spec` cannot host the objective of `kind`.
void check_transform(DivergenceKind kind, const NetClassSpec& spec);

}  // namespace divest
