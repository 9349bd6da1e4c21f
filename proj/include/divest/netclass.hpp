// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "divest/divergence.hpp"
#include "divest/rng.hpp"

namespace divest {

enum class Activation { kReLU, kSigmoid };

std::string_view to_string(Activation act);
Activation parse_activation(std::string_view tag);

// Parameter bounds of a shallow class:
//   max_i ||w_i||_1 v |b_i| <= a1,  max_i |beta_i| <= a2,  |b0| <= a3,
//   ||w0||_1 <= a4.
struct Bounds {
  double a1 = 0.0;
  double a2 = 0.0;
  double a3 = 0.0;
  double a4 = 0.0;
};

enum class TransformKind { kIdentity, kCap, kClip };

// Output transform applied after the affine-plus-hidden sum.
//   identity: g
//   cap(t):   min(1 - t, g)
//   clip:     clamp(g, -1, 1)
struct Transform {
  TransformKind kind = TransformKind::kIdentity;
  double t = 0.0;

  static Transform identity() { return {}; }
  static Transform cap(double t) { return {TransformKind::kCap, t}; }
  static Transform clip() { return {TransformKind::kClip, 0.0}; }
};

struct NetClassSpec {
  std::size_t d = 1;
  std::size_t k = 1;
  Activation activation = Activation::kReLU;
  Bounds bounds;
  Transform transform;
  // Outputs are zeroed for ||x||_2 > mask_radius.
  double mask_radius = std::numeric_limits<double>::infinity();

  // Throws InvalidRequest on negative bounds, cap t outside (0,1), or a
  // non-positive radius.
  void validate() const;
};

// G_k^R(a): (1, 2a/k, a, a), relu.
NetClassSpec relu_class(std::size_t d, std::size_t k, double a);
// G_k^S(a): (sqrt(k) log k, 2a/k, a, 0), sigmoid.
NetClassSpec sigmoid_class(std::size_t d, std::size_t k, double a);
// G_k^*(phi): a* = (1, 1, 1, 0).
NetClassSpec star_class(std::size_t d, std::size_t k, Activation act);

// Trainable weights of g(x) = sum_i beta_i phi(w_i . x + b_i) + w0 . x + b0.
// Also used as the container for parameter gradients.
struct NetParams {
  std::size_t k = 0;
  std::size_t d = 0;
  std::vector<double> beta;  // k
  std::vector<double> w;     // k x d, row-major
  std::vector<double> b;     // k
  std::vector<double> w0;    // d
  double b0 = 0.0;

  static NetParams zeros(std::size_t k, std::size_t d);

  std::span<double> hidden(std::size_t i) { return {w.data() + i * d, d}; }
  std::span<const double> hidden(std::size_t i) const {
    return {w.data() + i * d, d};
  }

  std::size_t size() const { return 2 * k + k * d + d + 1; }
  bool same_shape(const NetParams& other) const {
    return k == other.k && d == other.d;
  }
};

// Flat layout: beta, w, b, w0, b0.
std::vector<double> flatten(const NetParams& params);
NetParams unflatten(std::size_t k, std::size_t d, std::span<const double> flat);

// this += alpha * other, coordinatewise.
void axpy(double alpha, const NetParams& other, NetParams& target);
double squared_distance(const NetParams& lhs, const NetParams& rhs);
// Appends `extra` neurons with beta = 0 and the given hidden weights.
NetParams pad_neurons(const NetParams& params, std::size_t extra, double w_fill,
                      double b_fill);

double relu(double z);
double sigmoid(double z);

// Single-point evaluator that keeps the hidden pre-activations of the last
// forward() so the caller can choose the backward weight after seeing g(x).
class NetEvaluator {
 public:
  NetEvaluator(const NetClassSpec& spec, const NetParams& params);

  // Transformed, masked output at x.
  double forward(std::span<const double> x);
  // Untransformed sum at the last x (0 when masked).
  double raw() const { return raw_; }
  // grad += weight * d g / d theta at the last x.
  void accumulate_gradient(double weight, NetParams& grad) const;

 private:
  const NetClassSpec& spec_;
  const NetParams& params_;
  std::vector<double> pre_;  // w_i . x + b_i
  std::span<const double> x_;
  double raw_ = 0.0;
  double slope_ = 0.0;  // d transform / d raw, 0 when masked or saturated
};

double net_eval(const NetClassSpec& spec, const NetParams& params,
                std::span<const double> x);
NetParams net_param_gradient(const NetClassSpec& spec, const NetParams& params,
                             std::span<const double> x);

// Euclidean projection onto {u : ||u||_1 <= radius} by sort and soft-threshold.
std::vector<double> l1_ball_project(std::span<const double> v, double radius);
// In-place variant.
void l1_ball_project_inplace(std::span<double> v, double radius);

// Projection onto the feasible set of `spec`; idempotent.
NetParams project(const NetClassSpec& spec, const NetParams& params);
void project_inplace(const NetClassSpec& spec, NetParams& params);
bool is_feasible(const NetClassSpec& spec, const NetParams& params,
                 double tol = 1e-12);

// Uniform draw on each parameter's feasible set; hidden and affine weight
// vectors are uniform on their l1 balls.
NetParams init_params(const NetClassSpec& spec, Rng& rng);

enum class Regime { kKnownM, kUnknownM, kConsistency };
enum class SupportKind { kCompactUnitCube, kBall };

std::string_view to_string(Regime regime);
Regime parse_regime(std::string_view tag);

struct ScheduleRequest {
  DivergenceKind kind = DivergenceKind::kKL;
  std::size_t k = 2;
  std::size_t d = 1;
  Regime regime = Regime::kUnknownM;
  std::optional<double> M;
  SupportKind support = SupportKind::kCompactUnitCube;
  // For kBall: explicit radius, or nullopt for 1 v M + c1 sqrt(log k).
  std::optional<double> radius;
  double smoothness = 1.0;  // TV only, in (0, 1]
  double c0 = 1.0;          // TV parameter-bound prefactor
  double c1 = 1.0;          // ball radius prefactor
  Activation activation = Activation::kReLU;
};

// Width-dependent class for each divergence, bounds growing with k.
//   KL    a = max(log log k, 1) or M
//   CHI2  a = log k or M
//   H2    a = log k with cap 1/log k, or a = M with cap M^{-1/2}
//   TV    a = c0 k^{(d+2)/(2(s+d+2))} with clip
//   consistency: G_k^* with the H2 cap / TV clip where required
NetClassSpec class_schedule(const ScheduleRequest& req);

// Largest width allowed by the KL consistency condition
// k <= (1 - rho)/4 log n, floored at 1.
std::size_t consistency_width(std::size_t n, double rho = 0.5);

// Scalar class size a of the shorthand that produced `spec` (its a3), the cap
// level t (0 if none), and the mask radius; the schedule record fields.
double schedule_m(const NetClassSpec& spec);
double schedule_t(const NetClassSpec& spec);
double schedule_r(const NetClassSpec& spec);

}  // namespace divest
