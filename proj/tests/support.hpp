// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "divest/distributions.hpp"
#include "divest/estimator.hpp"
#include "divest/netclass.hpp"
#include "divest/rng.hpp"

namespace divest::testing {

inline SampleBatch random_batch(std::size_t n, std::size_t d, Rng& rng, double scale = 1.0) {
  SampleBatch b;
  b.d = d;
  b.points.resize(n * d);
  for (double& v : b.points) v = scale * rng.uniform(-1.0, 1.0);
  return b;
}

// Central differences of the objective in every flat coordinate.
inline std::vector<double> fd_gradient(DivergenceKind kind, const NetClassSpec& spec,
                                       const NetParams& params, const SampleBatch& X,
                                       const SampleBatch& Y, double step) {
  std::vector<double> flat = flatten(params);
  std::vector<double> out(flat.size());
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const double keep = flat[i];
    flat[i] = keep + step;
    const double up = objective(kind, spec, unflatten(params.k, params.d, flat), X, Y);
    flat[i] = keep - step;
    const double down = objective(kind, spec, unflatten(params.k, params.d, flat), X, Y);
    flat[i] = keep;
    out[i] = (up - down) / (2.0 * step);
  }
  return out;
}

inline double l2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline double l2_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

// True when some point sits within `margin` of a relu kink, the cap level,
// the clip levels or the mask boundary, where finite differences break.
inline bool near_nonsmooth(const NetClassSpec& spec, const NetParams& params,
                           const SampleBatch& batch, double margin) {
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const auto x = batch.row(j);
    double norm2 = 0.0;
    for (double v : x) norm2 += v * v;
    if (std::isfinite(spec.mask_radius) &&
        std::abs(std::sqrt(norm2) - spec.mask_radius) < margin) {
      return true;
    }
    double raw = params.b0;
    for (std::size_t c = 0; c < params.d; ++c) raw += params.w0[c] * x[c];
    for (std::size_t i = 0; i < params.k; ++i) {
      double z = params.b[i];
      const auto w = params.hidden(i);
      for (std::size_t c = 0; c < params.d; ++c) z += w[c] * x[c];
      if (spec.activation == Activation::kReLU && std::abs(z) < margin) return true;
      raw += params.beta[i] * (spec.activation == Activation::kReLU ? relu(z) : sigmoid(z));
    }
    if (spec.transform.kind == TransformKind::kCap &&
        std::abs(raw - (1.0 - spec.transform.t)) < margin) {
      return true;
    }
    if (spec.transform.kind == TransformKind::kClip && std::abs(std::abs(raw) - 1.0) < margin) {
      return true;
    }
  }
  return false;
}

}  // namespace divest::testing
