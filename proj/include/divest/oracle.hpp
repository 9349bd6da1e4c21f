// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "divest/distributions.hpp"
#include "divest/divergence.hpp"
#include "divest/rng.hpp"

namespace divest {

enum class OracleMethod { kClosedForm, kQuadrature, kMcPlugin };

std::string_view to_string(OracleMethod method);
OracleMethod parse_oracle_method(std::string_view name);

struct OracleResult {
  double value = 0.0;
  OracleMethod method = OracleMethod::kClosedForm;
  double std_error = 0.0;  // 0 for deterministic methods
  // Nodes per axis for quadrature, samples per law for mc_plugin.
  std::size_t detail = 0;
};

// KL(N(mp, sp^2 I) || N(mq, sq^2 I)).
OracleResult kl_gaussian_closed_form(std::span<const double> mp, double sp,
                                     std::span<const double> mq, double sq);

// Closed form when one is known (KL between isotropic Gaussians);
// UnsupportedKind otherwise.
OracleResult divergence_closed_form(DivergenceKind kind, const Distribution& p,
                                    const Distribution& q);

// Integration window along one axis: union of the mean +- 8 sigma boxes and
// the unit interval for compact laws.
std::pair<double, double> integration_window(const Distribution& p,
                                             const Distribution& q,
                                             std::size_t axis);

inline constexpr std::size_t kDefaultQuadratureNodes = 2048;

// Composite Gauss-Legendre tensor quadrature, d <= 2. `nodes` per axis is
// rounded up to a multiple of the 16-point panel rule.
OracleResult divergence_quadrature(DivergenceKind kind, const Distribution& p,
                                   const Distribution& q,
                                   std::size_t nodes = kDefaultQuadratureNodes);

// Plug-in of the optimal potential on n fresh samples from each law. With
// dv set, the DV form at log(p/q) is used instead (KL only).
OracleResult divergence_mc_plugin(DivergenceKind kind, const Distribution& p,
                                  const Distribution& q, std::size_t n, Rng& rng,
                                  bool dv = false);

// Composite 16-point Gauss-Legendre rule of f over [lo, hi], split at the
// given sorted interior breakpoints, `panels` panels spread by length.
template <class F>
double integrate_1d(F&& f, double lo, double hi, std::span<const double> breaks,
                    std::size_t panels);

// Nodes and weights of the 16-point rule on [-1, 1].
std::span<const double> gauss_legendre_nodes();
std::span<const double> gauss_legendre_weights();

template <class F>
double integrate_1d(F&& f, double lo, double hi, std::span<const double> breaks,
                    std::size_t panels) {
  const auto xs = gauss_legendre_nodes();
  const auto ws = gauss_legendre_weights();
  std::vector<double> edges{lo};
  for (double b : breaks) {
    if (b > edges.back() && b < hi) edges.push_back(b);
  }
  edges.push_back(hi);
  const std::size_t ne = edges.size();
  const double span = hi - lo;
  double total = 0.0;
  for (std::size_t s = 0; s + 1 < ne; ++s) {
    const double a = edges[s];
    const double b = edges[s + 1];
    if (!(b > a)) continue;
    const std::size_t np = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(static_cast<double>(panels) * (b - a) / span)));
    const double h = (b - a) / static_cast<double>(np);
    double seg = 0.0;
    for (std::size_t i = 0; i < np; ++i) {
      const double mid = a + (static_cast<double>(i) + 0.5) * h;
      double panel = 0.0;
      for (std::size_t j = 0; j < xs.size(); ++j) {
        panel += ws[j] * f(mid + 0.5 * h * xs[j]);
      }
      seg += 0.5 * h * panel;
    }
    total += seg;
  }
  return total;
}

}  // namespace divest
