// Apache License, Version 2.0, refer to LICENSE.txt

#include "divest/oracle.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "divest/error.hpp"

namespace divest {

namespace {

constexpr std::size_t kRuleSize = 16;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kWindowSigmas = 8.0;

struct Rule {
  std::array<double, kRuleSize> x{};
  std::array<double, kRuleSize> w{};
};

// Roots of P_16 by Newton iteration from the Chebyshev guesses.
Rule make_rule() {
  Rule r;
  const std::size_t n = kRuleSize;
  for (std::size_t i = 0; i < n; ++i) {
    double x = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) /
                        (static_cast<double>(n) + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0;
      double p1 = x;
      for (std::size_t k = 2; k <= n; ++k) {
        const double kk = static_cast<double>(k);
        const double p2 = ((2.0 * kk - 1.0) * x * p1 - (kk - 1.0) * p0) / kk;
        p0 = p1;
        p1 = p2;
      }
      dp = static_cast<double>(n) * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    r.x[i] = x;
    r.w[i] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
  return r;
}

const Rule& rule() {
  static const Rule r = make_rule();
  return r;
}

std::pair<double, double> axis_window(const Distribution& dist, std::size_t axis) {
  struct Visitor {
    std::size_t axis;
    std::pair<double, double> operator()(const Gaussian& g) const {
      return {g.mean[axis] - kWindowSigmas * g.sigma,
              g.mean[axis] + kWindowSigmas * g.sigma};
    }
    std::pair<double, double> operator()(const TruncatedGaussian&) const {
      return {0.0, 1.0};
    }
    std::pair<double, double> operator()(const Uniform&) const { return {0.0, 1.0}; }
    std::pair<double, double> operator()(const Mixture& m) const {
      std::pair<double, double> out{std::numeric_limits<double>::infinity(),
                                    -std::numeric_limits<double>::infinity()};
      for (std::size_t c = 0; c < m.components.size(); ++c) {
        if (m.weights[c] <= 0.0) continue;
        const auto w = axis_window(m.components[c], axis);
        out.first = std::min(out.first, w.first);
        out.second = std::max(out.second, w.second);
      }
      return out;
    }
    std::pair<double, double> operator()(const GaussianJoint2d&) const {
      return {-kWindowSigmas, kWindowSigmas};
    }
    std::pair<double, double> operator()(const MarginalProduct2d&) const {
      return {-kWindowSigmas, kWindowSigmas};
    }
  };
  return std::visit(Visitor{axis}, dist.variant());
}

std::pair<double, double> joint_window(const Distribution& p, const Distribution& q,
                                       std::size_t axis) {
  const auto a = axis_window(p, axis);
  const auto b = axis_window(q, axis);
  return {std::min(a.first, b.first), std::max(a.second, b.second)};
}

// Integrand of the defining integral at a point with log densities lp, lq.
double integrand(DivergenceKind kind, double lp, double lq) {
  if (lp == kNegInf && lq == kNegInf) return 0.0;
  switch (kind) {
    case DivergenceKind::kKL:
    case DivergenceKind::kKLDV:
      if (lp == kNegInf) return 0.0;
      if (lq == kNegInf) {
        throw Error(ErrorCode::kNonIntegrable,
                    "kl integrand diverges where q = 0 < p");
      }
      return std::exp(lp) * (lp - lq);
    case DivergenceKind::kChi2: {
      if (lq == kNegInf) {
        throw Error(ErrorCode::kNonIntegrable,
                    "chi2 integrand diverges where q = 0 < p");
      }
      const double e = std::expm1(lp - lq);
      return std::exp(lq) * e * e;
    }
    case DivergenceKind::kH2: {
      const double s = std::exp(0.5 * lp) - std::exp(0.5 * lq);
      return s * s;
    }
    case DivergenceKind::kTV:
      return std::abs(std::exp(lp) - std::exp(lq));
  }
  return 0.0;
}

// Sign changes of p - q along [lo, hi], refined by bisection.
template <class Diff>
std::vector<double> sign_changes(Diff&& diff, double lo, double hi,
                                 std::size_t scan) {
  std::vector<double> roots;
  const double h = (hi - lo) / static_cast<double>(scan);
  double xa = lo;
  double fa = diff(xa);
  for (std::size_t i = 1; i <= scan; ++i) {
    const double xb = lo + h * static_cast<double>(i);
    const double fb = diff(xb);
    if ((fa < 0.0 && fb > 0.0) || (fa > 0.0 && fb < 0.0)) {
      double a = xa;
      double b = xb;
      double fl = fa;
      for (int it = 0; it < 80 && b - a > 1e-15 * (1.0 + std::abs(a)); ++it) {
        const double m = 0.5 * (a + b);
        const double fm = diff(m);
        if ((fm < 0.0) == (fl < 0.0)) {
          a = m;
          fl = fm;
        } else {
          b = m;
        }
      }
      roots.push_back(0.5 * (a + b));
    }
    xa = xb;
    fa = fb;
  }
  return roots;
}

std::vector<double> breakpoints(DivergenceKind kind, double lo, double hi,
                                const auto& lp_at, const auto& lq_at) {
  std::vector<double> br{0.0, 1.0};
  if (kind == DivergenceKind::kTV) {
    auto diff = [&](double x) { return std::exp(lp_at(x)) - std::exp(lq_at(x)); };
    const auto roots = sign_changes(diff, lo, hi, 2048);
    br.insert(br.end(), roots.begin(), roots.end());
  }
  std::sort(br.begin(), br.end());
  return br;
}

bool chi2_gaussian_infinite(const Distribution& p, const Distribution& q) {
  const auto* gp = p.as<Gaussian>();
  const auto* gq = q.as<Gaussian>();
  return gp && gq && gp->sigma * gp->sigma >= 2.0 * gq->sigma * gq->sigma;
}

}  // namespace

std::pair<double, double> integration_window(const Distribution& p,
                                             const Distribution& q,
                                             std::size_t axis) {
  if (axis >= p.dim() || axis >= q.dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "axis out of range");
  }
  return joint_window(p, q, axis);
}

std::span<const double> gauss_legendre_nodes() { return rule().x; }
std::span<const double> gauss_legendre_weights() { return rule().w; }

std::string_view to_string(OracleMethod method) {
  switch (method) {
    case OracleMethod::kClosedForm: return "closed-form";
    case OracleMethod::kQuadrature: return "quadrature";
    case OracleMethod::kMcPlugin: return "mc-plugin";
  }
  return "closed-form";
}

OracleMethod parse_oracle_method(std::string_view name) {
  if (name == "closed-form") return OracleMethod::kClosedForm;
  if (name == "quadrature") return OracleMethod::kQuadrature;
  if (name == "mc-plugin") return OracleMethod::kMcPlugin;
  throw Error(ErrorCode::kInvalidRequest,
              "unknown oracle method '" + std::string(name) + "'");
}

OracleResult kl_gaussian_closed_form(std::span<const double> mp, double sp,
                                     std::span<const double> mq, double sq) {
  if (!(sp > 0.0) || !(sq > 0.0)) {
    throw Error(ErrorCode::kInvalidSigma, "gaussian sigma must be positive");
  }
  if (mp.size() != mq.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "mean vectors differ in length");
  }
  const double d = static_cast<double>(mp.size());
  double dist2 = 0.0;
  for (std::size_t j = 0; j < mp.size(); ++j) {
    const double z = mp[j] - mq[j];
    dist2 += z * z;
  }
  const double ratio = sp * sp / (sq * sq);
  OracleResult r;
  r.value = d * std::log(sq / sp) - 0.5 * d + 0.5 * d * ratio +
            dist2 / (2.0 * sq * sq);
  r.method = OracleMethod::kClosedForm;
  return r;
}

OracleResult divergence_closed_form(DivergenceKind kind, const Distribution& p,
                                    const Distribution& q) {
  const auto* gp = p.as<Gaussian>();
  const auto* gq = q.as<Gaussian>();
  if ((kind != DivergenceKind::kKL && kind != DivergenceKind::kKLDV) || !gp || !gq) {
    throw Error(ErrorCode::kUnsupportedKind,
                "closed form is available only for kl between gaussians");
  }
  return kl_gaussian_closed_form(gp->mean, gp->sigma, gq->mean, gq->sigma);
}

OracleResult divergence_quadrature(DivergenceKind kind, const Distribution& p,
                                   const Distribution& q, std::size_t nodes) {
  const std::size_t d = p.dim();
  if (q.dim() != d) {
    throw Error(ErrorCode::kDimensionMismatch, "p and q differ in dimension");
  }
  if (d > 2) {
    throw Error(ErrorCode::kDimensionTooHigh,
                "quadrature supports d <= 2, got d = " + std::to_string(d));
  }
  if (kind == DivergenceKind::kChi2 && chi2_gaussian_infinite(p, q)) {
    throw Error(ErrorCode::kNonIntegrable,
                "chi2 between gaussians is infinite when sigma_p^2 >= 2 sigma_q^2");
  }
  const std::size_t panels = std::max<std::size_t>(1, (nodes + kRuleSize - 1) / kRuleSize);

  double value;
  const auto [lo0, hi0] = joint_window(p, q, 0);
  if (d == 1) {
    auto lp_at = [&](double x) { return p.log_density(std::span<const double>(&x, 1)); };
    auto lq_at = [&](double x) { return q.log_density(std::span<const double>(&x, 1)); };
    const auto br = breakpoints(kind, lo0, hi0, lp_at, lq_at);
    value = integrate_1d([&](double x) { return integrand(kind, lp_at(x), lq_at(x)); },
                         lo0, hi0, br, panels);
  } else {
    const auto [lo1, hi1] = joint_window(p, q, 1);
    auto outer = [&](double x0) {
      auto lp_at = [&](double x1) {
        const double pt[2] = {x0, x1};
        return p.log_density(pt);
      };
      auto lq_at = [&](double x1) {
        const double pt[2] = {x0, x1};
        return q.log_density(pt);
      };
      const auto br = breakpoints(kind, lo1, hi1, lp_at, lq_at);
      return integrate_1d(
          [&](double x1) { return integrand(kind, lp_at(x1), lq_at(x1)); }, lo1, hi1,
          br, panels);
    };
    const double br0[2] = {0.0, 1.0};
    value = integrate_1d(outer, lo0, hi0, br0, panels);
  }
  OracleResult r;
  r.value = std::max(0.0, value);
  r.method = OracleMethod::kQuadrature;
  r.detail = panels * kRuleSize;
  return r;
}

OracleResult divergence_mc_plugin(DivergenceKind kind, const Distribution& p,
                                  const Distribution& q, std::size_t n, Rng& rng,
                                  bool dv) {
  if (kind == DivergenceKind::kKLDV) {
    throw Error(ErrorCode::kUnsupportedKind,
                "mc plug-in takes kl with the dv flag instead of kl-dv");
  }
  if (dv && kind != DivergenceKind::kKL) {
    throw Error(ErrorCode::kUnsupportedKind, "the dv form applies to kl only");
  }
  if (n < 2) throw Error(ErrorCode::kInvalidRequest, "mc plug-in needs n >= 2");
  if (p.dim() != q.dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "p and q differ in dimension");
  }
  const SampleBatch X = sample(p, n, rng);
  const SampleBatch Y = sample(q, n, rng);

  std::vector<double> a(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double lp = p.log_density(X.row(i));
    const double lq = q.log_density(X.row(i));
    if (lq == kNegInf) {
      if (kind == DivergenceKind::kKL || kind == DivergenceKind::kChi2) {
        throw Error(ErrorCode::kDomain, "q vanishes at a sample drawn from p");
      }
      a[i] = 1.0;  // limits of the H2 and TV potentials as the ratio grows
    } else {
      a[i] = optimal_potential_from_log(kind, lp - lq);
    }
  }
  // h of the optimal potential on nu-samples: r - 1, r^2 - 1, sqrt(r) - 1, sign.
  std::vector<double> b(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double lr = p.log_density(Y.row(j)) - q.log_density(Y.row(j));
    switch (kind) {
      case DivergenceKind::kKL:
        b[j] = dv ? std::exp(lr) : std::expm1(lr);
        break;
      case DivergenceKind::kChi2: b[j] = std::expm1(2.0 * lr); break;
      case DivergenceKind::kH2: b[j] = std::expm1(0.5 * lr); break;
      case DivergenceKind::kTV: b[j] = lr >= 0.0 ? 1.0 : -1.0; break;
      case DivergenceKind::kKLDV: break;
    }
  }
  auto mean_var = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::pair{m, s / static_cast<double>(v.size() - 1)};
  };
  const auto [ma, va] = mean_var(a);
  const auto [mb, vb] = mean_var(b);
  const double nn = static_cast<double>(n);

  OracleResult r;
  r.method = OracleMethod::kMcPlugin;
  r.detail = n;
  if (dv) {
    r.value = ma - std::log(mb);
    r.std_error = std::sqrt(va / nn + vb / (nn * mb * mb));
  } else {
    r.value = ma - mb;
    r.std_error = std::sqrt(va / nn + vb / nn);
  }
  if (!std::isfinite(r.value)) {
    throw Error(ErrorCode::kNonFinite, "mc plug-in value is not finite");
  }
  return r;
}

}  // namespace divest
