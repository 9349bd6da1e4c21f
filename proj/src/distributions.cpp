// Apache License, Version 2.0, refer to LICENSE.txt

#include "divest/distributions.hpp"

#include <algorithm>
#include <charconv>
#include <cctype>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <optional>

#include "divest/error.hpp"

namespace divest {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kMinAcceptance = 1e-6;

double log_sum_exp(std::span<const double> v) {
  double m = kNegInf;
  for (double x : v) m = std::max(m, x);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

// P(0 <= m + sigma Z <= 1) computed from the tail nearer to zero mass.
double unit_interval_mass(double mean, double sigma) {
  const double lo = (0.0 - mean) / (sigma * std::numbers::sqrt2);
  const double hi = (1.0 - mean) / (sigma * std::numbers::sqrt2);
  if (lo > 0.0) return 0.5 * (std::erfc(lo) - std::erfc(hi));
  if (hi < 0.0) return 0.5 * (std::erfc(-hi) - std::erfc(-lo));
  return 0.5 * (std::erf(hi) - std::erf(lo));
}

double gaussian_log_density(std::span<const double> mean, double sigma,
                            std::span<const double> x) {
  double r2 = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double z = x[j] - mean[j];
    r2 += z * z;
  }
  const double d = static_cast<double>(x.size());
  return -0.5 * d * std::log(2.0 * std::numbers::pi * sigma * sigma) -
         0.5 * r2 / (sigma * sigma);
}

bool in_unit_cube(std::span<const double> x) {
  return std::all_of(x.begin(), x.end(),
                     [](double v) { return v >= 0.0 && v <= 1.0; });
}

std::size_t dim_of(const Distribution::Variant& v) {
  struct Visitor {
    std::size_t operator()(const Gaussian& g) const { return g.mean.size(); }
    std::size_t operator()(const TruncatedGaussian& g) const {
      return g.mean.size();
    }
    std::size_t operator()(const Uniform& u) const { return u.d; }
    std::size_t operator()(const Mixture& m) const {
      return m.components.empty() ? 0 : m.components.front().dim();
    }
    std::size_t operator()(const GaussianJoint2d&) const { return 2; }
    std::size_t operator()(const MarginalProduct2d&) const { return 2; }
  };
  return std::visit(Visitor{}, v);
}

void check_dim(const Distribution& dist, std::span<const double> x) {
  if (x.size() != dist.dim()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "point has dimension " + std::to_string(x.size()) +
                    ", distribution has " + std::to_string(dist.dim()));
  }
}

std::string format_vector(std::span<const double> v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ';';
    out += format_double(v[i]);
  }
  return out;
}

}  // namespace

std::string format_double(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

Distribution::Distribution(Variant v) : v_(std::move(v)), dim_(dim_of(v_)) {}

double Distribution::log_density(std::span<const double> x) const {
  check_dim(*this, x);
  struct Visitor {
    std::span<const double> x;
    double operator()(const Gaussian& g) const {
      return gaussian_log_density(g.mean, g.sigma, x);
    }
    double operator()(const TruncatedGaussian& g) const {
      if (!in_unit_cube(x)) return kNegInf;
      return gaussian_log_density(g.mean, g.sigma, x) - std::log(g.normalizer);
    }
    double operator()(const Uniform&) const {
      return in_unit_cube(x) ? 0.0 : kNegInf;
    }
    double operator()(const Mixture& m) const {
      std::vector<double> terms(m.components.size());
      for (std::size_t c = 0; c < terms.size(); ++c) {
        terms[c] = m.weights[c] > 0.0
                       ? std::log(m.weights[c]) + m.components[c].log_density(x)
                       : kNegInf;
      }
      return log_sum_exp(terms);
    }
    double operator()(const GaussianJoint2d& j) const {
      const double s = 1.0 - j.rho * j.rho;
      const double q = x[0] * x[0] - 2.0 * j.rho * x[0] * x[1] + x[1] * x[1];
      return -std::log(2.0 * std::numbers::pi) - 0.5 * std::log(s) -
             0.5 * q / s;
    }
    double operator()(const MarginalProduct2d&) const {
      return -std::log(2.0 * std::numbers::pi) -
             0.5 * (x[0] * x[0] + x[1] * x[1]);
    }
  };
  return std::visit(Visitor{x}, v_);
}

double Distribution::density(std::span<const double> x) const {
  return std::exp(log_density(x));
}

bool Distribution::in_support(std::span<const double> x) const {
  return log_density(x) > kNegInf;
}

bool Distribution::compact() const {
  struct Visitor {
    bool operator()(const Gaussian&) const { return false; }
    bool operator()(const TruncatedGaussian&) const { return true; }
    bool operator()(const Uniform&) const { return true; }
    bool operator()(const Mixture& m) const {
      return std::all_of(m.components.begin(), m.components.end(),
                         [](const Distribution& c) { return c.compact(); });
    }
    bool operator()(const GaussianJoint2d&) const { return false; }
    bool operator()(const MarginalProduct2d&) const { return false; }
  };
  return std::visit(Visitor{}, v_);
}

std::string Distribution::spec() const {
  struct Visitor {
    std::string operator()(const Gaussian& g) const {
      return "gauss:d=" + std::to_string(g.mean.size()) +
             ",mean=" + format_vector(g.mean) + ",sigma=" + format_double(g.sigma);
    }
    std::string operator()(const TruncatedGaussian& g) const {
      return "tgauss:d=" + std::to_string(g.mean.size()) +
             ",mean=" + format_vector(g.mean) + ",sigma=" + format_double(g.sigma);
    }
    std::string operator()(const Uniform& u) const {
      return "uniform:d=" + std::to_string(u.d);
    }
    std::string operator()(const Mixture& m) const {
      std::string out = "mix:w=" + format_vector(m.weights);
      for (std::size_t c = 0; c < m.components.size(); ++c) {
        out += ",c" + std::to_string(c + 1) + "=(" + m.components[c].spec() + ")";
      }
      return out;
    }
    std::string operator()(const GaussianJoint2d& j) const {
      return "minejoint:rho=" + format_double(j.rho);
    }
    std::string operator()(const MarginalProduct2d& p) const {
      return "mineprod:rho=" + format_double(p.rho);
    }
  };
  return std::visit(Visitor{}, v_);
}

Distribution gaussian(std::vector<double> mean, double sigma) {
  if (mean.empty()) throw Error(ErrorCode::kInvalidRequest, "gaussian needs d >= 1");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw Error(ErrorCode::kInvalidSigma, "sigma must be positive and finite");
  }
  return Distribution(Gaussian{std::move(mean), sigma});
}

Distribution truncated_gaussian(std::vector<double> mean, double sigma) {
  if (mean.empty()) {
    throw Error(ErrorCode::kInvalidRequest, "truncated gaussian needs d >= 1");
  }
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw Error(ErrorCode::kInvalidSigma, "sigma must be positive and finite");
  }
  double z = 1.0;
  for (double m : mean) z *= unit_interval_mass(m, sigma);
  return Distribution(TruncatedGaussian{std::move(mean), sigma, z});
}

Distribution uniform(std::size_t d) {
  if (d == 0) throw Error(ErrorCode::kInvalidRequest, "uniform needs d >= 1");
  return Distribution(Uniform{d});
}

Distribution mixture(std::vector<Distribution> components,
                     std::vector<double> weights) {
  if (components.empty() || components.size() != weights.size()) {
    throw Error(ErrorCode::kInvalidRequest,
                "mixture needs one weight per component and at least one "
                "component");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) {
      throw Error(ErrorCode::kInvalidRequest, "mixture weights must be >= 0");
    }
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw Error(ErrorCode::kInvalidRequest,
                "mixture weights sum to " + format_double(total) + ", not 1");
  }
  const std::size_t d = components.front().dim();
  for (const auto& c : components) {
    if (c.dim() != d) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "mixture components have different dimensions");
    }
  }
  return Distribution(Mixture{std::move(components), std::move(weights)});
}

std::pair<Distribution, Distribution> mine_pair(double rho) {
  if (!(std::abs(rho) < 1.0)) {
    throw Error(ErrorCode::kInvalidRho,
                "correlation must satisfy |rho| < 1, got " + format_double(rho));
  }
  return {Distribution(GaussianJoint2d{rho}), Distribution(MarginalProduct2d{rho})};
}

double gaussian_mutual_information(double rho) {
  if (!(std::abs(rho) < 1.0)) {
    throw Error(ErrorCode::kInvalidRho,
                "correlation must satisfy |rho| < 1, got " + format_double(rho));
  }
  return -0.5 * std::log1p(-rho * rho);
}

namespace {

void sample_point(const Distribution& dist, Rng& rng, std::span<double> out) {
  struct Visitor {
    Rng& rng;
    std::span<double> out;
    void operator()(const Gaussian& g) const {
      for (std::size_t j = 0; j < out.size(); ++j) {
        out[j] = g.mean[j] + g.sigma * rng.normal();
      }
    }
    void operator()(const TruncatedGaussian& g) const {
      // The cube is a product set, so rejection factorizes over axes.
      for (std::size_t j = 0; j < out.size(); ++j) {
        double v;
        do {
          v = g.mean[j] + g.sigma * rng.normal();
        } while (!(v >= 0.0 && v <= 1.0));
        out[j] = v;
      }
    }
    void operator()(const Uniform&) const {
      for (double& v : out) v = rng.uniform();
    }
    void operator()(const Mixture& m) const {
      const double u = rng.uniform();
      double acc = 0.0;
      std::size_t pick = m.components.size() - 1;
      for (std::size_t c = 0; c < m.components.size(); ++c) {
        acc += m.weights[c];
        if (u < acc) {
          pick = c;
          break;
        }
      }
      sample_point(m.components[pick], rng, out);
    }
    void operator()(const GaussianJoint2d& j) const {
      const double z1 = rng.normal();
      const double z2 = rng.normal();
      out[0] = z1;
      out[1] = j.rho * z1 + std::sqrt(1.0 - j.rho * j.rho) * z2;
    }
    void operator()(const MarginalProduct2d&) const {
      out[0] = rng.normal();
      out[1] = rng.normal();
    }
  };
  std::visit(Visitor{rng, out}, dist.variant());
}

void check_acceptance(const Distribution& dist) {
  if (const auto* tg = dist.as<TruncatedGaussian>()) {
    if (tg->normalizer < kMinAcceptance) {
      throw Error(ErrorCode::kRejectionStall,
                  "truncated gaussian keeps only " +
                      format_double(tg->normalizer) +
                      " of its parent mass; rejection sampling would stall");
    }
  } else if (const auto* mix = dist.as<Mixture>()) {
    for (std::size_t c = 0; c < mix->components.size(); ++c) {
      if (mix->weights[c] > 0.0) check_acceptance(mix->components[c]);
    }
  }
}

}  // namespace

SampleBatch sample(const Distribution& dist, std::size_t n, Rng& rng) {
  if (n == 0) throw Error(ErrorCode::kInvalidRequest, "sample size must be >= 1");
  check_acceptance(dist);
  SampleBatch batch;
  batch.d = dist.dim();
  batch.seed = rng.seed();
  batch.source = dist.spec();
  batch.points.resize(n * batch.d);
  for (std::size_t i = 0; i < n; ++i) {
    sample_point(dist, rng, {batch.points.data() + i * batch.d, batch.d});
  }
  return batch;
}

SampleBatch sample(const Distribution& dist, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  return sample(dist, n, rng);
}

double log_ratio(const Distribution& p, const Distribution& q,
                 std::span<const double> x) {
  const double lq = q.log_density(x);
  if (lq == kNegInf) {
    throw Error(ErrorCode::kDomain,
                "q(x) = 0; the density ratio is undefined at this point");
  }
  return p.log_density(x) - lq;
}

// ---------------------------------------------------------------------------
// Spec-string parser.

namespace {

class SpecParser {
 public:
  explicit SpecParser(std::string_view text) : text_(text) {}

  Distribution parse_all() {
    Distribution d = parse_spec();
    if (pos_ != text_.size()) fail("expected end of spec");
    return d;
  }

 private:
  using Value = std::variant<std::vector<double>, Distribution>;
  struct Entry {
    std::size_t pos;
    Value value;
  };

  [[noreturn]] void fail(const std::string& what) const {
    std::string near = pos_ < text_.size()
                           ? " near '" + std::string(text_.substr(pos_, 12)) + "'"
                           : " at end of input";
    throw ParseError(pos_, what + near);
  }
  [[noreturn]] void fail_at(std::size_t pos, const std::string& what) const {
    throw ParseError(pos, what);
  }

  bool peek(char c) const { return pos_ < text_.size() && text_[pos_] == c; }

  void expect(char c) {
    if (!peek(c)) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  std::string_view identifier() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) ||
            text_[pos_] == '_')) {
      ++pos_;
    }
    if (start == pos_) fail("expected identifier");
    return text_.substr(start, pos_ - start);
  }

  double number() {
    const char* first = text_.data() + pos_;
    const char* last = text_.data() + text_.size();
    double v = 0.0;
    auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc()) fail("expected number");
    pos_ += static_cast<std::size_t>(res.ptr - first);
    return v;
  }

  std::vector<double> vector() {
    std::vector<double> out{number()};
    while (peek(';')) {
      ++pos_;
      out.push_back(number());
    }
    return out;
  }

  Distribution parse_spec() {
    const std::size_t name_pos = pos_;
    const std::string name(identifier());
    static const std::map<std::string, std::vector<std::string>> kKeys = {
        {"gauss", {"d", "mean", "sigma"}},
        {"tgauss", {"d", "mean", "sigma"}},
        {"uniform", {"d"}},
        {"mix", {"w"}},
        {"minejoint", {"rho"}},
        {"mineprod", {"rho"}},
    };
    const auto known = kKeys.find(name);
    if (known == kKeys.end()) {
      fail_at(name_pos, "unknown distribution '" + name +
                            "' (expected gauss, tgauss, uniform, mix, "
                            "minejoint or mineprod)");
    }
    expect(':');
    std::map<std::string, Entry> entries;
    for (;;) {
      const std::size_t key_pos = pos_;
      const std::string key(identifier());
      const bool component_key =
          name == "mix" && key.size() > 1 && key[0] == 'c' &&
          std::all_of(key.begin() + 1, key.end(),
                      [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
      const auto& allowed = known->second;
      if (!component_key &&
          std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
        fail_at(key_pos, "unknown key '" + key + "' for " + name);
      }
      if (entries.count(key)) fail_at(key_pos, "duplicate key '" + key + "'");
      expect('=');
      const std::size_t value_pos = pos_;
      if (component_key) {
        expect('(');
        Distribution inner = parse_spec();
        expect(')');
        entries.emplace(key, Entry{value_pos, std::move(inner)});
      } else {
        entries.emplace(key, Entry{value_pos, vector()});
      }
      if (!peek(',')) break;
      ++pos_;
    }
    return build(name, name_pos, entries);
  }

  const std::vector<double>& numbers(const std::map<std::string, Entry>& e,
                                     const std::string& key) const {
    const auto it = e.find(key);
    if (it == e.end()) fail_at(pos_, "missing required key '" + key + "'");
    return std::get<std::vector<double>>(it->second.value);
  }

  double scalar(const std::map<std::string, Entry>& e,
                const std::string& key) const {
    const auto& v = numbers(e, key);
    if (v.size() != 1) {
      fail_at(e.at(key).pos, "expected a single number for '" + key + "'");
    }
    return v[0];
  }

  std::size_t dimension(const std::map<std::string, Entry>& e,
                        std::size_t fallback) const {
    if (!e.count("d")) return fallback;
    const double d = scalar(e, "d");
    if (!(d >= 1.0) || d != std::floor(d)) {
      fail_at(e.at("d").pos, "d must be a positive integer");
    }
    return static_cast<std::size_t>(d);
  }

  Distribution build(const std::string& name, std::size_t name_pos,
                     const std::map<std::string, Entry>& e) const {
    try {
      if (name == "gauss" || name == "tgauss") {
        std::vector<double> mean = numbers(e, "mean");
        const std::size_t d = dimension(e, mean.size());
        if (mean.size() == 1 && d > 1) mean.assign(d, mean[0]);
        if (mean.size() != d) {
          fail_at(e.at("mean").pos, "mean has " + std::to_string(mean.size()) +
                                        " entries but d=" + std::to_string(d));
        }
        const double sigma = scalar(e, "sigma");
        return name == "gauss" ? gaussian(std::move(mean), sigma)
                               : truncated_gaussian(std::move(mean), sigma);
      }
      if (name == "uniform") return uniform(dimension(e, 1));
      if (name == "minejoint") return mine_pair(scalar(e, "rho")).first;
      if (name == "mineprod") return mine_pair(scalar(e, "rho")).second;
      // mix
      const std::vector<double> weights = numbers(e, "w");
      std::vector<Distribution> comps;
      for (std::size_t c = 1; c <= weights.size(); ++c) {
        const auto it = e.find("c" + std::to_string(c));
        if (it == e.end()) {
          fail_at(pos_, "missing component 'c" + std::to_string(c) + "'");
        }
        comps.push_back(std::get<Distribution>(it->second.value));
      }
      if (e.size() != weights.size() + 1) {
        fail_at(name_pos, "mixture has more components than weights");
      }
      return mixture(std::move(comps), weights);
    } catch (const ParseError&) {
      throw;
    } catch (const Error& err) {
      throw ParseError(name_pos, err.what());
    }
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

Distribution parse_distribution(std::string_view text) {
  return SpecParser(text).parse_all();
}

}  // namespace divest
