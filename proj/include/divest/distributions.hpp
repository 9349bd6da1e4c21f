// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "divest/rng.hpp"

namespace divest {

class Distribution;

// Isotropic N(mean, sigma^2 I).
struct Gaussian {
  std::vector<double> mean;
  double sigma = 1.0;
};

// Isotropic Gaussian conditioned on the unit cube [0,1]^d.
struct TruncatedGaussian {
  std::vector<double> mean;
  double sigma = 1.0;
  double normalizer = 1.0;  // parent mass of the cube
};

// Uniform on [0,1]^d.
struct Uniform {
  std::size_t d = 1;
};

struct Mixture {
  std::vector<Distribution> components;
  std::vector<double> weights;
};

// Standard bivariate Gaussian with correlation rho.
struct GaussianJoint2d {
  double rho = 0.0;
};

// Product of the two standard-normal marginals of GaussianJoint2d(rho).
struct MarginalProduct2d {
  double rho = 0.0;
};

// A sampleable law with an evaluable Lebesgue density. Immutable value type.
class Distribution {
 public:
  using Variant = std::variant<Gaussian, TruncatedGaussian, Uniform, Mixture,
                               GaussianJoint2d, MarginalProduct2d>;

  explicit Distribution(Variant v);

  const Variant& variant() const { return v_; }
  std::size_t dim() const { return dim_; }

  double log_density(std::span<const double> x) const;
  double density(std::span<const double> x) const;
  bool in_support(std::span<const double> x) const;
  // True when the support is contained in [0,1]^d.
  bool compact() const;

  // Canonical spec string; parse_distribution(spec()) reproduces *this.
  std::string spec() const;

  template <class T>
  const T* as() const {
    return std::get_if<T>(&v_);
  }

 private:
  Variant v_;
  std::size_t dim_;
};

Distribution gaussian(std::vector<double> mean, double sigma);
Distribution truncated_gaussian(std::vector<double> mean, double sigma);
Distribution uniform(std::size_t d);
Distribution mixture(std::vector<Distribution> components,
                     std::vector<double> weights);
// (joint, product of marginals); KL between them is -0.5 log(1 - rho^2).
std::pair<Distribution, Distribution> mine_pair(double rho);
double gaussian_mutual_information(double rho);

// Points are stored row-major: point i is points[i*d .. i*d + d).
struct SampleBatch {
  std::size_t d = 1;
  std::vector<double> points;
  std::uint64_t seed = 0;
  std::string source;

  std::size_t size() const { return d == 0 ? 0 : points.size() / d; }
  std::span<const double> row(std::size_t i) const {
    return {points.data() + i * d, d};
  }
};

SampleBatch sample(const Distribution& dist, std::size_t n, Rng& rng);
SampleBatch sample(const Distribution& dist, std::size_t n, std::uint64_t seed);

// log p(x) - log q(x). Throws DomainError where q(x) = 0.
double log_ratio(const Distribution& p, const Distribution& q,
                 std::span<const double> x);

// Grammar:  name:key=value,...   vectors use ';', components use (...).
//   gauss:d=2,mean=0;0,sigma=1      tgauss:d=1,mean=0.4,sigma=0.2
//   uniform:d=1                     mix:w=0.5;0.5,c1=(...),c2=(...)
//   minejoint:rho=0.5               mineprod:rho=0.5
// Throws ParseError with the byte offset of the offending token.
Distribution parse_distribution(std::string_view text);

// Shortest round-trip decimal form of a double ('.' decimal, no locale).
std::string format_double(double value);

}  // namespace divest
