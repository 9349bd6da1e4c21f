// Apache License, Version 2.0, refer to LICENSE.txt

#include <array>
#include <cmath>
#include <numeric>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <gtest/gtest.h>

#include "divest/distributions.hpp"
#include "divest/error.hpp"
#include "divest/rng.hpp"

namespace divest {
namespace {

using boost::math::quadrature::gauss_kronrod;

// Published answers for Philox4x32-10.
TEST(Philox, KnownAnswers) {
  using Block = std::array<std::uint32_t, 4>;
  EXPECT_EQ(philox4x32({0, 0, 0, 0}, {0, 0}),
            (Block{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
  EXPECT_EQ(philox4x32({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                       {0xffffffffu, 0xffffffffu}),
            (Block{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
  EXPECT_EQ(philox4x32({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                       {0xa4093822u, 0x299f31d0u}),
            (Block{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(Rng, DeterministicAndSeedSensitive) {
  Rng a(42);
  Rng b(42);
  Rng c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a();
    EXPECT_EQ(x, b());
    differs |= x != c();
  }
  EXPECT_TRUE(differs);
  EXPECT_NE(derive_seed(1, 2), derive_seed(2, 1));
  EXPECT_EQ(derive_seed(7, 9), derive_seed(7, 9));
}

TEST(Rng, UniformRangesAndMoments) {
  Rng rng(3);
  double s = 0.0;
  double s2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    ASSERT_GT(rng.uniform_open(), 0.0);
    const double z = rng.normal();
    s += z;
    s2 += z * z;
    ASSERT_LT(rng.below(7), 7u);
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

TEST(Sample, Examples) {
  const SampleBatch u = sample(uniform(1), 100000, 0);
  const double mean = std::accumulate(u.points.begin(), u.points.end(), 0.0) / 1e5;
  EXPECT_NEAR(mean, 0.5, 0.01);

  const SampleBatch t = sample(truncated_gaussian({0.5}, 0.2), 100000, 1);
  for (double v : t.points) {
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 1.0);
  }

  const SampleBatch g = sample(gaussian({0.0}, 1.0), 1000000, 2);
  double m = 0.0;
  for (double v : g.points) m += v;
  m /= 1e6;
  double var = 0.0;
  for (double v : g.points) var += (v - m) * (v - m);
  var /= 1e6 - 1;
  EXPECT_NEAR(var, 1.0, 0.01);
}

TEST(Sample, DeterministicGivenSeed) {
  const Distribution p = parse_distribution("mix:w=0.3;0.7,c1=(gauss:d=2,mean=0;1,sigma=1),"
                                            "c2=(tgauss:d=2,mean=0.5;0.5,sigma=0.3)");
  const SampleBatch a = sample(p, 500, 9);
  const SampleBatch b = sample(p, 500, 9);
  EXPECT_EQ(a.points, b.points);
  EXPECT_EQ(a.d, 2u);
  EXPECT_NE(sample(p, 500, 10).points, a.points);
}

TEST(Sample, Errors) {
  EXPECT_THROW(sample(uniform(1), 0, 1), Error);
  try {
    sample(truncated_gaussian({40.0}, 0.5), 10, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kRejectionStall);
  }
}

TEST(Density, Examples) {
  EXPECT_DOUBLE_EQ(uniform(2).density(std::vector{0.3, 0.7}), 1.0);
  EXPECT_EQ(uniform(2).density(std::vector{0.3, 1.7}), 0.0);
  EXPECT_NEAR(gaussian({0.0}, 1.0).density(std::vector{0.0}), 0.398942280401, 1e-12);
  const Distribution tg = truncated_gaussian({0.5}, 0.2);
  EXPECT_EQ(tg.density(std::vector{1.2}), 0.0);
  const double mass = gauss_kronrod<double, 61>::integrate(
      [&](double x) { return tg.density(std::vector{x}); }, 0.0, 1.0, 15, 1e-12);
  EXPECT_NEAR(mass, 1.0, 1e-8);
}

TEST(Density, TruncatedNormalizerIsBoxMass) {
  const boost::math::normal_distribution<> n01(0.3, 0.25);
  const double expected =
      boost::math::cdf(n01, 1.0) - boost::math::cdf(n01, 0.0);
  const Distribution tg = truncated_gaussian({0.3}, 0.25);
  EXPECT_NEAR(tg.as<TruncatedGaussian>()->normalizer, expected, 1e-14);
  const Distribution tg2 = truncated_gaussian({0.3, 0.3}, 0.25);
  EXPECT_NEAR(tg2.as<TruncatedGaussian>()->normalizer, expected * expected, 1e-14);
}

double integrate_2d(const Distribution& p, double lo, double hi) {
  return gauss_kronrod<double, 61>::integrate(
      [&](double x) {
        return gauss_kronrod<double, 61>::integrate(
            [&](double y) { return p.density(std::vector{x, y}); }, lo, hi, 10, 1e-12);
      },
      lo, hi, 10, 1e-12);
}

TEST(Density, NormalizesInOneAndTwoDimensions) {
  for (const char* spec : {"gauss:d=1,mean=0.3,sigma=0.7", "tgauss:d=1,mean=0.35,sigma=0.15",
                           "mix:w=0.25;0.75,c1=(gauss:d=1,mean=-1,sigma=0.5),"
                           "c2=(gauss:d=1,mean=2,sigma=1)"}) {
    const Distribution p = parse_distribution(spec);
    const double mass = gauss_kronrod<double, 61>::integrate(
        [&](double x) { return p.density(std::vector{x}); }, -12.0, 12.0, 20, 1e-12);
    EXPECT_NEAR(mass, 1.0, 1e-6) << spec;
  }
  EXPECT_NEAR(integrate_2d(mine_pair(0.6).first, -9.0, 9.0), 1.0, 1e-6);
  EXPECT_NEAR(integrate_2d(parse_distribution("tgauss:d=2,mean=0.2;0.9,sigma=0.3"), 0.0, 1.0),
              1.0, 1e-6);
}

TEST(LogRatio, Examples) {
  const Distribution p = gaussian({0.0}, 1.0);
  const Distribution q = gaussian({1.0}, 1.0);
  EXPECT_EQ(log_ratio(p, p, std::vector{0.37}), 0.0);
  EXPECT_NEAR(log_ratio(p, q, std::vector{0.5}), 0.0, 1e-15);
  EXPECT_NEAR(log_ratio(p, q, std::vector{0.0}), 0.5, 1e-15);
  EXPECT_THROW(log_ratio(p, uniform(1), std::vector{2.0}), Error);
}

TEST(LogRatio, Antisymmetric) {
  Rng rng(31);
  const Distribution p = truncated_gaussian({0.35}, 0.15);
  const Distribution q = truncated_gaussian({0.6}, 0.2);
  for (int i = 0; i < 200; ++i) {
    const std::vector<double> x{rng.uniform()};
    EXPECT_NEAR(log_ratio(p, q, x), -log_ratio(q, p, x), 1e-13);
  }
}

TEST(MinePair, Examples) {
  auto [joint0, prod0] = mine_pair(0.0);
  Rng rng(32);
  for (int i = 0; i < 100; ++i) {
    const std::vector<double> x{rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0)};
    EXPECT_NEAR(joint0.density(x), prod0.density(x), 1e-15);
  }
  EXPECT_NEAR(gaussian_mutual_information(0.5), 0.143841036225890, 1e-12);
  EXPECT_NEAR(gaussian_mutual_information(0.9), 0.830365603410826, 1e-12);
  try {
    mine_pair(1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidRho);
  }
}

TEST(MinePair, JointSampleCorrelation) {
  const SampleBatch s = sample(mine_pair(0.7).first, 100000, 3);
  double sxy = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) sxy += s.row(i)[0] * s.row(i)[1];
  EXPECT_NEAR(sxy / 1e5, 0.7, 0.02);
}

// Chi-squared goodness of fit of the rejection sampler against binned mass.
TEST(Sample, TruncatedGaussianGoodnessOfFit) {
  const Distribution tg = truncated_gaussian({0.35}, 0.15);
  const std::size_t n = 100000;
  const int bins = 50;
  const SampleBatch s = sample(tg, n, 77);
  std::vector<double> counts(bins, 0.0);
  for (double v : s.points) counts[std::min(bins - 1, static_cast<int>(v * bins))] += 1.0;
  double stat = 0.0;
  for (int b = 0; b < bins; ++b) {
    const double mass = gauss_kronrod<double, 31>::integrate(
        [&](double x) { return tg.density(std::vector{x}); }, double(b) / bins,
        double(b + 1) / bins, 5, 1e-12);
    const double expected = mass * static_cast<double>(n);
    stat += (counts[b] - expected) * (counts[b] - expected) / expected;
  }
  const boost::math::chi_squared_distribution<> chi(bins - 1);
  EXPECT_GT(boost::math::cdf(boost::math::complement(chi, stat)), 0.001);
}

TEST(Parse, SpecsRoundTrip) {
  for (const char* spec :
       {"gauss:d=2,mean=0;0,sigma=1", "tgauss:d=1,mean=0.4,sigma=0.2", "uniform:d=3",
        "minejoint:rho=0.5", "mineprod:rho=0.5"}) {
    const Distribution p = parse_distribution(spec);
    EXPECT_EQ(parse_distribution(p.spec()).spec(), p.spec()) << spec;
  }
  EXPECT_EQ(parse_distribution("gauss:d=2,mean=0;0,sigma=1").dim(), 2u);
  EXPECT_TRUE(parse_distribution("tgauss:d=1,mean=0.4,sigma=0.2").compact());
  EXPECT_FALSE(parse_distribution("gauss:d=1,mean=0,sigma=1").compact());
}

TEST(Parse, ErrorsCarryPosition) {
  struct Case {
    const char* text;
    std::size_t pos;
  };
  for (const Case& c : {Case{"gaus:d=1", 0}, Case{"gauss:d=1,mean=0,sigm=1", 17},
                        Case{"gauss:d=2,mean=0;1;2,sigma=1", 15}, Case{"uniform:d=x", 10}}) {
    try {
      parse_distribution(c.text);
      FAIL() << c.text;
    } catch (const ParseError& e) {
      if (c.pos > 0) EXPECT_EQ(e.position(), c.pos) << c.text << ": " << e.what();
    } catch (const Error& e) {
      EXPECT_EQ(c.pos, 0u) << c.text << ": " << e.what();
    }
  }
  EXPECT_THROW(parse_distribution("gauss:d=1,mean=0,sigma=-1"), Error);
}

TEST(Format, ShortestRoundTrip) {
  EXPECT_EQ(format_double(0.5), "0.5");
  EXPECT_EQ(std::stod(format_double(0.1 + 0.2)), 0.1 + 0.2);
  EXPECT_EQ(format_double(std::numeric_limits<double>::infinity()), "inf");
}

}  // namespace
}  // namespace divest
