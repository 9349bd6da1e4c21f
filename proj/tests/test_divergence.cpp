// Apache License, Version 2.0, refer to LICENSE.txt

#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "divest/divergence.hpp"
#include "divest/error.hpp"
#include "divest/rng.hpp"

namespace divest {
namespace {

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::kIo;
}

TEST(HValue, Examples) {
  EXPECT_DOUBLE_EQ(h_value(DivergenceKind::kKL, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(h_value(DivergenceKind::kChi2, 2.0), 3.0);
  EXPECT_DOUBLE_EQ(h_value(DivergenceKind::kH2, 0.5), 1.0);
  EXPECT_DOUBLE_EQ(h_value(DivergenceKind::kTV, -0.3), -0.3);
}

TEST(HValue, Errors) {
  EXPECT_EQ(code_of([] { h_value(DivergenceKind::kH2, 1.0); }), ErrorCode::kDomain);
  EXPECT_EQ(code_of([] { h_value(DivergenceKind::kH2, 2.0); }), ErrorCode::kDomain);
  EXPECT_EQ(code_of([] { h_value(DivergenceKind::kKLDV, 0.0); }), ErrorCode::kUnsupportedKind);
  EXPECT_EQ(code_of([] { h_derivative(DivergenceKind::kH2, 1.0); }), ErrorCode::kDomain);
  EXPECT_EQ(code_of([] { h_derivative(DivergenceKind::kKLDV, 0.0); }),
            ErrorCode::kUnsupportedKind);
}

TEST(HDerivative, Examples) {
  EXPECT_DOUBLE_EQ(h_derivative(DivergenceKind::kKL, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(h_derivative(DivergenceKind::kTV, 0.37), 1.0);
  EXPECT_DOUBLE_EQ(h_derivative(DivergenceKind::kH2, 0.5), 4.0);
  const double fd = (h_value(DivergenceKind::kH2, 0.5 + 1e-6) -
                     h_value(DivergenceKind::kH2, 0.5 - 1e-6)) / 2e-6;
  EXPECT_NEAR(fd, 4.0, 1e-6);
  EXPECT_DOUBLE_EQ(h_derivative(DivergenceKind::kChi2, 1.0), 1.5);
}

TEST(HDerivative, MatchesFiniteDifferences) {
  Rng rng(11);
  for (DivergenceKind kind : kHFormKinds) {
    for (int i = 0; i < 200; ++i) {
      const double x = kind == DivergenceKind::kH2 ? rng.uniform(-3.0, 0.9)
                                                   : rng.uniform(-3.0, 3.0);
      const double fd = (h_value(kind, x + 1e-6) - h_value(kind, x - 1e-6)) / 2e-6;
      const double exact = h_derivative(kind, x);
      EXPECT_LE(std::abs(exact - fd) / std::max(1.0, std::abs(exact)), 1e-6)
          << to_string(kind) << " x=" << x;
    }
  }
}

TEST(HValue, ConvexOnRandomTriples) {
  Rng rng(12);
  for (DivergenceKind kind : {DivergenceKind::kKL, DivergenceKind::kChi2, DivergenceKind::kH2}) {
    for (int i = 0; i < 500; ++i) {
      const double hi = kind == DivergenceKind::kH2 ? 0.99 : 4.0;
      const double a = rng.uniform(-4.0, hi);
      const double b = rng.uniform(-4.0, hi);
      const double lam = rng.uniform();
      const double mid = lam * a + (1 - lam) * b;
      EXPECT_LE(h_value(kind, mid),
                lam * h_value(kind, a) + (1 - lam) * h_value(kind, b) + 1e-12);
    }
  }
}

TEST(HValue, H2BlowsUpMonotonically) {
  double prev = h_value(DivergenceKind::kH2, 0.0);
  for (double gap = 0.5; gap > 1e-11; gap /= 2) {
    const double v = h_value(DivergenceKind::kH2, 1.0 - gap);
    EXPECT_GT(v, prev);
    prev = v;
  }
  EXPECT_GT(prev, 1e10);
}

TEST(HValue, ZeroAtZeroForAllKinds) {
  for (DivergenceKind kind : kHFormKinds) EXPECT_EQ(h_value(kind, 0.0), 0.0);
}

TEST(OptimalPotential, Examples) {
  EXPECT_DOUBLE_EQ(optimal_potential(DivergenceKind::kKL, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(optimal_potential(DivergenceKind::kChi2, 2.0), 2.0);
  EXPECT_DOUBLE_EQ(optimal_potential(DivergenceKind::kTV, 0.3), -1.0);
  EXPECT_DOUBLE_EQ(optimal_potential(DivergenceKind::kTV, 1.0), 1.0);
  EXPECT_DOUBLE_EQ(optimal_potential(DivergenceKind::kH2, 4.0), 0.5);
  EXPECT_DOUBLE_EQ(optimal_potential(DivergenceKind::kKLDV, std::exp(1.5)), 1.5);
}

TEST(OptimalPotential, Errors) {
  EXPECT_EQ(code_of([] { optimal_potential(DivergenceKind::kKL, 0.0); }), ErrorCode::kDomain);
  EXPECT_EQ(code_of([] { optimal_potential(DivergenceKind::kChi2, -1.0); }), ErrorCode::kDomain);
}

// h(f*(r)) has a closed form per kind; the plug-in identity rests on it.
TEST(OptimalPotential, MeasurementOfPotential) {
  Rng rng(13);
  for (int i = 0; i < 200; ++i) {
    const double r = std::exp(rng.uniform(-3.0, 3.0));
    EXPECT_NEAR(h_value(DivergenceKind::kKL, optimal_potential(DivergenceKind::kKL, r)), r - 1,
                1e-12 * std::max(1.0, r));
    EXPECT_NEAR(h_value(DivergenceKind::kChi2, optimal_potential(DivergenceKind::kChi2, r)),
                r * r - 1, 1e-10 * std::max(1.0, r * r));
    EXPECT_NEAR(h_value(DivergenceKind::kH2, optimal_potential(DivergenceKind::kH2, r)),
                std::sqrt(r) - 1, 1e-10 * std::max(1.0, r));
    EXPECT_NEAR(optimal_potential_from_log(DivergenceKind::kH2, std::log(r)),
                optimal_potential(DivergenceKind::kH2, r), 1e-12);
  }
}

TEST(Tags, RoundTrip) {
  for (DivergenceKind kind : {DivergenceKind::kKL, DivergenceKind::kKLDV, DivergenceKind::kChi2,
                              DivergenceKind::kH2, DivergenceKind::kTV}) {
    EXPECT_EQ(parse_divergence(to_string(kind)), kind);
  }
  EXPECT_EQ(code_of([] { parse_divergence("js"); }), ErrorCode::kInvalidRequest);
}

}  // namespace
}  // namespace divest
