// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <array>
#include <string>
#include <string_view>

namespace divest {

// KL_DV is the Donsker-Varadhan objective for KL. It has no measurement
// function h; its objective lives in the estimator.
enum class DivergenceKind { kKL, kKLDV, kChi2, kH2, kTV };

inline constexpr std::array<DivergenceKind, 4> kHFormKinds = {
    DivergenceKind::kKL, DivergenceKind::kChi2, DivergenceKind::kH2,
    DivergenceKind::kTV};

// "kl", "kl-dv", "chi2", "h2", "tv".
std::string_view to_string(DivergenceKind kind);
DivergenceKind parse_divergence(std::string_view tag);

// Inputs at or above this are rejected for H2.
inline constexpr double kH2Guard = 1.0 - 1e-12;

// Measurement function h: KL e^x - 1, CHI2 x + x^2/4, H2 x/(1-x), TV x.
double h_value(DivergenceKind kind, double x);
double h_derivative(DivergenceKind kind, double x);

// Attaining potential as a function of the density ratio r = dmu/dnu.
// KL log r, CHI2 2(r-1), H2 1 - r^{-1/2}, TV sign with ties (r = 1) to +1.
double optimal_potential(DivergenceKind kind, double ratio);

// Same, from log r; avoids forming r when the log-ratio is extreme.
double optimal_potential_from_log(DivergenceKind kind, double log_ratio);

}  // namespace divest
