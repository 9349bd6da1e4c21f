// Apache License, Version 2.0, refer to LICENSE.txt

#include "divest/divergence.hpp"

#include <cmath>

#include "divest/error.hpp"

namespace divest {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDomain: return "DomainError";
    case ErrorCode::kUnsupportedKind: return "UnsupportedKind";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kInvalidRequest: return "InvalidRequest";
    case ErrorCode::kRejectionStall: return "RejectionStall";
    case ErrorCode::kInvalidRho: return "InvalidRho";
    case ErrorCode::kInvalidSigma: return "InvalidSigma";
    case ErrorCode::kDimensionTooHigh: return "DimensionTooHigh";
    case ErrorCode::kNonIntegrable: return "NonIntegrable";
    case ErrorCode::kTransformMismatch: return "TransformMismatch";
    case ErrorCode::kNonFinite: return "NonFinite";
    case ErrorCode::kDegenerateFit: return "DegenerateFit";
    case ErrorCode::kParse: return "ParseError";
    case ErrorCode::kIo: return "IoError";
  }
  return "Error";
}

std::string_view to_string(DivergenceKind kind) {
  switch (kind) {
    case DivergenceKind::kKL: return "kl";
    case DivergenceKind::kKLDV: return "kl-dv";
    case DivergenceKind::kChi2: return "chi2";
    case DivergenceKind::kH2: return "h2";
    case DivergenceKind::kTV: return "tv";
  }
  return "?";
}

DivergenceKind parse_divergence(std::string_view tag) {
  if (tag == "kl") return DivergenceKind::kKL;
  if (tag == "kl-dv") return DivergenceKind::kKLDV;
  if (tag == "chi2") return DivergenceKind::kChi2;
  if (tag == "h2") return DivergenceKind::kH2;
  if (tag == "tv") return DivergenceKind::kTV;
  throw Error(ErrorCode::kInvalidRequest,
              "unknown divergence '" + std::string(tag) +
                  "' (expected kl, kl-dv, chi2, h2 or tv)");
}

namespace {

void check_admissible(DivergenceKind kind, double x) {
  if (kind == DivergenceKind::kKLDV) {
    throw Error(ErrorCode::kUnsupportedKind,
                "kl-dv has no measurement function");
  }
  if (kind == DivergenceKind::kH2 && !(x < kH2Guard)) {
    throw Error(ErrorCode::kDomain,
                "h2 measurement function requires x < 1, got " +
                    std::to_string(x));
  }
}

}  // namespace

double h_value(DivergenceKind kind, double x) {
  check_admissible(kind, x);
  switch (kind) {
    case DivergenceKind::kKL: return std::expm1(x);
    case DivergenceKind::kChi2: return x + 0.25 * x * x;
    case DivergenceKind::kH2: return x / (1.0 - x);
    case DivergenceKind::kTV: return x;
    case DivergenceKind::kKLDV: break;
  }
  return 0.0;
}

double h_derivative(DivergenceKind kind, double x) {
  check_admissible(kind, x);
  switch (kind) {
    case DivergenceKind::kKL: return std::exp(x);
    case DivergenceKind::kChi2: return 1.0 + 0.5 * x;
    case DivergenceKind::kH2: {
      const double u = 1.0 - x;
      return 1.0 / (u * u);
    }
    case DivergenceKind::kTV: return 1.0;
    case DivergenceKind::kKLDV: break;
  }
  return 0.0;
}

double optimal_potential(DivergenceKind kind, double ratio) {
  if (!(ratio > 0.0)) {
    throw Error(ErrorCode::kDomain,
                "density ratio must be positive, got " + std::to_string(ratio));
  }
  switch (kind) {
    case DivergenceKind::kKL:
    case DivergenceKind::kKLDV: return std::log(ratio);
    case DivergenceKind::kChi2: return 2.0 * (ratio - 1.0);
    case DivergenceKind::kH2: return 1.0 - 1.0 / std::sqrt(ratio);
    case DivergenceKind::kTV: return ratio >= 1.0 ? 1.0 : -1.0;
  }
  return 0.0;
}

double optimal_potential_from_log(DivergenceKind kind, double log_ratio) {
  if (std::isnan(log_ratio) || log_ratio == -HUGE_VAL) {
    throw Error(ErrorCode::kDomain, "log density ratio is not finite");
  }
  switch (kind) {
    case DivergenceKind::kKL:
    case DivergenceKind::kKLDV: return log_ratio;
    case DivergenceKind::kChi2: return 2.0 * std::expm1(log_ratio);
    case DivergenceKind::kH2: return -std::expm1(-0.5 * log_ratio);
    case DivergenceKind::kTV: return log_ratio >= 0.0 ? 1.0 : -1.0;
  }
  return 0.0;
}

}  // namespace divest
