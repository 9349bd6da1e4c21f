// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace divest {

enum class ErrorCode {
  kDomain,
  kUnsupportedKind,
  kDimensionMismatch,
  kInvalidRequest,
  kRejectionStall,
  kInvalidRho,
  kInvalidSigma,
  kDimensionTooHigh,
  kNonIntegrable,
  kTransformMismatch,
  kNonFinite,
  kDegenerateFit,
  kParse,
  kIo,
};

std::string_view error_code_name(ErrorCode code);

// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Raised by the spec-string parser; carries the byte offset of the bad token.
class ParseError : public Error {
 public:
  ParseError(std::size_t position, const std::string& what)
      : Error(ErrorCode::kParse,
              "at position " + std::to_string(position) + ": " + what),
        position_(position) {}

  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

}  // namespace divest
