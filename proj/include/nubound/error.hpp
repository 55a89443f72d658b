#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nubound {

enum class ErrorCode {
  InvalidArgument,
  NonPositiveDefinite,
  OrderViolation,
  SingularMatrix,
  DomainError,
  NegativeBound,
  DomainEscape,
  InversionFailure,
  InfeasibleSearchBox,
  SupportViolation,
  TieError,
  RankDeficient,
  EmptyGrid,
  DuplicatePoints,
  TooFewPoints,
  InvalidNu,
  DegenerateBootstrap,
  NonConvergence,
  Io,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NonPositiveDefinite: return "NonPositiveDefinite";
    case ErrorCode::OrderViolation: return "OrderViolation";
    case ErrorCode::SingularMatrix: return "SingularMatrix";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::NegativeBound: return "NegativeBound";
    case ErrorCode::DomainEscape: return "DomainEscape";
    case ErrorCode::InversionFailure: return "InversionFailure";
    case ErrorCode::InfeasibleSearchBox: return "InfeasibleSearchBox";
    case ErrorCode::SupportViolation: return "SupportViolation";
    case ErrorCode::TieError: return "TieError";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::EmptyGrid: return "EmptyGrid";
    case ErrorCode::DuplicatePoints: return "DuplicatePoints";
    case ErrorCode::TooFewPoints: return "TooFewPoints";
    case ErrorCode::InvalidNu: return "InvalidNu";
    case ErrorCode::DegenerateBootstrap: return "DegenerateBootstrap";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

/// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

namespace detail {

inline void require(bool cond, ErrorCode code, const char* msg) {
  if (!cond) throw Error(code, msg);
}

}  // namespace detail
}  // namespace nubound
