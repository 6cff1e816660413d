#ifndef JACKSON_ERROR_HPP
#define JACKSON_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace jackson {

enum class ErrorCode {
  NegativeRate,
  RowSumExceedsOne,
  NoExogenousArrivals,
  NonInvertibleRouting,
  UnstableNetwork,
  NotAcyclic,
  RepeatedNode,
  NotOvertakeFree,
  NotTandem,
  InvalidProbability,
  UnreachablePath,
  CapTooSmall,
  StateSpaceTooLarge,
  AlphaTooSmall,
  NoConvergence,
  MaxEventsExceeded,
  TooFewSamples,
  InvalidArgument,
  ParseError,
  IoError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NegativeRate: return "NegativeRate";
    case ErrorCode::RowSumExceedsOne: return "RowSumExceedsOne";
    case ErrorCode::NoExogenousArrivals: return "NoExogenousArrivals";
    case ErrorCode::NonInvertibleRouting: return "NonInvertibleRouting";
    case ErrorCode::UnstableNetwork: return "UnstableNetwork";
    case ErrorCode::NotAcyclic: return "NotAcyclic";
    case ErrorCode::RepeatedNode: return "RepeatedNode";
    case ErrorCode::NotOvertakeFree: return "NotOvertakeFree";
    case ErrorCode::NotTandem: return "NotTandem";
    case ErrorCode::InvalidProbability: return "InvalidProbability";
    case ErrorCode::UnreachablePath: return "UnreachablePath";
    case ErrorCode::CapTooSmall: return "CapTooSmall";
    case ErrorCode::StateSpaceTooLarge: return "StateSpaceTooLarge";
    case ErrorCode::AlphaTooSmall: return "AlphaTooSmall";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::MaxEventsExceeded: return "MaxEventsExceeded";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

// Every failure raised by the library carries one of the codes above so that
// callers (and the CLI exit-code table) can dispatch without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace jackson

#endif  // JACKSON_ERROR_HPP
