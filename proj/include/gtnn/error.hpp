#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gtnn {

enum class Errc {
  kZeroVector,
  kNegativeValue,
  kDimensionMismatch,
  kBadMagic,
  kVersionMismatch,
  kTruncatedFile,
  kIo,
  kParse,
  kEmptyStore,
  kRangeOutOfBounds,
  kStaleIndex,
  kUnsupportedNegativeQuery,
  kInvalidLambda,
  kInvalidN,
  kInvalidC,
  kInvalidArgument,
  kDegenerateSamples,
  kOutOfRange,
  kNoValidPools,
  kInvalidSpec,
  kInfeasibleTarget,
};

constexpr std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::kZeroVector: return "ZeroVector";
    case Errc::kNegativeValue: return "NegativeValue";
    case Errc::kDimensionMismatch: return "DimensionMismatch";
    case Errc::kBadMagic: return "BadMagic";
    case Errc::kVersionMismatch: return "VersionMismatch";
    case Errc::kTruncatedFile: return "TruncatedFile";
    case Errc::kIo: return "IoError";
    case Errc::kParse: return "ParseError";
    case Errc::kEmptyStore: return "EmptyStore";
    case Errc::kRangeOutOfBounds: return "RangeOutOfBounds";
    case Errc::kStaleIndex: return "StaleIndex";
    case Errc::kUnsupportedNegativeQuery: return "UnsupportedNegativeQuery";
    case Errc::kInvalidLambda: return "InvalidLambda";
    case Errc::kInvalidN: return "InvalidN";
    case Errc::kInvalidC: return "InvalidC";
    case Errc::kInvalidArgument: return "InvalidArgument";
    case Errc::kDegenerateSamples: return "DegenerateSamples";
    case Errc::kOutOfRange: return "OutOfRange";
    case Errc::kNoValidPools: return "NoValidPools";
    case Errc::kInvalidSpec: return "InvalidSpec";
    case Errc::kInfeasibleTarget: return "InfeasibleTarget";
  }
  return "Unknown";
}

/// Library-wide exception. `code()` identifies the failure class.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

  /// True for failures caused by files or their contents (the CLI maps these to exit 1).
  bool is_io() const noexcept {
    switch (code_) {
      case Errc::kBadMagic:
      case Errc::kVersionMismatch:
      case Errc::kTruncatedFile:
      case Errc::kIo:
      case Errc::kParse:
        return true;
      default:
        return false;
    }
  }

 private:
  Errc code_;
};

}  // namespace gtnn
