#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace alscd {

enum class Errc {
  BadMagic,
  UnsupportedFormat,
  TruncatedStream,
  MalformedLine,
  RangeError,
  PlacementFailure,
  UnknownTarget,
  OverlapError,
  NoValidData,
  BadStride,
  CoverageGap,
  ShapeMismatch,
  DegenerateBatch,
  OddDimension,
  BadConfig,
  EmptyDataset,
  VersionMismatch,
  ChecksumMismatch,
  SpecMismatch,
  IoError,
};

constexpr std::string_view errc_name(Errc c) {
  switch (c) {
    case Errc::BadMagic: return "BadMagic";
    case Errc::UnsupportedFormat: return "UnsupportedFormat";
    case Errc::TruncatedStream: return "TruncatedStream";
    case Errc::MalformedLine: return "MalformedLine";
    case Errc::RangeError: return "RangeError";
    case Errc::PlacementFailure: return "PlacementFailure";
    case Errc::UnknownTarget: return "UnknownTarget";
    case Errc::OverlapError: return "OverlapError";
    case Errc::NoValidData: return "NoValidData";
    case Errc::BadStride: return "BadStride";
    case Errc::CoverageGap: return "CoverageGap";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::DegenerateBatch: return "DegenerateBatch";
    case Errc::OddDimension: return "OddDimension";
    case Errc::BadConfig: return "BadConfig";
    case Errc::EmptyDataset: return "EmptyDataset";
    case Errc::VersionMismatch: return "VersionMismatch";
    case Errc::ChecksumMismatch: return "ChecksumMismatch";
    case Errc::SpecMismatch: return "SpecMismatch";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure in the library is reported through this one exception type;
/// callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

/// Parse failure tied to a 1-based line of the input.
class LineError : public Error {
 public:
  LineError(Errc code, std::size_t line, const std::string& what)
      : Error(code, "line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace alscd
