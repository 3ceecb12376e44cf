#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cadvlm {

enum class Errc {
  EmptySketch,
  DegenerateExtent,
  OutOfBox,
  TokenOutOfRange,
  InvalidSketch,
  DanglingRef,
  CollinearPoints,
  ShapeMismatch,
  GraphMissing,
  NoGrads,
  StepOutOfRange,
  BatchTooSmall,
  EmptyTarget,
  WrongMode,
  ModeMismatch,
  EmptyCorpus,
  ParseError,
  TooFewEntities,
  CheckpointMismatch,
  InvalidP,
  NanLoss,
  Io,
};

std::string_view errc_name(Errc code);

// Every failure raised by the library carries one of the codes above so
// callers (and the CLI exit-code mapping) can branch without string matching.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

inline std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::EmptySketch: return "EmptySketch";
    case Errc::DegenerateExtent: return "DegenerateExtent";
    case Errc::OutOfBox: return "OutOfBox";
    case Errc::TokenOutOfRange: return "TokenOutOfRange";
    case Errc::InvalidSketch: return "InvalidSketch";
    case Errc::DanglingRef: return "DanglingRef";
    case Errc::CollinearPoints: return "CollinearPoints";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::GraphMissing: return "GraphMissing";
    case Errc::NoGrads: return "NoGrads";
    case Errc::StepOutOfRange: return "StepOutOfRange";
    case Errc::BatchTooSmall: return "BatchTooSmall";
    case Errc::EmptyTarget: return "EmptyTarget";
    case Errc::WrongMode: return "WrongMode";
    case Errc::ModeMismatch: return "ModeMismatch";
    case Errc::EmptyCorpus: return "EmptyCorpus";
    case Errc::ParseError: return "ParseError";
    case Errc::TooFewEntities: return "TooFewEntities";
    case Errc::CheckpointMismatch: return "CheckpointMismatch";
    case Errc::InvalidP: return "InvalidP";
    case Errc::NanLoss: return "NanLoss";
    case Errc::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace cadvlm
