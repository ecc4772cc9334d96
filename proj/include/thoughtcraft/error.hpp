#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace thoughtcraft {

enum class Errc {
  FileMissing,
  MalformedRecord,
  DanglingReference,
  DependencyCycle,
  NoBase,
  MultipleBases,
  UnknownId,
  DifficultyOutOfRange,
  EpisodeFinished,
  UnknownFeature,
  InvalidZ,
  DimensionMismatch,
  EmptyMask,
  InvalidDistribution,
  LengthMismatch,
  EmptyBuffer,
  NonFiniteGradient,
  InvalidCounts,
  SchemaMismatch,
  UnknownAction,
  InvalidCount,
  ConfigInvalid,
  EnvironmentFailure,
};

constexpr std::string_view errc_name(Errc e) {
  switch (e) {
    case Errc::FileMissing: return "FileMissing";
    case Errc::MalformedRecord: return "MalformedRecord";
    case Errc::DanglingReference: return "DanglingReference";
    case Errc::DependencyCycle: return "DependencyCycle";
    case Errc::NoBase: return "NoBase";
    case Errc::MultipleBases: return "MultipleBases";
    case Errc::UnknownId: return "UnknownId";
    case Errc::DifficultyOutOfRange: return "DifficultyOutOfRange";
    case Errc::EpisodeFinished: return "EpisodeFinished";
    case Errc::UnknownFeature: return "UnknownFeature";
    case Errc::InvalidZ: return "InvalidZ";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::EmptyMask: return "EmptyMask";
    case Errc::InvalidDistribution: return "InvalidDistribution";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::EmptyBuffer: return "EmptyBuffer";
    case Errc::NonFiniteGradient: return "NonFiniteGradient";
    case Errc::InvalidCounts: return "InvalidCounts";
    case Errc::SchemaMismatch: return "SchemaMismatch";
    case Errc::UnknownAction: return "UnknownAction";
    case Errc::InvalidCount: return "InvalidCount";
    case Errc::ConfigInvalid: return "ConfigInvalid";
    case Errc::EnvironmentFailure: return "EnvironmentFailure";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (and tests) can dispatch on the kind rather than the message.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace thoughtcraft
