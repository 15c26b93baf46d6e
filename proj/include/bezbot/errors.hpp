#pragma once

#include <stdexcept>
#include <string>

namespace bezbot {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DomainError : Error {
  using Error::Error;
};

// Image pipeline
struct NoForeground : Error {
  NoForeground() : Error("binary image has no foreground pixels") {}
  using Error::Error;
};
struct BranchedSkeleton : Error {
  using Error::Error;
};
struct CyclicSkeleton : Error {
  using Error::Error;
};
struct FitUnderdetermined : Error {
  using Error::Error;
};

// View-tagged wrapper for per-view encoding failures.
struct EncodingError : Error {
  int view;
  EncodingError(int view_id, const std::string& what)
      : Error("view " + std::to_string(view_id) + ": " + what), view(view_id) {}
};

// Dynamics model
struct DivergedIntegration : Error {
  using Error::Error;
};
struct TrainingDiverged : Error {
  int epoch;
  TrainingDiverged(int at_epoch, const std::string& what)
      : Error(what), epoch(at_epoch) {}
};
struct ModelFormatError : Error {
  using Error::Error;
};

// Plant / rendering
struct ViewportOverflow : Error {
  using Error::Error;
};

// Obstacle avoidance
struct DegenerateContact : Error {
  DegenerateContact() : Error("closest point coincides with obstacle; escape direction undefined") {}
};

// Harness
struct ConfigError : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};

}  // namespace bezbot
