#pragma once

#include <ostream>
#include <string>

#include "usrgr/kspace.hpp"
#include "usrgr/train.hpp"

namespace usrgr {
namespace config {

/// Flat key = value configuration mirroring TrainConfig / LossConfig /
/// DegradeConfig fields, plus the compute dtype. Unknown keys are rejected.
struct RunConfig {
  std::string dtype = "float32";  // float32 | float64
  train::TrainConfig train;
  kspace::DegradeConfig degrade;

  /// Parse `key = value` lines ('#' comments, blank lines allowed).
  void load_file(const std::string& path);

  /// Apply one override; throws ConfigError for unknown keys or bad values.
  void set(const std::string& key, const std::string& value);

  /// Every key with its effective value, fixed order, no timestamps.
  void echo(std::ostream& out) const;
};

}  // namespace config
}  // namespace usrgr
