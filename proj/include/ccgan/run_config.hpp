#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ccgan/phantom.hpp"
#include "ccgan/tracking.hpp"
#include "ccgan/training.hpp"

namespace ccgan {

// Single plain-text configuration for every subcommand:
//
//   version = 1
//   [synth]
//   preset = desk
//   [train]
//   epochs = 20
//   ...
//
// '#' and ';' start comments. Keys are unique within a section and unknown
// sections or keys are rejected with their line number. Relative paths are
// resolved against the file's directory.

inline constexpr int kRunConfigVersion = 1;

struct SynthSection {
  std::uint64_t seed = 0;
  SynthPreset preset = desk_preset();  // after overrides
};

struct EvalSection {
  double roi_axial_mm = 4.0;  // window around each point target
  double roi_lateral_mm = 4.0;
  double deep_depth_mm = 9.0;  // targets at or below this depth count as deep
  std::filesystem::path rois;     // optional; empty means "pass on the command line"
  std::filesystem::path targets;
};

struct TrackSection {
  TrackingConfig tracking;
  std::filesystem::path mask;
};

struct RunConfig {
  int version = kRunConfigVersion;
  SynthSection synth;
  TrainConfig train;
  EvalSection eval;
  TrackSection track;
};

/// Parses configuration text. `overrides` are "section.key=value" strings
/// applied after the file, replacing any value it set.
RunConfig parse_run_config(const std::string& text, const std::vector<std::string>& overrides = {},
                           const std::filesystem::path& base_dir = {});

/// Defaults when `path` is empty.
RunConfig load_run_config(const std::optional<std::filesystem::path>& path,
                          const std::vector<std::string>& overrides = {});

/// Resolved configuration in the same format; parses back to an equal config.
std::string snapshot(const RunConfig& config);

}  // namespace ccgan
