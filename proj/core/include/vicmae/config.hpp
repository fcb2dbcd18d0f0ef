// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vicmae/corpus.hpp"
#include "vicmae/evalsuite.hpp"
#include "vicmae/trainer.hpp"

namespace vicmae {

inline constexpr int kConfigVersion = 1;

struct ExperimentPaths {
  /// Training manifest (pretraining, probe and finetune training split).
  std::string data;
  /// Evaluation manifest; the training manifest is used when empty.
  std::string val;
  std::string out = "runs";
};

struct EvalConfig {
  /// Temporal clips per video for multi-view evaluation.
  int k_clips = 7;
  int spatial_views = 3;
  int n_perms = 16;
  /// Frames per clip after video inflation.
  int video_frames = 4;
  int clip_stride = 1;
  std::vector<double> fractions = {0.05, 0.10, 0.25, 0.50, 0.75, 1.00};

  void validate() const;
};

/// Everything a command needs. `seed` is the only seed; it is copied into every
/// stage when the document is resolved.
struct ExperimentConfig {
  int version = kConfigVersion;
  std::uint64_t seed = 0;
  ExperimentPaths paths;
  SynthSpec corpus;
  TrainConfig train;
  ProbeSpec probe;
  FinetuneSpec finetune;
  EvalConfig eval;

  ExperimentConfig();

  Objective objective() const { return train.loss.objective; }
  /// Throws ValidationError listing every violated constraint.
  void validate() const;
  /// Copies `seed` into the stage specs.
  void propagate_seed();
};

nlohmann::json to_json(const ExperimentConfig& c);
/// Starts from defaults and applies `j`; unknown top-level keys and schema
/// versions are rejected.
ExperimentConfig experiment_from_json(const nlohmann::json& j);

/// Applies "a.b.c=value" to a JSON document. The value is parsed as JSON when
/// possible and kept as a string otherwise.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Reads `path` (or defaults when empty), applies overrides, resolves and
/// validates.
ExperimentConfig load_experiment(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

/// Seed from the VICMAE_SEED environment variable, 0 when unset.
std::uint64_t default_seed();

}  // namespace vicmae
