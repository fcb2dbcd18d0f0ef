// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vicmae/corpus.hpp"
#include "vicmae/network.hpp"
#include "vicmae/sampling.hpp"

namespace vicmae {

struct EvalResult {
  std::string condition;
  double top1 = 0.0;
  double top5 = 0.0;
  int n = 0;
  std::uint64_t seed = 0;
  std::string checkpoint_hash;
  /// Encoder forward passes per example (multi-view evaluation).
  int views = 1;

  nlohmann::json to_json() const;
};

/// Hex digest of a model's parameters.
std::string model_hash(const Model& model);

struct ProbeSpec {
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0;
  int epochs = 90;
  int warmup_epochs = 10;
  int batch_size = 64;
  /// Probe the class token instead of pooled patch tokens.
  bool use_cls = false;
  /// Extra randomly cropped copies of every training example (0 = clean features only).
  int augment_views = 0;
  AugmentPolicy augment;
  std::uint64_t seed = 0;

  ProbeSpec();
  void validate() const;
};

struct FinetuneSpec {
  /// Peak lr = base_lr * batch_size / 256.
  double base_lr = 5e-3;
  double layer_decay = 0.65;
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double label_smoothing = 0.1;
  /// Beta(alpha, alpha) mixing; 0 disables mixup.
  double mixup_alpha = 0.8;
  double drop_path = 0.1;
  int epochs = 30;
  int warmup_epochs = 5;
  int batch_size = 32;
  AugmentPolicy augment;
  bool use_cls = false;
  /// Frames per clip for video models (model.cfg.frames) and their stride.
  int clip_stride = 1;
  std::uint64_t seed = 0;

  FinetuneSpec();
  void validate() const;
};

nlohmann::json to_json(const ProbeSpec& s);
nlohmann::json to_json(const FinetuneSpec& s);
void from_json_into(const nlohmann::json& j, ProbeSpec& s);
void from_json_into(const nlohmann::json& j, FinetuneSpec& s);

/// Labeled videos when the manifest has any, labeled images otherwise.
Manifest evaluation_records(const Manifest& m);

/// Layer-wise lr multipliers: decay^(depth - min(layer_id, depth)); the top
/// block and everything above it get 1, the stem decay^depth.
std::map<std::string, double> layer_lr_scales(const Model& model, double decay);

/// Frozen-encoder probe: features standardized with training statistics, then
/// a linear classifier trained with momentum SGD and a cosine schedule.
EvalResult linear_probe(Model& model, const Manifest& train, const Manifest& val, const ProbeSpec& spec);

struct FinetuneOutput {
  EvalResult result;
  Model model;
};

/// End-to-end finetuning with layer-wise lr decay, label smoothing, mixup and
/// drop path. Image models train on one random frame per record; video models
/// (cfg.frames > 1) on a random clip.
FinetuneOutput finetune(const Model& model, const Manifest& train, const Manifest& val, const FinetuneSpec& spec);

/// One finetune per fraction on a label-stratified subset, mixup disabled.
std::vector<EvalResult> semi_supervised_sweep(const Model& model, const Manifest& train, const Manifest& val,
                                              const std::vector<double>& fractions, const FinetuneSpec& spec);

/// Stratified subset keeping round(fraction * count) records of every class.
Manifest stratified_subset(const Manifest& m, double fraction, std::uint64_t seed);

/// K uniformly spaced clips x `spatial_views` crops per video; logits are
/// averaged before the arg max. Requires an attached classifier.
EvalResult multiview_video_eval(Model& model, const Manifest& manifest, int k_clips, int spatial_views = 3,
                                int clip_stride = 1);

enum class TemporalMode { ordered, shuffled, repeated };

std::string to_string(TemporalMode m);
TemporalMode parse_temporal_mode(const std::string& s);

struct TemporalSpec {
  TemporalMode mode = TemporalMode::ordered;
  int n_perms = 16;
  int clip_stride = 1;
  std::uint64_t seed = 0;
  /// Explicit frame orders for shuffled mode; random ones are drawn when empty.
  std::vector<std::vector<int>> permutations;
};

/// Accuracy on the central clip with frames in order, averaged over shuffled
/// frame orders, or averaged over every single-frame repetition.
EvalResult temporal_ablation(Model& model, const Manifest& manifest, const TemporalSpec& spec);

/// Logits for full unmasked samples ([L, token_dim] each) without gradients.
Matrix predict_logits(Model& model, std::span<const Matrix> samples, bool use_cls = false);

/// Top-1 and top-5 accuracy (percent) of `logits` against `labels`.
std::pair<double, double> topk_accuracy(const Matrix& logits, const std::vector<int>& labels);

}  // namespace vicmae
