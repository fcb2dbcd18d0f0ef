// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "vicmae/corpus.hpp"
#include "vicmae/image.hpp"
#include "vicmae/rng.hpp"

namespace vicmae {

enum class SampleMode { continuous, distant, same_frame };

std::string to_string(SampleMode m);
SampleMode parse_sample_mode(const std::string& s);

struct SamplingPolicy {
  SampleMode mode = SampleMode::distant;
  /// Maximum forward gap for continuous sampling.
  int delta = 4;
  /// Number of equal intervals for distant sampling.
  int n_intervals = 2;

  void validate() const;
};

struct ColorPolicy {
  bool enabled = false;
  /// Probability of applying the jitter at all.
  double jitter_prob = 0.8;
  double brightness = 0.4;
  double contrast = 0.4;
  double saturation = 0.4;
  double blur_prob = 0.5;
  double blur_sigma_lo = 0.1;
  double blur_sigma_hi = 1.0;
};

struct AugmentPolicy {
  bool spatial = true;
  double hflip_prob = 0.5;
  double scale_lo = 0.5;
  double scale_hi = 1.0;
  double ratio_lo = 3.0 / 4.0;
  double ratio_hi = 4.0 / 3.0;
  ColorPolicy color;

  void validate() const;
  /// No flip, full-image crop, no color.
  static AugmentPolicy identity();
};

/// Augmentations per source kind. Frames get spatial augmentation only by
/// default; images get spatial and color.
struct AugmentPolicies {
  AugmentPolicy video;
  AugmentPolicy image;

  AugmentPolicies();
};

nlohmann::json to_json(const SamplingPolicy& p);
nlohmann::json to_json(const AugmentPolicy& p);
void from_json_into(const nlohmann::json& j, SamplingPolicy& p);
void from_json_into(const nlohmann::json& j, AugmentPolicy& p);

struct ViewPair {
  Image view_a;
  Image view_b;
  std::string source_id;
  ClipKind source_kind = ClipKind::image;
  std::optional<std::pair<int, int>> frame_indices;
  std::size_t record_index = 0;
};

/// (i, j) with j uniform in (i, i + delta]. delta = 0 returns (i, i).
std::pair<int, int> sample_continuous(const ClipRecord& record, int delta, Rng& rng);

/// One index from each of n equal, non-overlapping intervals of [0, T).
std::vector<int> sample_distant(const ClipRecord& record, int n, Rng& rng);

/// Frame pair according to `policy`. For distant sampling with n > 2, two
/// distinct intervals are chosen at random, in temporal order.
std::pair<int, int> sample_pair(const ClipRecord& record, const SamplingPolicy& policy, Rng& rng);

/// Random resized crop, flip and color distortion, resized to side x side and
/// clipped to [0, 1].
Image augment(const Image& view, const AugmentPolicy& policy, int side, Rng& rng);

/// Applies one draw of `policy` (same crop, flip and color) to every frame.
std::vector<Image> augment_clip(std::span<const Image> frames, const AugmentPolicy& policy, int side, Rng& rng);

/// Pairs for the given record indices. Each pair uses its own stream derived
/// from (seed, position), so the result does not depend on `workers`.
std::vector<ViewPair> build_batch_from(const Manifest& manifest, const std::vector<std::size_t>& sources,
                                       const SamplingPolicy& sampling, const AugmentPolicies& augment, int side,
                                       std::uint64_t seed, int workers = 1);

/// floor(N * image_ratio) image pairs and the rest from videos, sources drawn
/// without replacement within the batch while enough records exist.
std::vector<ViewPair> build_batch(const Manifest& manifest, int batch_size, double image_ratio,
                                  const SamplingPolicy& sampling, const AugmentPolicies& augment, int side,
                                  std::uint64_t seed, int workers = 1);

/// Chooses the record indices build_batch would use.
std::vector<std::size_t> choose_sources(const Manifest& manifest, int batch_size, double image_ratio, Rng& rng);

}  // namespace vicmae
