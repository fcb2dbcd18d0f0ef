// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vicmae/image.hpp"

namespace vicmae {

enum class ClipKind { video, image };
enum class Split { train, val, test };

std::string to_string(ClipKind k);
std::string to_string(Split s);
ClipKind parse_clip_kind(const std::string& s);
Split parse_split(const std::string& s);

/// A video (ordered frames) or a single image.
struct ClipRecord {
  std::string id;
  ClipKind kind = ClipKind::image;
  /// Paths relative to the manifest directory.
  std::vector<std::string> frame_paths;
  std::optional<int> label;
  int height = 0;
  int width = 0;

  int num_frames() const { return static_cast<int>(frame_paths.size()); }
};

/// Validated record list plus decoded frames (shared, read-only).
struct Manifest {
  std::vector<ClipRecord> records;
  int num_classes = 0;
  Split split = Split::train;
  /// Directory the frame paths are relative to.
  std::filesystem::path root;
  /// frames[r][t] is frame t of record r; empty until loaded.
  std::shared_ptr<const std::vector<std::vector<Image>>> frames;

  bool empty() const { return records.empty(); }
  std::size_t size() const { return records.size(); }
  const Image& frame(std::size_t record, int t) const;

  std::vector<std::size_t> indices_of(ClipKind kind) const;
  /// Records at `indices`, sharing the decoded frame store.
  Manifest subset(const std::vector<std::size_t>& indices) const;
};

enum class Motion { left, right, up, down, still };

std::string to_string(Motion m);
Motion parse_motion(const std::string& s);

/// Parameters of the synthetic moving-shape corpus.
struct SynthSpec {
  int num_videos = 64;
  int num_images = 16;
  int frames_per_video = 8;
  int canvas = 32;
  /// Patch side the corpus will be consumed with; canvas must be divisible by it.
  int patch_size = 8;
  std::vector<Motion> motion_classes = {Motion::left, Motion::right, Motion::up, Motion::down};
  std::uint64_t seed = 0;
  /// Displacement per frame in pixels; 0 makes every video static.
  double speed = 2.0;
  /// Length of the fading motion streak behind the shape, in frames (0 = none).
  int trail = 0;
  /// Shape half-extent range as a fraction of the canvas.
  double size_lo = 0.10;
  double size_hi = 1.0 / 6.0;
  /// Number of distinct foreground colors on a fixed dark background (at most
  /// 8); 0 draws both colors continuously.
  int palette = 0;
  /// Redraw the foreground color and background level every frame; shape,
  /// size and motion stay fixed for the whole video.
  bool drift = false;
  Split split = Split::train;

  void validate() const;
};

nlohmann::json to_json(const SynthSpec& s);
SynthSpec synth_spec_from_json(const nlohmann::json& j);

/// Renders one clip deterministically. Exposed for tests.
std::vector<Image> render_clip(const SynthSpec& spec, Motion motion, std::uint64_t clip_seed, int frames);

/// Writes frame PNGs and manifest.json under out_dir. Output bytes depend only
/// on `spec`.
Manifest generate_synthetic(const SynthSpec& spec, const std::filesystem::path& out_dir);

nlohmann::json manifest_to_json(const Manifest& m);
void save_manifest(const Manifest& m, const std::filesystem::path& path);

/// Parses and validates a manifest, decoding every frame. Throws
/// ValidationError/IoError naming the offending id or path.
Manifest load_manifest(const std::filesystem::path& path);

/// Builds a manifest from a directory tree <src>/<class>/<clip>/*.png (videos)
/// and <src>/<class>/<clip>.png (images); classes are numbered in sorted name
/// order. Writes <src>/manifest.json.
Manifest pack_directory(const std::filesystem::path& src, Split split);

}  // namespace vicmae
