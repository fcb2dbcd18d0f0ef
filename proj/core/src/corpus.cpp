// SPDX-License-Identifier: Apache-2.0
#include "vicmae/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include "vicmae/error.hpp"
#include "vicmae/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace vicmae {

std::string to_string(ClipKind k) { return k == ClipKind::video ? "video" : "image"; }

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

ClipKind parse_clip_kind(const std::string& s) {
  if (s == "video") return ClipKind::video;
  if (s == "image") return ClipKind::image;
  throw ValidationError("unknown record kind: " + s);
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw ValidationError("unknown split: " + s);
}

std::string to_string(Motion m) {
  switch (m) {
    case Motion::left: return "left";
    case Motion::right: return "right";
    case Motion::up: return "up";
    case Motion::down: return "down";
    case Motion::still: return "still";
  }
  return "still";
}

Motion parse_motion(const std::string& s) {
  if (s == "left") return Motion::left;
  if (s == "right") return Motion::right;
  if (s == "up") return Motion::up;
  if (s == "down") return Motion::down;
  if (s == "still") return Motion::still;
  throw ValidationError("unknown motion class: " + s);
}

const Image& Manifest::frame(std::size_t record, int t) const {
  if (!frames) {
    throw ValidationError("manifest frames not loaded");
  }
  return (*frames).at(record).at(static_cast<std::size_t>(t));
}

std::vector<std::size_t> Manifest::indices_of(ClipKind kind) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].kind == kind) out.push_back(i);
  }
  return out;
}

Manifest Manifest::subset(const std::vector<std::size_t>& indices) const {
  Manifest m;
  m.num_classes = num_classes;
  m.split = split;
  m.root = root;
  auto store = std::make_shared<std::vector<std::vector<Image>>>();
  for (std::size_t i : indices) {
    m.records.push_back(records.at(i));
    if (frames) store->push_back((*frames).at(i));
  }
  if (frames) m.frames = std::move(store);
  return m;
}

// ---- synthetic corpus ------------------------------------------------------------

void SynthSpec::validate() const {
  std::vector<std::string> errs;
  if (num_videos < 0 || num_images < 0) errs.push_back("counts must be non-negative");
  if (num_videos + num_images == 0) errs.push_back("corpus would be empty");
  if (frames_per_video < 2) errs.push_back("frames_per_video must be >= 2");
  if (canvas < 4) errs.push_back("canvas must be >= 4");
  if (patch_size <= 0 || canvas % patch_size != 0) {
    errs.push_back("canvas " + std::to_string(canvas) + " not divisible by patch size " +
                   std::to_string(patch_size));
  }
  if (motion_classes.empty()) errs.push_back("motion_classes is empty");
  std::set<Motion> uniq(motion_classes.begin(), motion_classes.end());
  if (uniq.size() != motion_classes.size()) errs.push_back("motion_classes has duplicates");
  if (speed < 0) errs.push_back("speed must be >= 0");
  if (trail < 0) errs.push_back("trail must be >= 0");
  if (palette < 0 || palette > 8) errs.push_back("palette must lie in [0, 8]");
  if (!(size_lo > 0 && size_lo <= size_hi && size_hi <= 0.5)) errs.push_back("size range must satisfy 0 < lo <= hi <= 0.5");
  if (!errs.empty()) {
    std::string msg = "invalid SynthSpec:";
    for (const auto& e : errs) msg += " " + e + ";";
    throw ValidationError(msg);
  }
}

json to_json(const SynthSpec& s) {
  json classes = json::array();
  for (Motion m : s.motion_classes) classes.push_back(to_string(m));
  return {{"num_videos", s.num_videos}, {"num_images", s.num_images}, {"frames_per_video", s.frames_per_video},
          {"canvas", s.canvas},         {"patch_size", s.patch_size}, {"motion_classes", classes},
          {"seed", s.seed},             {"speed", s.speed},           {"trail", s.trail},
          {"size", {s.size_lo, s.size_hi}}, {"palette", s.palette}, {"drift", s.drift},
          {"split", to_string(s.split)}};
}

SynthSpec synth_spec_from_json(const json& j) {
  SynthSpec s;
  s.num_videos = j.value("num_videos", s.num_videos);
  s.num_images = j.value("num_images", s.num_images);
  s.frames_per_video = j.value("frames_per_video", s.frames_per_video);
  s.canvas = j.value("canvas", s.canvas);
  s.patch_size = j.value("patch_size", s.patch_size);
  if (j.contains("motion_classes")) {
    s.motion_classes.clear();
    for (const auto& m : j.at("motion_classes")) s.motion_classes.push_back(parse_motion(m.get<std::string>()));
  }
  s.seed = j.value("seed", s.seed);
  s.speed = j.value("speed", s.speed);
  s.trail = j.value("trail", s.trail);
  s.palette = j.value("palette", s.palette);
  s.drift = j.value("drift", s.drift);
  if (j.contains("size")) {
    s.size_lo = j.at("size").at(0).get<double>();
    s.size_hi = j.at("size").at(1).get<double>();
  }
  if (j.contains("split")) s.split = parse_split(j.at("split").get<std::string>());
  return s;
}

namespace {

enum class ShapeKind { square, disk, diamond, cross };

struct Rgb {
  float r, g, b;
};

double wrap_delta(double d, double period) {
  d = std::fmod(d, period);
  if (d < -period / 2) d += period;
  if (d >= period / 2) d -= period;
  return d;
}

bool inside(ShapeKind kind, double dx, double dy, double half) {
  switch (kind) {
    case ShapeKind::square: return std::abs(dx) <= half && std::abs(dy) <= half;
    case ShapeKind::disk: return dx * dx + dy * dy <= half * half;
    case ShapeKind::diamond: return std::abs(dx) + std::abs(dy) <= half;
    case ShapeKind::cross: {
      const double arm = half / 3.0;
      return (std::abs(dx) <= arm && std::abs(dy) <= half) || (std::abs(dy) <= arm && std::abs(dx) <= half);
    }
  }
  return false;
}

void blend(Image& img, ShapeKind kind, double cx, double cy, double half, Rgb color, float alpha) {
  const double period = img.width;
  for (int y = 0; y < img.height; ++y) {
    const double dy = wrap_delta(y + 0.5 - cy, img.height);
    for (int x = 0; x < img.width; ++x) {
      const double dx = wrap_delta(x + 0.5 - cx, period);
      if (!inside(kind, dx, dy, half)) continue;
      img.at(y, x, 0) = (1 - alpha) * img.at(y, x, 0) + alpha * color.r;
      img.at(y, x, 1) = (1 - alpha) * img.at(y, x, 1) + alpha * color.g;
      img.at(y, x, 2) = (1 - alpha) * img.at(y, x, 2) + alpha * color.b;
    }
  }
}

std::pair<double, double> direction(Motion m) {
  switch (m) {
    case Motion::left: return {-1.0, 0.0};
    case Motion::right: return {1.0, 0.0};
    case Motion::up: return {0.0, -1.0};
    case Motion::down: return {0.0, 1.0};
    case Motion::still: return {0.0, 0.0};
  }
  return {0.0, 0.0};
}

void quantize(Image& img) {
  for (float& v : img.pixels) v = static_cast<float>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)) / 255.0f;
}

std::string numbered(const char* prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%05d", prefix, i);
  return buf;
}

}  // namespace

std::vector<Image> render_clip(const SynthSpec& spec, Motion motion, std::uint64_t clip_seed, int frames) {
  Rng rng(clip_seed);
  const int c = spec.canvas;
  Rgb bg{static_cast<float>(rng.uniform(0.0, 0.25)), static_cast<float>(rng.uniform(0.0, 0.25)),
         static_cast<float>(rng.uniform(0.0, 0.25))};
  const auto kind = static_cast<ShapeKind>(rng.below(4));
  const double half = rng.uniform(spec.size_lo * c, spec.size_hi * c);
  Rgb fg{static_cast<float>(rng.uniform(0.45, 1.0)), static_cast<float>(rng.uniform(0.45, 1.0)),
         static_cast<float>(rng.uniform(0.45, 1.0))};
  const auto draw_palette = [&](Rng& r) {
    static constexpr Rgb kPalette[8] = {{1.0f, 0.3f, 0.3f}, {0.3f, 1.0f, 0.3f}, {0.3f, 0.5f, 1.0f}, {1.0f, 1.0f, 0.3f},
                                        {1.0f, 0.3f, 1.0f}, {0.3f, 1.0f, 1.0f}, {1.0f, 0.6f, 0.2f}, {0.9f, 0.9f, 0.9f}};
    return kPalette[r.below(static_cast<std::uint64_t>(spec.palette))];
  };
  if (spec.palette > 0) {
    bg = {0.1f, 0.1f, 0.1f};
    fg = draw_palette(rng);
  }
  const double x0 = rng.uniform(0.0, c);
  const double y0 = rng.uniform(0.0, c);
  const auto [ux, uy] = direction(motion);
  const double vx = ux * spec.speed;
  const double vy = uy * spec.speed;

  std::vector<Image> out;
  out.reserve(static_cast<std::size_t>(frames));
  for (int t = 0; t < frames; ++t) {
    if (spec.drift && t > 0) {
      Rng fr(derive_seed(clip_seed, {tag("drift"), static_cast<std::uint64_t>(t)}));
      const auto level = static_cast<float>(fr.uniform(0.0, 0.25));
      bg = {level, level, level};
      fg = spec.palette > 0 ? draw_palette(fr)
                            : Rgb{static_cast<float>(fr.uniform(0.45, 1.0)), static_cast<float>(fr.uniform(0.45, 1.0)),
                                  static_cast<float>(fr.uniform(0.45, 1.0))};
    }
    Image img(c, c);
    for (int i = 0; i < c * c; ++i) {
      img.pixels[static_cast<std::size_t>(i) * 3 + 0] = bg.r;
      img.pixels[static_cast<std::size_t>(i) * 3 + 1] = bg.g;
      img.pixels[static_cast<std::size_t>(i) * 3 + 2] = bg.b;
    }
    const double cx = x0 + vx * t;
    const double cy = y0 + vy * t;
    // Streak: half-step copies behind the shape, oldest (faintest) first.
    const int copies = 2 * spec.trail;
    for (int k = copies; k >= 1; --k) {
      const float alpha = 0.6f * (1.0f - static_cast<float>(k) / static_cast<float>(copies + 1));
      blend(img, kind, cx - 0.5 * k * vx, cy - 0.5 * k * vy, half, fg, alpha);
    }
    blend(img, kind, cx, cy, half, fg, 1.0f);
    quantize(img);
    out.push_back(std::move(img));
  }
  return out;
}

Manifest generate_synthetic(const SynthSpec& spec, const fs::path& out_dir) {
  spec.validate();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) {
    throw IoError("cannot create output directory " + out_dir.string() + ": " + ec.message());
  }
  Manifest m;
  m.num_classes = static_cast<int>(spec.motion_classes.size());
  m.split = spec.split;
  m.root = out_dir;
  auto store = std::make_shared<std::vector<std::vector<Image>>>();
  const auto n_classes = static_cast<std::uint64_t>(spec.motion_classes.size());

  for (int v = 0; v < spec.num_videos; ++v) {
    const std::uint64_t clip_seed = derive_seed(spec.seed, {tag("video"), static_cast<std::uint64_t>(v)});
    // Balanced labels: class cycles with the index.
    const int label = static_cast<int>(static_cast<std::uint64_t>(v) % n_classes);
    auto frames = render_clip(spec, spec.motion_classes[static_cast<std::size_t>(label)], clip_seed,
                              spec.frames_per_video);
    ClipRecord r;
    r.id = numbered("vid", v);
    r.kind = ClipKind::video;
    r.label = label;
    r.height = r.width = spec.canvas;
    const fs::path dir = out_dir / "videos" / r.id;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    for (int t = 0; t < spec.frames_per_video; ++t) {
      const std::string rel = "videos/" + r.id + "/" + numbered("f", t) + ".png";
      write_png(out_dir / rel, frames[static_cast<std::size_t>(t)]);
      r.frame_paths.push_back(rel);
    }
    m.records.push_back(std::move(r));
    store->push_back(std::move(frames));
  }
  if (spec.num_images > 0) {
    fs::create_directories(out_dir / "images", ec);
    if (ec) throw IoError("cannot create images directory: " + ec.message());
  }
  for (int i = 0; i < spec.num_images; ++i) {
    const std::uint64_t clip_seed = derive_seed(spec.seed, {tag("image"), static_cast<std::uint64_t>(i)});
    const int label = static_cast<int>(static_cast<std::uint64_t>(i) % n_classes);
    auto frames = render_clip(spec, spec.motion_classes[static_cast<std::size_t>(label)], clip_seed, 1);
    ClipRecord r;
    r.id = numbered("img", i);
    r.kind = ClipKind::image;
    r.label = label;
    r.height = r.width = spec.canvas;
    const std::string rel = "images/" + r.id + ".png";
    write_png(out_dir / rel, frames[0]);
    r.frame_paths.push_back(rel);
    m.records.push_back(std::move(r));
    store->push_back(std::move(frames));
  }
  m.frames = std::move(store);
  save_manifest(m, out_dir / "manifest.json");
  return m;
}

// ---- manifest io ----------------------------------------------------------------------

json manifest_to_json(const Manifest& m) {
  json records = json::array();
  for (const auto& r : m.records) {
    json jr = {{"id", r.id},         {"kind", to_string(r.kind)}, {"frames", r.frame_paths},
               {"height", r.height}, {"width", r.width}};
    jr["label"] = r.label ? json(*r.label) : json(nullptr);
    records.push_back(std::move(jr));
  }
  return {{"version", 1}, {"split", to_string(m.split)}, {"num_classes", m.num_classes}, {"records", records}};
}

void save_manifest(const Manifest& m, const fs::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write manifest: " + path.string());
  os << manifest_to_json(m).dump(1) << "\n";
  if (!os) throw IoError("write failed: " + path.string());
}

Manifest load_manifest(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open manifest: " + path.string());
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ValidationError("manifest parse error in " + path.string() + ": " + e.what());
  }
  Manifest m;
  m.root = path.parent_path();
  auto store = std::make_shared<std::vector<std::vector<Image>>>();
  try {
    m.num_classes = j.at("num_classes").get<int>();
    m.split = parse_split(j.at("split").get<std::string>());
    std::set<std::string> ids;
    for (const auto& jr : j.at("records")) {
      ClipRecord r;
      r.id = jr.at("id").get<std::string>();
      r.kind = parse_clip_kind(jr.at("kind").get<std::string>());
      r.frame_paths = jr.at("frames").get<std::vector<std::string>>();
      r.height = jr.at("height").get<int>();
      r.width = jr.at("width").get<int>();
      if (jr.contains("label") && !jr.at("label").is_null()) r.label = jr.at("label").get<int>();
      if (!ids.insert(r.id).second) throw ValidationError("duplicate record id: " + r.id);
      if (r.frame_paths.empty()) throw ValidationError("record " + r.id + " has no frames");
      if (r.kind == ClipKind::image && r.frame_paths.size() != 1) {
        throw ValidationError("image record " + r.id + " must have exactly one frame");
      }
      if (r.label && (*r.label < 0 || *r.label >= m.num_classes)) {
        throw ValidationError("record " + r.id + " label " + std::to_string(*r.label) + " outside [0, " +
                              std::to_string(m.num_classes) + ")");
      }
      std::vector<Image> frames;
      for (const auto& rel : r.frame_paths) {
        const fs::path p = m.root / rel;
        if (!fs::exists(p)) throw IoError("missing frame file: " + p.string());
        Image img = decode_frame(p);
        if (img.height != r.height || img.width != r.width) {
          throw ValidationError("frame " + p.string() + " is " + std::to_string(img.height) + "x" +
                                std::to_string(img.width) + ", record " + r.id + " declares " +
                                std::to_string(r.height) + "x" + std::to_string(r.width));
        }
        frames.push_back(std::move(img));
      }
      store->push_back(std::move(frames));
      m.records.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw ValidationError("malformed manifest " + path.string() + ": " + e.what());
  }
  m.frames = std::move(store);
  return m;
}

Manifest pack_directory(const fs::path& src, Split split) {
  if (!fs::is_directory(src)) throw IoError("not a directory: " + src.string());
  std::vector<std::string> classes;
  for (const auto& e : fs::directory_iterator(src)) {
    if (e.is_directory()) classes.push_back(e.path().filename().string());
  }
  std::sort(classes.begin(), classes.end());
  if (classes.empty()) throw ValidationError("no class directories under " + src.string());

  Manifest m;
  m.num_classes = static_cast<int>(classes.size());
  m.split = split;
  m.root = src;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    std::vector<fs::path> entries;
    for (const auto& e : fs::directory_iterator(src / classes[c])) entries.push_back(e.path());
    std::sort(entries.begin(), entries.end());
    for (const auto& p : entries) {
      ClipRecord r;
      r.label = static_cast<int>(c);
      r.id = classes[c] + "/" + p.stem().string();
      if (fs::is_directory(p)) {
        r.kind = ClipKind::video;
        std::vector<fs::path> frames;
        for (const auto& f : fs::directory_iterator(p)) {
          if (f.path().extension() == ".png") frames.push_back(f.path());
        }
        std::sort(frames.begin(), frames.end());
        for (const auto& f : frames) r.frame_paths.push_back(fs::relative(f, src).generic_string());
      } else if (p.extension() == ".png") {
        r.kind = ClipKind::image;
        r.frame_paths.push_back(fs::relative(p, src).generic_string());
      } else {
        continue;
      }
      if (r.frame_paths.empty()) continue;
      const Image first = decode_frame(src / r.frame_paths.front());
      r.height = first.height;
      r.width = first.width;
      m.records.push_back(std::move(r));
    }
  }
  save_manifest(m, src / "manifest.json");
  return load_manifest(src / "manifest.json");
}

}  // namespace vicmae
