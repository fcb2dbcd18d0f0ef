// SPDX-License-Identifier: Apache-2.0
#include "vicmae/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "vicmae/error.hpp"

namespace vicmae {

std::string to_string(SampleMode m) {
  switch (m) {
    case SampleMode::continuous: return "continuous";
    case SampleMode::distant: return "distant";
    case SampleMode::same_frame: return "same_frame";
  }
  return "distant";
}

SampleMode parse_sample_mode(const std::string& s) {
  if (s == "continuous") return SampleMode::continuous;
  if (s == "distant") return SampleMode::distant;
  if (s == "same_frame") return SampleMode::same_frame;
  throw ValidationError("unknown sampling mode: " + s);
}

void SamplingPolicy::validate() const {
  if (mode == SampleMode::continuous && delta < 1) throw ValidationError("continuous sampling needs delta >= 1");
  if (mode == SampleMode::distant && n_intervals < 2) throw ValidationError("distant sampling needs n_intervals >= 2");
}

void AugmentPolicy::validate() const {
  if (!(scale_lo > 0.0 && scale_lo <= scale_hi && scale_hi <= 1.0)) {
    throw ValidationError("crop scale range must satisfy 0 < lo <= hi <= 1");
  }
  if (!(ratio_lo > 0.0 && ratio_lo <= ratio_hi)) throw ValidationError("crop aspect range invalid");
  if (hflip_prob < 0.0 || hflip_prob > 1.0) throw ValidationError("hflip probability outside [0, 1]");
  if (color.blur_sigma_lo <= 0.0 || color.blur_sigma_lo > color.blur_sigma_hi) {
    throw ValidationError("blur sigma range invalid");
  }
}

AugmentPolicy AugmentPolicy::identity() {
  AugmentPolicy p;
  p.spatial = false;
  p.hflip_prob = 0.0;
  p.scale_lo = p.scale_hi = 1.0;
  p.color.enabled = false;
  return p;
}

AugmentPolicies::AugmentPolicies() { image.color.enabled = true; }

nlohmann::json to_json(const SamplingPolicy& p) {
  return {{"mode", to_string(p.mode)}, {"delta", p.delta}, {"n_intervals", p.n_intervals}};
}

nlohmann::json to_json(const AugmentPolicy& p) {
  return {{"spatial", p.spatial},
          {"hflip_prob", p.hflip_prob},
          {"scale", {p.scale_lo, p.scale_hi}},
          {"ratio", {p.ratio_lo, p.ratio_hi}},
          {"color",
           {{"enabled", p.color.enabled},
            {"jitter_prob", p.color.jitter_prob},
            {"brightness", p.color.brightness},
            {"contrast", p.color.contrast},
            {"saturation", p.color.saturation},
            {"blur_prob", p.color.blur_prob},
            {"blur_sigma", {p.color.blur_sigma_lo, p.color.blur_sigma_hi}}}}};
}

void from_json_into(const nlohmann::json& j, SamplingPolicy& p) {
  if (j.contains("mode")) p.mode = parse_sample_mode(j.at("mode").get<std::string>());
  p.delta = j.value("delta", p.delta);
  p.n_intervals = j.value("n_intervals", p.n_intervals);
}

void from_json_into(const nlohmann::json& j, AugmentPolicy& p) {
  p.spatial = j.value("spatial", p.spatial);
  p.hflip_prob = j.value("hflip_prob", p.hflip_prob);
  if (j.contains("scale")) {
    p.scale_lo = j.at("scale").at(0).get<double>();
    p.scale_hi = j.at("scale").at(1).get<double>();
  }
  if (j.contains("ratio")) {
    p.ratio_lo = j.at("ratio").at(0).get<double>();
    p.ratio_hi = j.at("ratio").at(1).get<double>();
  }
  if (j.contains("color")) {
    const auto& c = j.at("color");
    p.color.enabled = c.value("enabled", p.color.enabled);
    p.color.jitter_prob = c.value("jitter_prob", p.color.jitter_prob);
    p.color.brightness = c.value("brightness", p.color.brightness);
    p.color.contrast = c.value("contrast", p.color.contrast);
    p.color.saturation = c.value("saturation", p.color.saturation);
    p.color.blur_prob = c.value("blur_prob", p.color.blur_prob);
    if (c.contains("blur_sigma")) {
      p.color.blur_sigma_lo = c.at("blur_sigma").at(0).get<double>();
      p.color.blur_sigma_hi = c.at("blur_sigma").at(1).get<double>();
    }
  }
}

// ---- frame index sampling ----------------------------------------------------------

std::pair<int, int> sample_continuous(const ClipRecord& record, int delta, Rng& rng) {
  if (record.kind != ClipKind::video) throw ValidationError("sample_continuous: " + record.id + " is not a video");
  if (delta < 0) throw ValidationError("sample_continuous: negative delta");
  const int t = record.num_frames();
  if (t < delta + 1) {
    throw ValidationError("video " + record.id + " has " + std::to_string(t) + " frames, gap " +
                          std::to_string(delta) + " needs at least " + std::to_string(delta + 1));
  }
  const int i = static_cast<int>(rng.below(static_cast<std::uint64_t>(t - delta)));
  if (delta == 0) return {i, i};
  const int j = i + 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(delta)));
  return {i, j};
}

std::vector<int> sample_distant(const ClipRecord& record, int n, Rng& rng) {
  if (record.kind != ClipKind::video) throw ValidationError("sample_distant: " + record.id + " is not a video");
  const int t = record.num_frames();
  if (n < 1 || t < n) {
    throw ValidationError("video " + record.id + " has " + std::to_string(t) + " frames, fewer than " +
                          std::to_string(n) + " intervals");
  }
  std::vector<int> idx(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    const std::int64_t lo = static_cast<std::int64_t>(k) * t / n;
    const std::int64_t hi = static_cast<std::int64_t>(k + 1) * t / n;
    idx[static_cast<std::size_t>(k)] = static_cast<int>(rng.range(lo, hi - 1));
  }
  return idx;
}

std::pair<int, int> sample_pair(const ClipRecord& record, const SamplingPolicy& policy, Rng& rng) {
  switch (policy.mode) {
    case SampleMode::same_frame: return sample_continuous(record, 0, rng);
    case SampleMode::continuous: return sample_continuous(record, policy.delta, rng);
    case SampleMode::distant: {
      const auto idx = sample_distant(record, policy.n_intervals, rng);
      if (policy.n_intervals == 2) return {idx[0], idx[1]};
      const int a = static_cast<int>(rng.below(static_cast<std::uint64_t>(policy.n_intervals)));
      int b = static_cast<int>(rng.below(static_cast<std::uint64_t>(policy.n_intervals - 1)));
      if (b >= a) ++b;
      return {idx[static_cast<std::size_t>(std::min(a, b))], idx[static_cast<std::size_t>(std::max(a, b))]};
    }
  }
  return {0, 0};
}

// ---- augmentation ---------------------------------------------------------------

namespace {

struct Crop {
  int y0, x0, h, w;
};

Crop random_resized_crop(int height, int width, const AugmentPolicy& p, Rng& rng) {
  if (p.scale_lo >= 1.0) return {0, 0, height, width};
  const double area = static_cast<double>(height) * width;
  const double log_lo = std::log(p.ratio_lo);
  const double log_hi = std::log(p.ratio_hi);
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double target = area * rng.uniform(p.scale_lo, p.scale_hi);
    const double ratio = std::exp(rng.uniform(log_lo, log_hi));
    const int w = static_cast<int>(std::lround(std::sqrt(target * ratio)));
    const int h = static_cast<int>(std::lround(std::sqrt(target / ratio)));
    if (w > 0 && h > 0 && w <= width && h <= height) {
      const int y0 = static_cast<int>(rng.range(0, height - h));
      const int x0 = static_cast<int>(rng.range(0, width - w));
      return {y0, x0, h, w};
    }
  }
  // Centre crop fallback.
  const int side = std::min(height, width);
  return {(height - side) / 2, (width - side) / 2, side, side};
}

float gray(const Image& img, int y, int x) {
  return 0.299f * img.at(y, x, 0) + 0.587f * img.at(y, x, 1) + 0.114f * img.at(y, x, 2);
}

void color_jitter(Image& img, const ColorPolicy& c, Rng& rng) {
  const auto factor = [&](double s) { return static_cast<float>(rng.uniform(std::max(0.0, 1.0 - s), 1.0 + s)); };
  const float b = factor(c.brightness);
  const float k = factor(c.contrast);
  const float s = factor(c.saturation);
  for (float& v : img.pixels) v = std::clamp(v * b, 0.0f, 1.0f);
  double mean = 0.0;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) mean += gray(img, y, x);
  }
  const auto m = static_cast<float>(mean / (static_cast<double>(img.height) * img.width));
  for (float& v : img.pixels) v = std::clamp((v - m) * k + m, 0.0f, 1.0f);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const float g = gray(img, y, x);
      for (int ch = 0; ch < 3; ++ch) img.at(y, x, ch) = std::clamp(g + (img.at(y, x, ch) - g) * s, 0.0f, 1.0f);
    }
  }
}

void gaussian_blur(Image& img, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(2.0 * sigma)));
  std::vector<float> kernel(static_cast<std::size_t>(2 * radius + 1));
  float sum = 0.0f;
  for (int i = -radius; i <= radius; ++i) {
    const auto v = static_cast<float>(std::exp(-0.5 * i * i / (sigma * sigma)));
    kernel[static_cast<std::size_t>(i + radius)] = v;
    sum += v;
  }
  for (float& v : kernel) v /= sum;
  const auto pass = [&](const Image& src, bool horizontal) {
    Image dst(src.height, src.width);
    for (int y = 0; y < src.height; ++y) {
      for (int x = 0; x < src.width; ++x) {
        for (int c = 0; c < 3; ++c) {
          float acc = 0.0f;
          for (int i = -radius; i <= radius; ++i) {
            const int yy = horizontal ? y : std::clamp(y + i, 0, src.height - 1);
            const int xx = horizontal ? std::clamp(x + i, 0, src.width - 1) : x;
            acc += kernel[static_cast<std::size_t>(i + radius)] * src.at(yy, xx, c);
          }
          dst.at(y, x, c) = acc;
        }
      }
    }
    return dst;
  };
  img = pass(pass(img, true), false);
}

}  // namespace

Image augment(const Image& view, const AugmentPolicy& policy, int side, Rng& rng) {
  Image out;
  if (policy.spatial) {
    const Crop c = random_resized_crop(view.height, view.width, policy, rng);
    out = crop_resize(view, c.y0, c.x0, c.h, c.w, side, side);
    if (rng.bernoulli(policy.hflip_prob)) {
      for (int y = 0; y < out.height; ++y) {
        for (int x = 0; x < out.width / 2; ++x) {
          for (int ch = 0; ch < 3; ++ch) std::swap(out.at(y, x, ch), out.at(y, out.width - 1 - x, ch));
        }
      }
    }
  } else {
    out = resize_bilinear(view, side, side);
  }
  if (policy.color.enabled) {
    if (rng.bernoulli(policy.color.jitter_prob)) color_jitter(out, policy.color, rng);
    if (rng.bernoulli(policy.color.blur_prob)) {
      gaussian_blur(out, rng.uniform(policy.color.blur_sigma_lo, policy.color.blur_sigma_hi));
    }
  }
  for (float& v : out.pixels) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

std::vector<Image> augment_clip(std::span<const Image> frames, const AugmentPolicy& policy, int side, Rng& rng) {
  const Rng start = rng;
  std::vector<Image> out;
  out.reserve(frames.size());
  for (const Image& f : frames) {
    rng = start;
    out.push_back(augment(f, policy, side, rng));
  }
  return out;
}

// ---- batches ----------------------------------------------------------------------

namespace {

ViewPair make_pair(const Manifest& m, std::size_t r, const SamplingPolicy& sampling, const AugmentPolicies& augment_p,
                   int side, Rng& rng) {
  const ClipRecord& rec = m.records.at(r);
  ViewPair vp;
  vp.source_id = rec.id;
  vp.source_kind = rec.kind;
  vp.record_index = r;
  if (rec.kind == ClipKind::video) {
    const auto [i, j] = sample_pair(rec, sampling, rng);
    vp.frame_indices = std::make_pair(i, j);
    vp.view_a = augment(m.frame(r, i), augment_p.video, side, rng);
    vp.view_b = augment(m.frame(r, j), augment_p.video, side, rng);
  } else {
    vp.view_a = augment(m.frame(r, 0), augment_p.image, side, rng);
    vp.view_b = augment(m.frame(r, 0), augment_p.image, side, rng);
  }
  return vp;
}

std::vector<std::size_t> draw(const std::vector<std::size_t>& pool, int count, Rng& rng) {
  std::vector<std::size_t> out;
  while (static_cast<int>(out.size()) < count) {
    std::vector<std::size_t> perm = pool;
    rng.shuffle(std::span<std::size_t>(perm));
    for (std::size_t v : perm) {
      if (static_cast<int>(out.size()) == count) break;
      out.push_back(v);
    }
  }
  return out;
}

}  // namespace

std::vector<std::size_t> choose_sources(const Manifest& manifest, int batch_size, double image_ratio, Rng& rng) {
  if (manifest.empty()) throw ValidationError("build_batch: manifest is empty");
  if (!(image_ratio >= 0.0 && image_ratio <= 1.0)) throw ValidationError("image_ratio must lie in [0, 1]");
  if (batch_size < 1) throw ValidationError("batch size must be positive");
  const int n_img = static_cast<int>(std::floor(batch_size * image_ratio));
  const int n_vid = batch_size - n_img;
  const auto images = manifest.indices_of(ClipKind::image);
  const auto videos = manifest.indices_of(ClipKind::video);
  if (n_img > 0 && images.empty()) throw ValidationError("image_ratio requires image records but the manifest has none");
  if (n_vid > 0 && videos.empty()) throw ValidationError("batch requires video records but the manifest has none");
  std::vector<std::size_t> out = draw(images, n_img, rng);
  const auto v = draw(videos, n_vid, rng);
  out.insert(out.end(), v.begin(), v.end());
  return out;
}

std::vector<ViewPair> build_batch_from(const Manifest& manifest, const std::vector<std::size_t>& sources,
                                       const SamplingPolicy& sampling, const AugmentPolicies& augment_p, int side,
                                       std::uint64_t seed, int workers) {
  sampling.validate();
  augment_p.video.validate();
  augment_p.image.validate();
  std::vector<ViewPair> out(sources.size());
  const auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) {
      Rng rng(derive_seed(seed, {tag("pair"), k}));
      out[k] = make_pair(manifest, sources[k], sampling, augment_p, side, rng);
    }
  };
  const std::size_t n = sources.size();
  const std::size_t w = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(1, workers)), 1, std::max<std::size_t>(1, n));
  if (w <= 1) {
    work(0, n);
    return out;
  }
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(w);
  for (std::size_t t = 0; t < w; ++t) {
    threads.emplace_back([&, t] {
      try {
        work(t * n / w, (t + 1) * n / w);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : threads) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

std::vector<ViewPair> build_batch(const Manifest& manifest, int batch_size, double image_ratio,
                                  const SamplingPolicy& sampling, const AugmentPolicies& augment_p, int side,
                                  std::uint64_t seed, int workers) {
  Rng rng(derive_seed(seed, {tag("sources")}));
  const auto sources = choose_sources(manifest, batch_size, image_ratio, rng);
  return build_batch_from(manifest, sources, sampling, augment_p, side, seed, workers);
}

}  // namespace vicmae
