// SPDX-License-Identifier: Apache-2.0
#include "vicmae/patches.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "vicmae/error.hpp"

namespace vicmae {

void PatchConfig::validate() const {
  if (channels != 3) throw ValidationError("patch config: channels must be 3");
  if (patch_side <= 0 || image_side <= 0) throw ValidationError("patch config: sides must be positive");
  if (image_side % patch_side != 0) {
    throw ValidationError("patch config: image side " + std::to_string(image_side) +
                          " not divisible by patch side " + std::to_string(patch_side));
  }
}

MaskPlan MaskPlan::full(int num_tokens) {
  MaskPlan p;
  p.visible_idx.resize(static_cast<std::size_t>(num_tokens));
  std::iota(p.visible_idx.begin(), p.visible_idx.end(), 0);
  p.restore_perm = p.visible_idx;
  return p;
}

int visible_count(int num_tokens, double mask_ratio) {
  return static_cast<int>(std::lround(num_tokens * (1.0 - mask_ratio)));
}

Matrix patchify(const Image& image, const PatchConfig& cfg) {
  cfg.validate();
  if (image.height != cfg.image_side || image.width != cfg.image_side) {
    throw ValidationError("patchify: image " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                          " does not match configured side " + std::to_string(cfg.image_side));
  }
  const int g = cfg.grid();
  const int p = cfg.patch_side;
  Matrix out(cfg.num_tokens(), cfg.patch_dim());
  for (int gy = 0; gy < g; ++gy) {
    for (int gx = 0; gx < g; ++gx) {
      const int k = gy * g + gx;
      int col = 0;
      for (int y = 0; y < p; ++y) {
        for (int x = 0; x < p; ++x) {
          for (int c = 0; c < 3; ++c) out(k, col++) = image.at(gy * p + y, gx * p + x, c);
        }
      }
    }
  }
  return out;
}

TokenBatch patchify(std::span<const Image> images, const PatchConfig& cfg) {
  TokenBatch tb;
  tb.batch = static_cast<int>(images.size());
  tb.length = cfg.num_tokens();
  tb.tokens.resize(static_cast<Eigen::Index>(tb.batch) * tb.length, cfg.patch_dim());
  for (int n = 0; n < tb.batch; ++n) {
    tb.tokens.middleRows(static_cast<Eigen::Index>(n) * tb.length, tb.length) =
        patchify(images[static_cast<std::size_t>(n)], cfg);
  }
  return tb;
}

Image unpatchify(const Matrix& tokens, const PatchConfig& cfg) {
  cfg.validate();
  if (tokens.rows() != cfg.num_tokens() || tokens.cols() != cfg.patch_dim()) {
    throw ValidationError("unpatchify: expected [" + std::to_string(cfg.num_tokens()) + "x" +
                          std::to_string(cfg.patch_dim()) + "], got [" + std::to_string(tokens.rows()) + "x" +
                          std::to_string(tokens.cols()) + "]");
  }
  const int g = cfg.grid();
  const int p = cfg.patch_side;
  Image img(cfg.image_side, cfg.image_side);
  for (int gy = 0; gy < g; ++gy) {
    for (int gx = 0; gx < g; ++gx) {
      const int k = gy * g + gx;
      int col = 0;
      for (int y = 0; y < p; ++y) {
        for (int x = 0; x < p; ++x) {
          for (int c = 0; c < 3; ++c) img.at(gy * p + y, gx * p + x, c) = static_cast<float>(tokens(k, col++));
        }
      }
    }
  }
  return img;
}

Matrix patchify_clip(std::span<const Image> frames, const PatchConfig& cfg) {
  if (frames.empty()) throw ValidationError("patchify_clip: no frames");
  const int t = static_cast<int>(frames.size());
  const int pd = cfg.patch_dim();
  Matrix out(cfg.num_tokens(), static_cast<Eigen::Index>(t) * pd);
  for (int i = 0; i < t; ++i) {
    out.middleCols(static_cast<Eigen::Index>(i) * pd, pd) = patchify(frames[static_cast<std::size_t>(i)], cfg);
  }
  return out;
}

MaskPlan random_mask_plan(int num_tokens, double mask_ratio, Rng& rng) {
  if (!(mask_ratio >= 0.0 && mask_ratio < 1.0)) {
    throw ValidationError("mask ratio must lie in [0, 1), got " + std::to_string(mask_ratio));
  }
  if (num_tokens <= 0) throw ValidationError("random_mask: no tokens");
  std::vector<double> noise(static_cast<std::size_t>(num_tokens));
  for (double& v : noise) v = rng.uniform();
  std::vector<int> shuffle(static_cast<std::size_t>(num_tokens));
  std::iota(shuffle.begin(), shuffle.end(), 0);
  std::stable_sort(shuffle.begin(), shuffle.end(),
                   [&](int a, int b) { return noise[static_cast<std::size_t>(a)] < noise[static_cast<std::size_t>(b)]; });
  const int keep = visible_count(num_tokens, mask_ratio);
  MaskPlan plan;
  plan.mask_ratio = mask_ratio;
  plan.visible_idx.assign(shuffle.begin(), shuffle.begin() + keep);
  plan.masked_idx.assign(shuffle.begin() + keep, shuffle.end());
  plan.restore_perm.resize(static_cast<std::size_t>(num_tokens));
  for (int pos = 0; pos < num_tokens; ++pos) plan.restore_perm[static_cast<std::size_t>(shuffle[static_cast<std::size_t>(pos)])] = pos;
  return plan;
}

Matrix gather_visible(const Matrix& tokens, const MaskPlan& plan) {
  if (tokens.rows() != plan.num_tokens()) throw ValidationError("gather_visible: token count does not match plan");
  Matrix out(plan.num_visible(), tokens.cols());
  for (int i = 0; i < plan.num_visible(); ++i) out.row(i) = tokens.row(plan.visible_idx[static_cast<std::size_t>(i)]);
  return out;
}

TokenBatch random_mask(const TokenBatch& full, double mask_ratio, Rng& rng) {
  if (!full.plans.empty()) throw ValidationError("random_mask: input is already masked");
  TokenBatch out;
  out.batch = full.batch;
  out.kind = full.kind;
  out.length = visible_count(full.length, mask_ratio);
  out.tokens.resize(static_cast<Eigen::Index>(full.batch) * out.length, full.tokens.cols());
  for (int n = 0; n < full.batch; ++n) {
    MaskPlan plan = random_mask_plan(full.length, mask_ratio, rng);
    out.tokens.middleRows(static_cast<Eigen::Index>(n) * out.length, out.length) =
        gather_visible(full.tokens.middleRows(static_cast<Eigen::Index>(n) * full.length, full.length), plan);
    out.plans.push_back(std::move(plan));
  }
  return out;
}

Matrix restore_with_mask_token(const Matrix& encoded_visible, const MaskPlan& plan, const RowVector& mask_token) {
  if (encoded_visible.rows() != plan.num_visible()) {
    throw ValidationError("restore_with_mask_token: " + std::to_string(encoded_visible.rows()) +
                          " rows for a plan with " + std::to_string(plan.num_visible()) + " visible tokens");
  }
  if (mask_token.cols() != encoded_visible.cols()) throw ValidationError("restore_with_mask_token: width mismatch");
  Matrix out(plan.num_tokens(), encoded_visible.cols());
  for (int k = 0; k < plan.num_tokens(); ++k) {
    const int pos = plan.restore_perm[static_cast<std::size_t>(k)];
    if (pos < plan.num_visible()) {
      out.row(k) = encoded_visible.row(pos);
    } else {
      out.row(k) = mask_token;
    }
  }
  return out;
}

std::vector<int> restore_sources(const std::vector<MaskPlan>& plans, int prefix) {
  std::vector<int> src;
  for (const auto& plan : plans) {
    for (int i = 0; i < prefix; ++i) src.push_back(i);
    for (int k = 0; k < plan.num_tokens(); ++k) {
      const int pos = plan.restore_perm[static_cast<std::size_t>(k)];
      src.push_back(pos < plan.num_visible() ? prefix + pos : -1);
    }
  }
  return src;
}

Matrix mask_weights(const std::vector<MaskPlan>& plans) {
  Eigen::Index rows = 0;
  for (const auto& p : plans) rows += p.num_tokens();
  Matrix w(rows, 1);
  Eigen::Index r = 0;
  for (const auto& p : plans) {
    for (int k = 0; k < p.num_tokens(); ++k) w(r++, 0) = p.is_visible(k) ? 0.0 : 1.0;
  }
  return w;
}

Matrix normalize_patch_targets(const Matrix& tokens, double eps) {
  Matrix out(tokens.rows(), tokens.cols());
  const double d = static_cast<double>(tokens.cols());
  for (Eigen::Index r = 0; r < tokens.rows(); ++r) {
    const double mean = tokens.row(r).mean();
    // Unbiased variance, as in the usual per-patch normalized-pixel target.
    const double var = (tokens.row(r).array() - mean).square().sum() / std::max(1.0, d - 1.0);
    out.row(r) = (tokens.row(r).array() - mean) / std::sqrt(var + eps);
  }
  return out;
}

}  // namespace vicmae
