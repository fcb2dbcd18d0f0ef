// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "vicmae/image.hpp"
#include "vicmae/rng.hpp"
#include "vicmae/tensor.hpp"

namespace vicmae {

struct PatchConfig {
  int image_side = 64;
  int patch_side = 8;
  int channels = 3;

  int grid() const { return image_side / patch_side; }
  int num_tokens() const { return grid() * grid(); }
  int patch_dim() const { return patch_side * patch_side * channels; }
  void validate() const;
};

/// One view's mask. Tokens are shuffled by argsort of uniform noise; the first
/// |visible| shuffled tokens are kept.
struct MaskPlan {
  double mask_ratio = 0.0;
  /// Kept token indices, in shuffled order.
  std::vector<int> visible_idx;
  /// Dropped token indices, in shuffled order.
  std::vector<int> masked_idx;
  /// restore_perm[k] is the shuffled position of raster token k.
  std::vector<int> restore_perm;

  int num_tokens() const { return static_cast<int>(restore_perm.size()); }
  int num_visible() const { return static_cast<int>(visible_idx.size()); }
  bool is_visible(int k) const { return restore_perm[static_cast<std::size_t>(k)] < num_visible(); }
  /// Identity plan over L tokens (nothing masked).
  static MaskPlan full(int num_tokens);
};

enum class TokenKind { pixels, embeddings };

/// Token sequences of `batch` samples flattened to [batch * length, dim].
struct TokenBatch {
  Matrix tokens;
  int batch = 0;
  int length = 0;
  TokenKind kind = TokenKind::pixels;
  /// One per sample when the sequence is masked; empty for full raster order.
  std::vector<MaskPlan> plans;
};

/// Number of kept tokens: round(L * (1 - ratio)).
int visible_count(int num_tokens, double mask_ratio);

/// [L, patch_dim] with patches in raster order, each flattened (row, col, channel).
Matrix patchify(const Image& image, const PatchConfig& cfg);
TokenBatch patchify(std::span<const Image> images, const PatchConfig& cfg);
Image unpatchify(const Matrix& tokens, const PatchConfig& cfg);

/// Patchify `frames` jointly: token k is the concatenation over time of patch k
/// of every frame (time-major), giving [L, T * patch_dim].
Matrix patchify_clip(std::span<const Image> frames, const PatchConfig& cfg);

MaskPlan random_mask_plan(int num_tokens, double mask_ratio, Rng& rng);

/// Independent plan per sample; returns visible tokens in shuffled order with
/// the plans attached.
TokenBatch random_mask(const TokenBatch& full, double mask_ratio, Rng& rng);

/// Visible tokens of one sample's [L, dim] matrix.
Matrix gather_visible(const Matrix& tokens, const MaskPlan& plan);

/// Full-length [L, dim] sequence in raster order: encoded rows at visible
/// positions, `mask_token` elsewhere.
Matrix restore_with_mask_token(const Matrix& encoded_visible, const MaskPlan& plan, const RowVector& mask_token);

/// Source row for every output position of a batched restore, for
/// ag::scatter_with_fill: the visible row index within the sample (offset by
/// `prefix`) or -1 for a masked position. Prefix rows (e.g. a class token) are
/// passed through first.
std::vector<int> restore_sources(const std::vector<MaskPlan>& plans, int prefix);

/// [batch * L, 1] column of 1 for masked tokens, 0 for visible ones.
Matrix mask_weights(const std::vector<MaskPlan>& plans);

/// Per-patch standardization of pixel targets (mean 0, unit variance per token).
Matrix normalize_patch_targets(const Matrix& tokens, double eps = 1e-6);

}  // namespace vicmae
