// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vicmae/autograd.hpp"
#include "vicmae/image.hpp"
#include "vicmae/patches.hpp"
#include "vicmae/rng.hpp"
#include "vicmae/tensor.hpp"

namespace vicmae {

enum class Pooling { mean, max, gem };

std::string to_string(Pooling p);
Pooling parse_pooling(const std::string& s);

struct EncoderConfig {
  int depth = 4;
  int heads = 3;
  int width = 192;
  double mlp_ratio = 4.0;
};

struct DecoderConfig {
  int depth = 2;
  int heads = 3;
  int width = 96;
  double mlp_ratio = 4.0;
};

struct HeadConfig {
  std::vector<int> hidden = {256, 256};
  int out_dim = 128;
};

struct ModelConfig {
  PatchConfig patch;
  EncoderConfig encoder;
  DecoderConfig decoder;
  Pooling pooling = Pooling::gem;
  double gem_p = 3.0;
  HeadConfig head;
  double tau = 0.1;
  /// Contrastive logits are multiplied by exp(logit_scale), a trained scalar
  /// initialised to log(1/tau), instead of divided by tau.
  bool learnable_log_tau = false;
  bool use_cls_token = true;
  /// Frames per token (1 for the image model; T after inflate_to_video).
  int frames = 1;

  int token_dim() const { return patch.patch_dim() * frames; }
  void validate() const;

  /// Default desk-scale model: image 64, patch 8, depth 4, width 192.
  static ModelConfig desk();
  /// Small model used for quick runs: image 32, patch 4, depth 2, width 64.
  static ModelConfig tiny();
};

nlohmann::json to_json(const ModelConfig& c);
void from_json_into(const nlohmann::json& j, ModelConfig& c);

struct Model {
  ModelConfig cfg;
  ParameterStore params;

  bool has_classifier() const { return params.contains("cls_head.weight"); }
  int num_classes() const;
};

/// Builds and initialises every parameter. Positional tables are fixed.
Model init_model(const ModelConfig& cfg, std::uint64_t seed);

/// Adds (or replaces) a norm + linear classifier over pooled features.
void add_classifier(Model& model, int num_classes, std::uint64_t seed);

/// 2-D sine-cosine table for a sqrt(L) x sqrt(L) grid. The first half of the
/// columns encodes the column coordinate, the second half the row coordinate.
Matrix sincos_posembed(int num_tokens, int dim);

struct ForwardOptions {
  bool training = false;
  /// Stochastic depth rate, linearly increasing over blocks up to this value.
  double drop_path = 0.0;
  Rng* rng = nullptr;
};

struct Encoded {
  ag::Var tokens;  // [batch * seq, width]
  int batch = 0;
  int seq = 0;
  /// Leading non-patch rows per sample (1 with a class token).
  int prefix = 0;
  std::vector<MaskPlan> plans;
};

/// Patch embedding, positional add at the tokens' grid positions, optional
/// class token, pre-norm transformer blocks and a final norm. `input` holds
/// pixel tokens ([batch * length, token_dim]); when it carries plans only the
/// visible tokens are present.
Encoded encode(ag::Graph& g, Model& model, const TokenBatch& input, const ForwardOptions& opt = {});

/// Predicted pixel tokens [batch * L, token_dim] in raster order.
ag::Var decode(ag::Graph& g, Model& model, const Encoded& enc);

/// Pools patch tokens (class token excluded) to [batch, width].
ag::Var pool(const Encoded& enc, Pooling method, double gem_p);
/// Class-token rows [batch, width]; requires use_cls_token.
ag::Var cls_features(const Encoded& enc);

enum class HeadRole { predictor, target };

/// Projector without the final normalization.
ag::Var project_raw(ag::Graph& g, Model& model, ag::Var pooled, bool training);
/// Unit-norm embeddings. Predictor and target share weights, so `role` only
/// documents intent.
ag::Var project(ag::Graph& g, Model& model, ag::Var pooled, HeadRole role, bool training);

/// Logits of the attached classifier.
ag::Var classify(ag::Graph& g, Model& model, ag::Var features);

/// Video-capable copy: the patch embedding is tiled T times along the time
/// axis with every copy scaled by 1/T; attention and the other weights are
/// copied unchanged (the pixel head is tiled without scaling).
Model inflate_to_video(const Model& image_model, int frames);

/// Pooled (or class-token) features of full, unmasked samples without building
/// gradients. Each element is one sample's [L, token_dim] tokens.
Matrix extract_features(Model& model, std::span<const Matrix> token_rows, bool use_cls);

/// Tokens of one sample for `model`: a single image, or a clip of cfg.frames frames.
Matrix sample_tokens(const Model& model, std::span<const Image> frames);

/// Group index for layer-wise schedules: 0 for the stem, i + 1 for encoder
/// block i, depth + 1 for everything above the encoder.
int layer_id(const std::string& name, int depth);

}  // namespace vicmae
