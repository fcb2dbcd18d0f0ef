// SPDX-License-Identifier: Apache-2.0
#include "vicmae/network.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "vicmae/error.hpp"

namespace vicmae {

std::string to_string(Pooling p) {
  switch (p) {
    case Pooling::mean: return "mean";
    case Pooling::max: return "max";
    case Pooling::gem: return "gem";
  }
  return "gem";
}

Pooling parse_pooling(const std::string& s) {
  if (s == "mean") return Pooling::mean;
  if (s == "max") return Pooling::max;
  if (s == "gem") return Pooling::gem;
  throw ValidationError("unknown pooling method: " + s);
}

void ModelConfig::validate() const {
  patch.validate();
  std::vector<std::string> errs;
  if (encoder.depth < 1 || decoder.depth < 1) errs.push_back("encoder and decoder depth must be >= 1");
  if (encoder.heads < 1 || encoder.width % encoder.heads != 0) errs.push_back("encoder width not divisible by heads");
  if (decoder.heads < 1 || decoder.width % decoder.heads != 0) errs.push_back("decoder width not divisible by heads");
  if (encoder.width % 2 != 0 || decoder.width % 2 != 0) errs.push_back("widths must be even for positional tables");
  if (encoder.mlp_ratio <= 0 || decoder.mlp_ratio <= 0) errs.push_back("mlp ratio must be positive");
  if (!(tau > 0)) errs.push_back("tau must be positive");
  if (!(gem_p >= 1)) errs.push_back("gem_p must be >= 1");
  if (head.out_dim < 1) errs.push_back("head output dim must be positive");
  for (int h : head.hidden) {
    if (h < 1) errs.push_back("head hidden widths must be positive");
  }
  if (frames < 1) errs.push_back("frames must be >= 1");
  if (!errs.empty()) {
    std::string msg = "invalid model config:";
    for (const auto& e : errs) msg += " " + e + ";";
    throw ValidationError(msg);
  }
}

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.patch = {32, 4, 3};
  c.encoder = {2, 4, 64, 4.0};
  c.decoder = {1, 4, 32, 4.0};
  c.head = {{128, 128}, 64};
  return c;
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"patch", {{"image_side", c.patch.image_side}, {"patch_side", c.patch.patch_side}}},
          {"encoder",
           {{"depth", c.encoder.depth},
            {"heads", c.encoder.heads},
            {"width", c.encoder.width},
            {"mlp_ratio", c.encoder.mlp_ratio}}},
          {"decoder",
           {{"depth", c.decoder.depth},
            {"heads", c.decoder.heads},
            {"width", c.decoder.width},
            {"mlp_ratio", c.decoder.mlp_ratio}}},
          {"pooling", to_string(c.pooling)},
          {"gem_p", c.gem_p},
          {"head", {{"hidden", c.head.hidden}, {"out_dim", c.head.out_dim}}},
          {"tau", c.tau},
          {"learnable_log_tau", c.learnable_log_tau},
          {"use_cls_token", c.use_cls_token},
          {"frames", c.frames}};
}

void from_json_into(const nlohmann::json& j, ModelConfig& c) {
  if (j.contains("patch")) {
    const auto& p = j.at("patch");
    c.patch.image_side = p.value("image_side", c.patch.image_side);
    c.patch.patch_side = p.value("patch_side", c.patch.patch_side);
  }
  const auto block = [](const nlohmann::json& b, auto& dst) {
    dst.depth = b.value("depth", dst.depth);
    dst.heads = b.value("heads", dst.heads);
    dst.width = b.value("width", dst.width);
    dst.mlp_ratio = b.value("mlp_ratio", dst.mlp_ratio);
  };
  if (j.contains("encoder")) block(j.at("encoder"), c.encoder);
  if (j.contains("decoder")) block(j.at("decoder"), c.decoder);
  if (j.contains("pooling")) c.pooling = parse_pooling(j.at("pooling").get<std::string>());
  c.gem_p = j.value("gem_p", c.gem_p);
  if (j.contains("head")) {
    const auto& h = j.at("head");
    if (h.contains("hidden")) c.head.hidden = h.at("hidden").get<std::vector<int>>();
    c.head.out_dim = h.value("out_dim", c.head.out_dim);
  }
  c.tau = j.value("tau", c.tau);
  c.learnable_log_tau = j.value("learnable_log_tau", c.learnable_log_tau);
  c.use_cls_token = j.value("use_cls_token", c.use_cls_token);
  c.frames = j.value("frames", c.frames);
}

int Model::num_classes() const {
  return has_classifier() ? static_cast<int>(params.at("cls_head.weight").value.cols()) : 0;
}

// ---- initialisation --------------------------------------------------------------

Matrix sincos_posembed(int num_tokens, int dim) {
  const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(num_tokens))));
  if (side * side != num_tokens) {
    throw ValidationError("sincos_posembed: token count " + std::to_string(num_tokens) + " is not a square");
  }
  if (dim <= 0 || dim % 2 != 0) throw ValidationError("sincos_posembed: width " + std::to_string(dim) + " is not even");
  // Each axis gets an even share; equal halves when dim % 4 == 0.
  const int dim_x = 2 * ((dim + 2) / 4);
  const int dim_y = dim - dim_x;
  Matrix out(num_tokens, dim);
  const auto fill = [&](int row, int col0, int d, double pos) {
    const int half = d / 2;
    for (int i = 0; i < half; ++i) {
      const double omega = 1.0 / std::pow(10000.0, static_cast<double>(i) / half);
      out(row, col0 + i) = std::sin(pos * omega);
      out(row, col0 + half + i) = std::cos(pos * omega);
    }
  };
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      const int k = y * side + x;
      fill(k, 0, dim_x, x);
      if (dim_y > 0) fill(k, dim_x, dim_y, y);
    }
  }
  return out;
}

namespace {

Matrix xavier(int in, int out, Rng& rng) {
  const double a = std::sqrt(6.0 / (in + out));
  Matrix m(in, out);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-a, a);
  return m;
}

Matrix trunc_normal(int rows, int cols, double std, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.truncated_normal(std);
  return m;
}

void add_linear(ParameterStore& ps, const std::string& name, int in, int out, Rng& rng) {
  ps.add(name + ".weight", xavier(in, out, rng));
  ps.add(name + ".bias", Matrix::Zero(1, out), true, false);
}

void add_norm(ParameterStore& ps, const std::string& name, int width) {
  ps.add(name + ".weight", Matrix::Ones(1, width), true, false);
  ps.add(name + ".bias", Matrix::Zero(1, width), true, false);
}

void add_blocks(ParameterStore& ps, const std::string& prefix, int depth, int width, double mlp_ratio, Rng& rng) {
  const int hidden = static_cast<int>(std::lround(width * mlp_ratio));
  for (int i = 0; i < depth; ++i) {
    const std::string b = prefix + "." + std::to_string(i);
    add_norm(ps, b + ".norm1", width);
    add_linear(ps, b + ".attn.qkv", width, 3 * width, rng);
    add_linear(ps, b + ".attn.proj", width, width, rng);
    add_norm(ps, b + ".norm2", width);
    add_linear(ps, b + ".mlp.fc1", width, hidden, rng);
    add_linear(ps, b + ".mlp.fc2", hidden, width, rng);
  }
}

}  // namespace

Model init_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Model m;
  m.cfg = cfg;
  Rng rng(derive_seed(seed, {tag("init")}));
  ParameterStore& ps = m.params;
  const int d = cfg.encoder.width;
  const int dd = cfg.decoder.width;
  const int l = cfg.patch.num_tokens();
  const int td = cfg.token_dim();

  // Stem.
  ps.add("patch_embed.weight", xavier(td, d, rng));
  ps.add("patch_embed.bias", Matrix::Zero(1, d), true, false);
  if (cfg.use_cls_token) ps.add("cls_token", trunc_normal(1, d, 0.02, rng), true, false);
  Matrix pos(l + 1, d);
  pos.row(0).setZero();
  pos.bottomRows(l) = sincos_posembed(l, d);
  ps.add("pos_embed", pos, false, false);

  add_blocks(ps, "blocks", cfg.encoder.depth, d, cfg.encoder.mlp_ratio, rng);
  add_norm(ps, "norm", d);

  // Decoder.
  add_linear(ps, "decoder_embed", d, dd, rng);
  ps.add("mask_token", trunc_normal(1, dd, 0.02, rng), true, false);
  Matrix dpos(l + 1, dd);
  dpos.row(0).setZero();
  dpos.bottomRows(l) = sincos_posembed(l, dd);
  ps.add("decoder_pos_embed", dpos, false, false);
  add_blocks(ps, "decoder_blocks", cfg.decoder.depth, dd, cfg.decoder.mlp_ratio, rng);
  add_norm(ps, "decoder_norm", dd);
  add_linear(ps, "decoder_pred", dd, td, rng);

  // Projector: (linear, batch norm, relu) per hidden width, then linear.
  int in = d;
  for (std::size_t i = 0; i < cfg.head.hidden.size(); ++i) {
    const int h = cfg.head.hidden[i];
    const std::string n = "head.fc" + std::to_string(i);
    ps.add(n + ".weight", trunc_normal(in, h, 0.02, rng));
    ps.add(n + ".bias", Matrix::Zero(1, h), true, false);
    const std::string bn = "head.bn" + std::to_string(i);
    add_norm(ps, bn, h);
    ps.add(bn + ".running_mean", Matrix::Zero(1, h), false, false);
    ps.add(bn + ".running_var", Matrix::Ones(1, h), false, false);
    in = h;
  }
  ps.add("head.out.weight", trunc_normal(in, cfg.head.out_dim, 0.02, rng));
  ps.add("head.out.bias", Matrix::Zero(1, cfg.head.out_dim), true, false);

  if (cfg.learnable_log_tau) {
    ps.add("logit_scale", Matrix::Constant(1, 1, std::log(1.0 / cfg.tau)), true, false);
  }
  return m;
}

void add_classifier(Model& model, int num_classes, std::uint64_t seed) {
  if (num_classes < 1) throw ValidationError("classifier needs at least one class");
  Rng rng(derive_seed(seed, {tag("classifier")}));
  ParameterStore& ps = model.params;
  for (const char* n : {"fc_norm.weight", "fc_norm.bias", "cls_head.weight", "cls_head.bias"}) {
    if (ps.contains(n)) ps.erase(n);
  }
  add_norm(ps, "fc_norm", model.cfg.encoder.width);
  ps.add("cls_head.weight", trunc_normal(model.cfg.encoder.width, num_classes, 0.01, rng));
  ps.add("cls_head.bias", Matrix::Zero(1, num_classes), true, false);
}

// ---- forward ---------------------------------------------------------------------

namespace {

ag::Var lin(ag::Graph& g, Model& m, const std::string& name, ag::Var x) {
  return ag::linear(x, g.param(m.params.at(name + ".weight")), g.param(m.params.at(name + ".bias")));
}

ag::Var norm(ag::Graph& g, Model& m, const std::string& name, ag::Var x) {
  return ag::layer_norm(x, g.param(m.params.at(name + ".weight")), g.param(m.params.at(name + ".bias")));
}

ag::Var drop_path(ag::Var x, int batch, double rate, const ForwardOptions& opt) {
  if (!opt.training || rate <= 0.0 || opt.rng == nullptr) return x;
  std::vector<double> f(static_cast<std::size_t>(batch));
  for (double& v : f) v = opt.rng->bernoulli(rate) ? 0.0 : 1.0 / (1.0 - rate);
  return ag::scale_samples(x, batch, std::move(f));
}

ag::Var run_blocks(ag::Graph& g, Model& m, const std::string& prefix, int depth, int heads, ag::Var x, int batch,
                   int seq, const ForwardOptions& opt) {
  for (int i = 0; i < depth; ++i) {
    const std::string b = prefix + "." + std::to_string(i);
    const double rate = depth > 1 ? opt.drop_path * i / (depth - 1) : opt.drop_path;
    ag::Var h = norm(g, m, b + ".norm1", x);
    h = ag::attention(lin(g, m, b + ".attn.qkv", h), batch, seq, heads);
    h = lin(g, m, b + ".attn.proj", h);
    x = ag::add(x, drop_path(h, batch, rate, opt));
    h = norm(g, m, b + ".norm2", x);
    h = lin(g, m, b + ".mlp.fc2", ag::gelu(lin(g, m, b + ".mlp.fc1", h)));
    x = ag::add(x, drop_path(h, batch, rate, opt));
  }
  return x;
}

}  // namespace

Encoded encode(ag::Graph& g, Model& model, const TokenBatch& input, const ForwardOptions& opt) {
  const ModelConfig& cfg = model.cfg;
  const int l = cfg.patch.num_tokens();
  if (input.tokens.cols() != cfg.token_dim()) {
    throw ValidationError("encode: token width " + std::to_string(input.tokens.cols()) + " != model token dim " +
                          std::to_string(cfg.token_dim()));
  }
  if (input.tokens.rows() != static_cast<Eigen::Index>(input.batch) * input.length) {
    throw ValidationError("encode: rows != batch * length");
  }
  std::vector<MaskPlan> plans = input.plans;
  if (plans.empty()) {
    if (input.length != l) throw ValidationError("encode: full input must have " + std::to_string(l) + " tokens");
    plans.assign(static_cast<std::size_t>(input.batch), MaskPlan::full(l));
  }
  if (static_cast<int>(plans.size()) != input.batch) throw ValidationError("encode: one plan per sample required");

  std::vector<int> pos_rows;
  pos_rows.reserve(static_cast<std::size_t>(input.batch) * input.length);
  for (const auto& p : plans) {
    if (p.num_visible() != input.length || p.num_tokens() != l) throw ValidationError("encode: plan/shape mismatch");
    for (int k : p.visible_idx) pos_rows.push_back(k + 1);
  }
  ag::Var x = lin(g, model, "patch_embed", g.constant(input.tokens));
  ag::Var pos = g.param(model.params.at("pos_embed"));
  x = ag::add(x, ag::gather_rows(pos, std::move(pos_rows)));

  Encoded enc;
  enc.batch = input.batch;
  enc.seq = input.length;
  enc.plans = std::move(plans);
  if (cfg.use_cls_token) {
    ag::Var cls = ag::add(g.param(model.params.at("cls_token")), ag::slice_rows(pos, 0, 1));
    x = ag::prepend_token(x, cls, enc.batch, enc.seq);
    enc.seq += 1;
    enc.prefix = 1;
  }
  x = run_blocks(g, model, "blocks", cfg.encoder.depth, cfg.encoder.heads, x, enc.batch, enc.seq, opt);
  enc.tokens = norm(g, model, "norm", x);
  return enc;
}

ag::Var decode(ag::Graph& g, Model& model, const Encoded& enc) {
  const ModelConfig& cfg = model.cfg;
  const int l = cfg.patch.num_tokens();
  const int out_len = enc.prefix + l;
  ag::Var y = lin(g, model, "decoder_embed", enc.tokens);
  y = ag::scatter_with_fill(y, g.param(model.params.at("mask_token")), enc.batch, enc.seq, out_len,
                            restore_sources(enc.plans, enc.prefix));
  std::vector<int> pos_rows;
  pos_rows.reserve(static_cast<std::size_t>(enc.batch) * out_len);
  for (int n = 0; n < enc.batch; ++n) {
    for (int k = 0; k < out_len; ++k) pos_rows.push_back(k + 1 - enc.prefix);
  }
  y = ag::add(y, ag::gather_rows(g.param(model.params.at("decoder_pos_embed")), std::move(pos_rows)));
  y = run_blocks(g, model, "decoder_blocks", cfg.decoder.depth, cfg.decoder.heads, y, enc.batch, out_len, {});
  y = lin(g, model, "decoder_pred", norm(g, model, "decoder_norm", y));
  if (enc.prefix == 0) return y;
  std::vector<int> keep;
  keep.reserve(static_cast<std::size_t>(enc.batch) * l);
  for (int n = 0; n < enc.batch; ++n) {
    for (int k = 0; k < l; ++k) keep.push_back(n * out_len + enc.prefix + k);
  }
  return ag::gather_rows(y, std::move(keep));
}

ag::Var pool(const Encoded& enc, Pooling method, double gem_p) {
  switch (method) {
    case Pooling::mean: return ag::mean_pool(enc.tokens, enc.batch, enc.seq, enc.prefix);
    case Pooling::max: return ag::max_pool(enc.tokens, enc.batch, enc.seq, enc.prefix);
    case Pooling::gem: return ag::gem_pool(enc.tokens, enc.batch, enc.seq, enc.prefix, gem_p);
  }
  throw ValidationError("unknown pooling method");
}

ag::Var cls_features(const Encoded& enc) {
  if (enc.prefix < 1) throw ValidationError("cls_features: model has no class token");
  std::vector<int> rows(static_cast<std::size_t>(enc.batch));
  for (int n = 0; n < enc.batch; ++n) rows[static_cast<std::size_t>(n)] = n * enc.seq;
  return ag::gather_rows(enc.tokens, std::move(rows));
}

ag::Var project_raw(ag::Graph& g, Model& model, ag::Var pooled, bool training) {
  if (training && pooled.rows() < 2) throw ValidationError("project: training mode needs a batch of at least 2");
  ag::Var h = pooled;
  for (std::size_t i = 0; i < model.cfg.head.hidden.size(); ++i) {
    h = lin(g, model, "head.fc" + std::to_string(i), h);
    const std::string bn = "head.bn" + std::to_string(i);
    ag::BatchNormState st{&model.params.at(bn + ".running_mean"), &model.params.at(bn + ".running_var"), 0.1};
    h = ag::batch_norm(h, g.param(model.params.at(bn + ".weight")), g.param(model.params.at(bn + ".bias")), st,
                       training);
    h = ag::relu(h);
  }
  return lin(g, model, "head.out", h);
}

ag::Var project(ag::Graph& g, Model& model, ag::Var pooled, HeadRole role, bool training) {
  (void)role;
  return ag::l2_normalize_rows(project_raw(g, model, pooled, training));
}

ag::Var classify(ag::Graph& g, Model& model, ag::Var features) {
  if (!model.has_classifier()) throw ValidationError("classify: model has no classifier");
  return lin(g, model, "cls_head", norm(g, model, "fc_norm", features));
}

Model inflate_to_video(const Model& image_model, int frames) {
  if (frames < 1) throw ValidationError("inflate_to_video: frames must be >= 1");
  if (image_model.cfg.frames != 1) throw ValidationError("inflate_to_video: model is already temporal");
  if (frames == 1) return image_model;
  Model out;
  out.cfg = image_model.cfg;
  out.cfg.frames = frames;
  const int pd = image_model.cfg.patch.patch_dim();
  for (const auto& name : image_model.params.names()) {
    const Parameter& p = image_model.params.at(name);
    Matrix v = p.value;
    if (name == "patch_embed.weight") {
      v.resize(static_cast<Eigen::Index>(frames) * pd, p.value.cols());
      for (int t = 0; t < frames; ++t) v.middleRows(static_cast<Eigen::Index>(t) * pd, pd) = p.value / frames;
    } else if (name == "decoder_pred.weight" || name == "decoder_pred.bias") {
      v.resize(p.value.rows(), static_cast<Eigen::Index>(frames) * pd);
      for (int t = 0; t < frames; ++t) v.middleCols(static_cast<Eigen::Index>(t) * pd, pd) = p.value;
    }
    out.params.add(name, std::move(v), p.trainable, p.decay);
  }
  return out;
}

Matrix sample_tokens(const Model& model, std::span<const Image> frames) {
  if (static_cast<int>(frames.size()) != model.cfg.frames) {
    throw ValidationError("sample_tokens: model expects " + std::to_string(model.cfg.frames) + " frames, got " +
                          std::to_string(frames.size()));
  }
  return model.cfg.frames == 1 ? patchify(frames[0], model.cfg.patch) : patchify_clip(frames, model.cfg.patch);
}

Matrix extract_features(Model& model, std::span<const Matrix> token_rows, bool use_cls) {
  const int l = model.cfg.patch.num_tokens();
  Matrix out(static_cast<Eigen::Index>(token_rows.size()), model.cfg.encoder.width);
  constexpr std::size_t kChunk = 64;
  for (std::size_t begin = 0; begin < token_rows.size(); begin += kChunk) {
    const std::size_t end = std::min(token_rows.size(), begin + kChunk);
    TokenBatch tb;
    tb.batch = static_cast<int>(end - begin);
    tb.length = l;
    tb.tokens.resize(static_cast<Eigen::Index>(tb.batch) * l, model.cfg.token_dim());
    for (std::size_t i = begin; i < end; ++i) {
      tb.tokens.middleRows(static_cast<Eigen::Index>(i - begin) * l, l) = token_rows[i];
    }
    ag::Graph g;
    g.set_grad_enabled(false);
    const Encoded enc = encode(g, model, tb);
    const ag::Var f = use_cls ? cls_features(enc) : pool(enc, model.cfg.pooling, model.cfg.gem_p);
    out.middleRows(static_cast<Eigen::Index>(begin), tb.batch) = f.value();
  }
  return out;
}

int layer_id(const std::string& name, int depth) {
  if (name.starts_with("patch_embed") || name == "cls_token" || name == "pos_embed") return 0;
  if (name.starts_with("blocks.")) {
    const auto dot = name.find('.', 7);
    return std::stoi(name.substr(7, dot - 7)) + 1;
  }
  return depth + 1;
}

}  // namespace vicmae
