// SPDX-License-Identifier: Apache-2.0
#include "vicmae/evalsuite.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "vicmae/error.hpp"
#include "vicmae/trainer.hpp"

using nlohmann::json;

namespace vicmae {

json EvalResult::to_json() const {
  return {{"condition", condition}, {"top1", top1}, {"top5", top5},
          {"n", n},                 {"seed", seed}, {"checkpoint_hash", checkpoint_hash}};
}

std::string model_hash(const Model& model) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(model.params.checksum()));
  return buf;
}

ProbeSpec::ProbeSpec() {
  augment.hflip_prob = 0.0;
  augment.color.enabled = false;
  augment.scale_lo = 0.5;
}

void ProbeSpec::validate() const {
  if (!(lr > 0) || momentum < 0 || momentum >= 1 || weight_decay < 0) throw ValidationError("probe: invalid optimizer");
  if (epochs < 1 || warmup_epochs < 0 || warmup_epochs >= epochs) throw ValidationError("probe: invalid epochs");
  if (batch_size < 1 || augment_views < 0) throw ValidationError("probe: invalid batch or views");
  augment.validate();
}

FinetuneSpec::FinetuneSpec() {
  augment.hflip_prob = 0.0;
  augment.color.enabled = false;
  augment.scale_lo = 0.5;
}

void FinetuneSpec::validate() const {
  if (!(layer_decay > 0 && layer_decay <= 1)) throw ValidationError("finetune: layer decay must lie in (0, 1]");
  if (!(base_lr > 0) || weight_decay < 0) throw ValidationError("finetune: invalid optimizer");
  if (label_smoothing < 0 || label_smoothing >= 1) throw ValidationError("finetune: label smoothing must lie in [0, 1)");
  if (mixup_alpha < 0 || drop_path < 0 || drop_path >= 1) throw ValidationError("finetune: invalid mixup or drop path");
  if (epochs < 1 || warmup_epochs < 0 || warmup_epochs >= epochs) throw ValidationError("finetune: invalid epochs");
  if (batch_size < 1 || clip_stride < 1) throw ValidationError("finetune: invalid batch size or stride");
  augment.validate();
}

json to_json(const ProbeSpec& s) {
  return {{"lr", s.lr},
          {"momentum", s.momentum},
          {"weight_decay", s.weight_decay},
          {"epochs", s.epochs},
          {"warmup_epochs", s.warmup_epochs},
          {"batch_size", s.batch_size},
          {"use_cls", s.use_cls},
          {"augment_views", s.augment_views},
          {"augment", to_json(s.augment)},
          {"seed", s.seed}};
}

json to_json(const FinetuneSpec& s) {
  return {{"base_lr", s.base_lr},
          {"layer_decay", s.layer_decay},
          {"weight_decay", s.weight_decay},
          {"betas", {s.beta1, s.beta2}},
          {"label_smoothing", s.label_smoothing},
          {"mixup_alpha", s.mixup_alpha},
          {"drop_path", s.drop_path},
          {"epochs", s.epochs},
          {"warmup_epochs", s.warmup_epochs},
          {"batch_size", s.batch_size},
          {"augment", to_json(s.augment)},
          {"use_cls", s.use_cls},
          {"clip_stride", s.clip_stride},
          {"seed", s.seed}};
}

void from_json_into(const json& j, ProbeSpec& s) {
  s.lr = j.value("lr", s.lr);
  s.momentum = j.value("momentum", s.momentum);
  s.weight_decay = j.value("weight_decay", s.weight_decay);
  s.epochs = j.value("epochs", s.epochs);
  s.warmup_epochs = j.value("warmup_epochs", s.warmup_epochs);
  s.batch_size = j.value("batch_size", s.batch_size);
  s.use_cls = j.value("use_cls", s.use_cls);
  s.augment_views = j.value("augment_views", s.augment_views);
  if (j.contains("augment")) from_json_into(j.at("augment"), s.augment);
  s.seed = j.value("seed", s.seed);
}

void from_json_into(const json& j, FinetuneSpec& s) {
  s.base_lr = j.value("base_lr", s.base_lr);
  s.layer_decay = j.value("layer_decay", s.layer_decay);
  s.weight_decay = j.value("weight_decay", s.weight_decay);
  if (j.contains("betas")) {
    s.beta1 = j.at("betas").at(0).get<double>();
    s.beta2 = j.at("betas").at(1).get<double>();
  }
  s.label_smoothing = j.value("label_smoothing", s.label_smoothing);
  s.mixup_alpha = j.value("mixup_alpha", s.mixup_alpha);
  s.drop_path = j.value("drop_path", s.drop_path);
  s.epochs = j.value("epochs", s.epochs);
  s.warmup_epochs = j.value("warmup_epochs", s.warmup_epochs);
  s.batch_size = j.value("batch_size", s.batch_size);
  if (j.contains("augment")) from_json_into(j.at("augment"), s.augment);
  s.use_cls = j.value("use_cls", s.use_cls);
  s.clip_stride = j.value("clip_stride", s.clip_stride);
  s.seed = j.value("seed", s.seed);
}

Manifest evaluation_records(const Manifest& m) {
  const ClipKind kind = m.indices_of(ClipKind::video).empty() ? ClipKind::image : ClipKind::video;
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m.records[i].kind == kind && m.records[i].label) keep.push_back(i);
  }
  return m.subset(keep);
}

std::map<std::string, double> layer_lr_scales(const Model& model, double decay) {
  const int depth = model.cfg.encoder.depth;
  std::map<std::string, double> out;
  for (const auto& name : model.params.names()) {
    const int id = std::min(layer_id(name, depth), depth);
    out[name] = std::pow(decay, depth - id);
  }
  return out;
}

// ---- shared helpers ------------------------------------------------------------------

namespace {

std::vector<int> labels_of(const Manifest& m, int num_classes, const char* what) {
  std::vector<int> out;
  out.reserve(m.size());
  for (const auto& r : m.records) {
    if (!r.label) throw ValidationError(std::string(what) + ": record " + r.id + " has no label");
    if (*r.label < 0 || *r.label >= num_classes) {
      throw ValidationError(std::string(what) + ": record " + r.id + " label outside [0, " +
                            std::to_string(num_classes) + ")");
    }
    out.push_back(*r.label);
  }
  return out;
}

int class_count(const Manifest& a, const Manifest& b) { return std::max({a.num_classes, b.num_classes, 1}); }

int clip_span(int frames, int stride) { return (frames - 1) * stride + 1; }

std::vector<Image> clip_at(const Manifest& m, std::size_t r, int start, int frames, int stride) {
  const int nf = m.records[r].num_frames();
  if (start < 0 || start + clip_span(frames, stride) > nf) {
    throw ValidationError("record " + m.records[r].id + " has " + std::to_string(nf) + " frames, clip needs " +
                          std::to_string(clip_span(frames, stride)));
  }
  std::vector<Image> out;
  for (int t = 0; t < frames; ++t) out.push_back(m.frame(r, start + t * stride));
  return out;
}

int center_start(const Manifest& m, std::size_t r, int frames, int stride) {
  const int nf = m.records[r].num_frames();
  const int span = clip_span(frames, stride);
  if (nf < span) {
    throw ValidationError("record " + m.records[r].id + " is shorter than the clip length " + std::to_string(span));
  }
  return (nf - span) / 2;
}

Image fit(const Image& img, int side) {
  return img.height == side && img.width == side ? img : resize_bilinear(img, side, side);
}

Matrix tokens_of(const Model& model, std::vector<Image> frames) {
  for (auto& f : frames) f = fit(f, model.cfg.patch.image_side);
  return sample_tokens(model, frames);
}

// Samples that together describe a record for evaluation: every frame for an
// image model, the central clip for a video model. Returns the record each
// sample belongs to.
void eval_samples(const Model& model, const Manifest& m, int stride, std::vector<Matrix>& samples,
                  std::vector<std::size_t>& owner) {
  const int t = model.cfg.frames;
  for (std::size_t r = 0; r < m.size(); ++r) {
    if (t == 1) {
      for (int f = 0; f < m.records[r].num_frames(); ++f) {
        samples.push_back(tokens_of(model, {m.frame(r, f)}));
        owner.push_back(r);
      }
    } else {
      samples.push_back(tokens_of(model, clip_at(m, r, center_start(m, r, t, stride), t, stride)));
      owner.push_back(r);
    }
  }
}

Matrix average_rows(const Matrix& x, const std::vector<std::size_t>& owner, std::size_t groups) {
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(groups), x.cols());
  std::vector<int> count(groups, 0);
  for (std::size_t i = 0; i < owner.size(); ++i) {
    out.row(static_cast<Eigen::Index>(owner[i])) += x.row(static_cast<Eigen::Index>(i));
    ++count[owner[i]];
  }
  for (std::size_t gi = 0; gi < groups; ++gi) out.row(static_cast<Eigen::Index>(gi)) /= std::max(1, count[gi]);
  return out;
}

double schedule(double peak, double warmup, double total, double t) {
  if (t < warmup) return peak * t / warmup;
  const double progress = std::clamp((t - warmup) / std::max(1e-12, total - warmup), 0.0, 1.0);
  return peak * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

}  // namespace

Matrix predict_logits(Model& model, std::span<const Matrix> samples, bool use_cls) {
  const int l = model.cfg.patch.num_tokens();
  Matrix out(static_cast<Eigen::Index>(samples.size()), model.num_classes());
  constexpr std::size_t kChunk = 64;
  for (std::size_t begin = 0; begin < samples.size(); begin += kChunk) {
    const std::size_t end = std::min(samples.size(), begin + kChunk);
    TokenBatch tb;
    tb.batch = static_cast<int>(end - begin);
    tb.length = l;
    tb.tokens.resize(static_cast<Eigen::Index>(tb.batch) * l, model.cfg.token_dim());
    for (std::size_t i = begin; i < end; ++i) tb.tokens.middleRows(static_cast<Eigen::Index>(i - begin) * l, l) = samples[i];
    ag::Graph g;
    g.set_grad_enabled(false);
    const Encoded enc = encode(g, model, tb);
    const ag::Var f = use_cls ? cls_features(enc) : pool(enc, model.cfg.pooling, model.cfg.gem_p);
    out.middleRows(static_cast<Eigen::Index>(begin), tb.batch) = classify(g, model, f).value();
  }
  return out;
}

std::pair<double, double> topk_accuracy(const Matrix& logits, const std::vector<int>& labels) {
  if (static_cast<std::size_t>(logits.rows()) != labels.size()) throw ValidationError("topk: label count mismatch");
  if (labels.empty()) return {0.0, 0.0};
  int top1 = 0;
  int top5 = 0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double own = logits(r, labels[static_cast<std::size_t>(r)]);
    int above = 0;
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
      if (logits(r, c) > own) ++above;
    }
    if (above == 0) ++top1;
    if (above < 5) ++top5;
  }
  const double n = static_cast<double>(labels.size());
  return {100.0 * top1 / n, 100.0 * top5 / n};
}

// ---- linear probe -------------------------------------------------------------------

EvalResult linear_probe(Model& model, const Manifest& train, const Manifest& val, const ProbeSpec& spec) {
  spec.validate();
  if (train.empty() || val.empty()) throw ValidationError("probe: empty train or validation manifest");
  const int classes = class_count(train, val);
  const std::vector<int> train_labels = labels_of(train, classes, "probe");
  const std::vector<int> val_labels = labels_of(val, classes, "probe");
  const int stride = 1;

  // Clean features, then augmented copies of the training set.
  std::vector<Matrix> samples;
  std::vector<std::size_t> owner;
  eval_samples(model, train, stride, samples, owner);
  std::vector<int> y = train_labels;
  std::size_t groups = train.size();
  for (int v = 0; v < spec.augment_views; ++v) {
    for (std::size_t r = 0; r < train.size(); ++r) {
      Rng rng(derive_seed(spec.seed, {tag("probe-aug"), static_cast<std::uint64_t>(v), r}));
      const int t = model.cfg.frames;
      std::vector<Image> frames;
      if (t == 1) {
        for (int f = 0; f < train.records[r].num_frames(); ++f) frames.push_back(train.frame(r, f));
      } else {
        frames = clip_at(train, r, center_start(train, r, t, stride), t, stride);
      }
      frames = augment_clip(frames, spec.augment, model.cfg.patch.image_side, rng);
      if (t == 1) {
        for (auto& f : frames) {
          samples.push_back(tokens_of(model, {f}));
          owner.push_back(groups);
        }
      } else {
        samples.push_back(tokens_of(model, frames));
        owner.push_back(groups);
      }
      y.push_back(train_labels[r]);
      ++groups;
    }
  }
  Matrix x = average_rows(extract_features(model, samples, spec.use_cls), owner, groups);

  std::vector<Matrix> vsamples;
  std::vector<std::size_t> vowner;
  eval_samples(model, val, stride, vsamples, vowner);
  Matrix xv = average_rows(extract_features(model, vsamples, spec.use_cls), vowner, val.size());

  // Normalization without affine parameters, using training statistics.
  const RowVector mean = x.colwise().mean();
  const RowVector inv_std =
      ((x.rowwise() - mean).array().square().colwise().mean() + 1e-6).rsqrt().matrix();
  x = (x.rowwise() - mean).array().rowwise() * inv_std.array();
  xv = (xv.rowwise() - mean).array().rowwise() * inv_std.array();

  Rng rng(derive_seed(spec.seed, {tag("probe")}));
  const Eigen::Index d = x.cols();
  Matrix w(d, classes);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.truncated_normal(0.01);
  RowVector b = RowVector::Zero(classes);
  Matrix vw = Matrix::Zero(d, classes);
  RowVector vb = RowVector::Zero(classes);

  const int n = static_cast<int>(x.rows());
  const int spe = (n + spec.batch_size - 1) / spec.batch_size;
  const double total = static_cast<double>(spec.epochs) * spe;
  const double warm = static_cast<double>(spec.warmup_epochs) * spe;
  std::int64_t step = 0;
  for (int epoch = 0; epoch < spec.epochs; ++epoch) {
    Rng er(derive_seed(spec.seed, {tag("probe-epoch"), static_cast<std::uint64_t>(epoch)}));
    const std::vector<int> order = er.permutation(n);
    for (int s = 0; s < spe; ++s) {
      const int lo = s * spec.batch_size;
      const int hi = std::min(n, lo + spec.batch_size);
      Matrix xb(hi - lo, d);
      Matrix target = Matrix::Zero(hi - lo, classes);
      for (int i = lo; i < hi; ++i) {
        xb.row(i - lo) = x.row(order[static_cast<std::size_t>(i)]);
        target(i - lo, y[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]) = 1.0;
      }
      Matrix logits = (xb * w).rowwise() + b;
      for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const double m = logits.row(r).maxCoeff();
        logits.row(r) = (logits.row(r).array() - m).exp().matrix();
        logits.row(r) /= logits.row(r).sum();
      }
      const Matrix dl = (logits - target) / static_cast<double>(hi - lo);
      const Matrix gw = xb.transpose() * dl + spec.weight_decay * w;
      const RowVector gb = dl.colwise().sum();
      const double lr = schedule(spec.lr, warm, total, static_cast<double>(step));
      vw = spec.momentum * vw + gw;
      vb = spec.momentum * vb + gb;
      w -= lr * vw;
      b -= lr * vb;
      ++step;
    }
  }
  const Matrix val_logits = (xv * w).rowwise() + b;
  const auto [t1, t5] = topk_accuracy(val_logits, val_labels);
  EvalResult res;
  res.condition = "probe";
  res.top1 = t1;
  res.top5 = t5;
  res.n = static_cast<int>(val.size());
  res.seed = spec.seed;
  res.checkpoint_hash = model_hash(model);
  return res;
}

// ---- finetuning ------------------------------------------------------------------------

namespace {

bool finetuned(const std::string& name) {
  return !(name.starts_with("decoder") || name == "mask_token" || name.starts_with("head.") || name == "logit_scale");
}

EvalResult evaluate(Model& m, const Manifest& val, const std::vector<int>& labels, int stride, bool use_cls,
                    const char* condition, std::uint64_t seed) {
  std::vector<Matrix> samples;
  std::vector<std::size_t> owner;
  eval_samples(m, val, stride, samples, owner);
  const Matrix logits = average_rows(predict_logits(m, samples, use_cls), owner, val.size());
  const auto [t1, t5] = topk_accuracy(logits, labels);
  EvalResult res;
  res.condition = condition;
  res.top1 = t1;
  res.top5 = t5;
  res.n = static_cast<int>(val.size());
  res.seed = seed;
  return res;
}

}  // namespace

FinetuneOutput finetune(const Model& model, const Manifest& train, const Manifest& val, const FinetuneSpec& spec) {
  spec.validate();
  if (train.empty() || val.empty()) throw ValidationError("finetune: empty train or validation manifest");
  const int classes = class_count(train, val);
  const std::vector<int> train_labels = labels_of(train, classes, "finetune");
  const std::vector<int> val_labels = labels_of(val, classes, "finetune");

  FinetuneOutput out;
  out.model = model;
  Model& m = out.model;
  if (!m.has_classifier() || m.num_classes() != classes) add_classifier(m, classes, spec.seed);
  const std::string source_hash = model_hash(model);

  std::map<std::string, double> scales = layer_lr_scales(m, spec.layer_decay);
  for (auto& [name, s] : scales) {
    if (!finetuned(name)) s = 0.0;
  }
  const auto scale_fn = [&scales](const std::string& name) { return scales.at(name); };
  AdamW opt(spec.beta1, spec.beta2, 1e-8, spec.weight_decay);

  const int n = static_cast<int>(train.size());
  const int t = m.cfg.frames;
  const int side = m.cfg.patch.image_side;
  const int l = m.cfg.patch.num_tokens();
  const int spe = (n + spec.batch_size - 1) / spec.batch_size;
  const double peak = spec.base_lr * spec.batch_size / 256.0;
  std::int64_t step = 0;
  for (int epoch = 0; epoch < spec.epochs; ++epoch) {
    Rng er(derive_seed(spec.seed, {tag("ft-epoch"), static_cast<std::uint64_t>(epoch)}));
    const std::vector<int> order = er.permutation(n);
    for (int s = 0; s < spe; ++s) {
      const int lo = s * spec.batch_size;
      const int hi = std::min(n, lo + spec.batch_size);
      const int bsz = hi - lo;
      TokenBatch tb;
      tb.batch = bsz;
      tb.length = l;
      tb.tokens.resize(static_cast<Eigen::Index>(bsz) * l, m.cfg.token_dim());
      Matrix target = Matrix::Constant(bsz, classes, spec.label_smoothing / classes);
      for (int i = 0; i < bsz; ++i) {
        const auto r = static_cast<std::size_t>(order[static_cast<std::size_t>(lo + i)]);
        Rng rng(derive_seed(spec.seed, {tag("ft-sample"), static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(i)}));
        std::vector<Image> frames;
        const int nf = train.records[r].num_frames();
        if (t == 1) {
          frames.push_back(train.frame(r, static_cast<int>(rng.below(static_cast<std::uint64_t>(nf)))));
        } else {
          const int span = clip_span(t, spec.clip_stride);
          if (nf < span) throw ValidationError("record " + train.records[r].id + " is shorter than the clip length");
          frames = clip_at(train, r, static_cast<int>(rng.below(static_cast<std::uint64_t>(nf - span + 1))), t,
                           spec.clip_stride);
        }
        frames = augment_clip(frames, spec.augment, side, rng);
        tb.tokens.middleRows(static_cast<Eigen::Index>(i) * l, l) = sample_tokens(m, frames);
        target(i, train_labels[r]) += 1.0 - spec.label_smoothing;
      }
      Rng step_rng(derive_seed(spec.seed, {tag("ft-step"), static_cast<std::uint64_t>(step)}));
      if (spec.mixup_alpha > 0.0 && bsz > 1) {
        const double lam = step_rng.beta(spec.mixup_alpha, spec.mixup_alpha);
        // Mix every sample with its mirror in the batch.
        const Matrix x0 = tb.tokens;
        const Matrix y0 = target;
        for (int i = 0; i < bsz; ++i) {
          const int j = bsz - 1 - i;
          tb.tokens.middleRows(static_cast<Eigen::Index>(i) * l, l) =
              lam * x0.middleRows(static_cast<Eigen::Index>(i) * l, l) +
              (1.0 - lam) * x0.middleRows(static_cast<Eigen::Index>(j) * l, l);
          target.row(i) = lam * y0.row(i) + (1.0 - lam) * y0.row(j);
        }
      }
      ag::Graph g;
      ForwardOptions fo;
      fo.training = true;
      fo.drop_path = spec.drop_path;
      fo.rng = &step_rng;
      const Encoded enc = encode(g, m, tb, fo);
      const ag::Var f = spec.use_cls ? cls_features(enc) : pool(enc, m.cfg.pooling, m.cfg.gem_p);
      const ag::Var loss = ag::softmax_cross_entropy(classify(g, m, f), target);
      if (!std::isfinite(loss.scalar())) throw NumericError("finetune: non-finite loss at step " + std::to_string(step));
      m.params.zero_grad();
      g.backward(loss);
      opt.step(m.params, schedule(peak, spec.warmup_epochs * spe, static_cast<double>(spec.epochs) * spe,
                                  static_cast<double>(step)),
               scale_fn);
      ++step;
    }
  }
  out.result = evaluate(m, val, val_labels, spec.clip_stride, spec.use_cls, "finetune", spec.seed);
  out.result.checkpoint_hash = source_hash;
  return out;
}

Manifest stratified_subset(const Manifest& m, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ValidationError("fraction must lie in (0, 1]");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!m.records[i].label) throw ValidationError("stratified_subset: record " + m.records[i].id + " has no label");
    by_class[*m.records[i].label].push_back(i);
  }
  std::vector<std::size_t> keep;
  for (auto& [label, idx] : by_class) {
    const int k = static_cast<int>(std::lround(fraction * static_cast<double>(idx.size())));
    if (k < 1) {
      throw ValidationError("fraction " + std::to_string(fraction) + " leaves no example of class " +
                            std::to_string(label));
    }
    Rng rng(derive_seed(seed, {tag("subset"), static_cast<std::uint64_t>(label)}));
    if (k < static_cast<int>(idx.size())) rng.shuffle(std::span<std::size_t>(idx));
    keep.insert(keep.end(), idx.begin(), idx.begin() + k);
  }
  std::sort(keep.begin(), keep.end());
  return m.subset(keep);
}

std::vector<EvalResult> semi_supervised_sweep(const Model& model, const Manifest& train, const Manifest& val,
                                              const std::vector<double>& fractions, const FinetuneSpec& spec) {
  if (fractions.empty()) throw ValidationError("semi-supervised sweep: no fractions");
  for (double f : fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw ValidationError("fraction " + std::to_string(f) + " outside (0, 1]");
  }
  std::vector<EvalResult> out;
  for (double f : fractions) {
    FinetuneSpec s = spec;
    s.mixup_alpha = 0.0;
    const Manifest subset = stratified_subset(train, f, spec.seed);
    EvalResult r = finetune(model, subset, val, s).result;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "semi@%g", f);
    r.condition = buf;
    out.push_back(std::move(r));
  }
  return out;
}

// ---- video evaluation ------------------------------------------------------------------

std::string to_string(TemporalMode m) {
  switch (m) {
    case TemporalMode::ordered: return "ordered";
    case TemporalMode::shuffled: return "shuffled";
    case TemporalMode::repeated: return "repeated";
  }
  return "ordered";
}

TemporalMode parse_temporal_mode(const std::string& s) {
  if (s == "ordered") return TemporalMode::ordered;
  if (s == "shuffled") return TemporalMode::shuffled;
  if (s == "repeated") return TemporalMode::repeated;
  throw ValidationError("unknown temporal mode: " + s);
}

EvalResult multiview_video_eval(Model& model, const Manifest& manifest, int k_clips, int spatial_views,
                                int clip_stride) {
  if (k_clips < 1 || spatial_views < 1) throw ValidationError("multiview: K and views must be >= 1");
  if (!model.has_classifier()) throw ValidationError("multiview: model has no classifier");
  const int classes = model.num_classes();
  const std::vector<int> labels = labels_of(manifest, classes, "multiview");
  const int t = model.cfg.frames;
  const int side = model.cfg.patch.image_side;
  std::vector<Matrix> samples;
  std::vector<std::size_t> owner;
  for (std::size_t r = 0; r < manifest.size(); ++r) {
    const int nf = manifest.records[r].num_frames();
    const int span = clip_span(t, clip_stride);
    if (nf < span) {
      throw ValidationError("video " + manifest.records[r].id + " has " + std::to_string(nf) +
                            " frames, shorter than the clip length " + std::to_string(span));
    }
    for (int k = 0; k < k_clips; ++k) {
      const int start = k_clips == 1 ? (nf - span) / 2
                                     : static_cast<int>(std::lround(static_cast<double>(k) * (nf - span) / (k_clips - 1)));
      const std::vector<Image> clip = clip_at(manifest, r, start, t, clip_stride);
      for (int v = 0; v < spatial_views; ++v) {
        std::vector<Image> view;
        for (const Image& f : clip) {
          if (spatial_views == 1) {
            view.push_back(fit(f, side));
            continue;
          }
          const int c = static_cast<int>(std::lround(0.875 * std::min(f.height, f.width)));
          const int oy = v * (f.height - c) / (spatial_views - 1);
          const int ox = v * (f.width - c) / (spatial_views - 1);
          view.push_back(crop_resize(f, oy, ox, c, c, side, side));
        }
        samples.push_back(sample_tokens(model, view));
        owner.push_back(r);
      }
    }
  }
  const Matrix logits = average_rows(predict_logits(model, samples), owner, manifest.size());
  const auto [t1, t5] = topk_accuracy(logits, labels);
  EvalResult res;
  res.condition = "multiview " + std::to_string(k_clips) + "x" + std::to_string(spatial_views);
  res.top1 = t1;
  res.top5 = t5;
  res.n = static_cast<int>(manifest.size());
  res.views = k_clips * spatial_views;
  res.checkpoint_hash = model_hash(model);
  return res;
}

EvalResult temporal_ablation(Model& model, const Manifest& manifest, const TemporalSpec& spec) {
  if (!model.has_classifier()) throw ValidationError("temporal ablation: model has no classifier");
  const int t = model.cfg.frames;
  if (t < 2) throw ValidationError("temporal ablation needs a video model with at least 2 frames per clip");
  if (spec.mode == TemporalMode::shuffled && spec.permutations.empty() && spec.n_perms < 1) {
    throw ValidationError("temporal ablation: n_perms must be >= 1");
  }
  for (const auto& p : spec.permutations) {
    std::vector<int> s = p;
    std::sort(s.begin(), s.end());
    for (int i = 0; i < static_cast<int>(s.size()); ++i) {
      if (static_cast<int>(s.size()) != t || s[static_cast<std::size_t>(i)] != i) {
        throw ValidationError("temporal ablation: permutation is not a permutation of the clip frames");
      }
    }
  }
  const std::vector<int> labels = labels_of(manifest, model.num_classes(), "temporal");
  std::vector<std::vector<Image>> clips;
  for (std::size_t r = 0; r < manifest.size(); ++r) {
    if (manifest.records[r].num_frames() < 2) throw ValidationError("temporal ablation: video " + manifest.records[r].id + " has T < 2");
    clips.push_back(clip_at(manifest, r, center_start(manifest, r, t, spec.clip_stride), t, spec.clip_stride));
  }
  const auto accuracy = [&](const std::function<std::vector<int>(std::size_t)>& order_of) {
    std::vector<Matrix> samples;
    for (std::size_t r = 0; r < clips.size(); ++r) {
      const std::vector<int> order = order_of(r);
      std::vector<Image> frames;
      for (int i : order) frames.push_back(fit(clips[r][static_cast<std::size_t>(i)], model.cfg.patch.image_side));
      samples.push_back(sample_tokens(model, frames));
    }
    return topk_accuracy(predict_logits(model, samples), labels);
  };

  double top1 = 0.0;
  double top5 = 0.0;
  int trials = 0;
  std::vector<int> identity(static_cast<std::size_t>(t));
  std::iota(identity.begin(), identity.end(), 0);
  switch (spec.mode) {
    case TemporalMode::ordered: {
      std::tie(top1, top5) = accuracy([&](std::size_t) { return identity; });
      trials = 1;
      break;
    }
    case TemporalMode::shuffled: {
      const int n = spec.permutations.empty() ? spec.n_perms : static_cast<int>(spec.permutations.size());
      for (int p = 0; p < n; ++p) {
        const auto [a, b] = accuracy([&](std::size_t r) {
          if (!spec.permutations.empty()) return spec.permutations[static_cast<std::size_t>(p)];
          Rng rng(derive_seed(spec.seed, {tag("perm"), static_cast<std::uint64_t>(p), r}));
          return rng.permutation(t);
        });
        top1 += a;
        top5 += b;
      }
      trials = n;
      break;
    }
    case TemporalMode::repeated: {
      for (int f = 0; f < t; ++f) {
        const auto [a, b] = accuracy([&](std::size_t) { return std::vector<int>(static_cast<std::size_t>(t), f); });
        top1 += a;
        top5 += b;
      }
      trials = t;
      break;
    }
  }
  EvalResult res;
  res.condition = "temporal " + to_string(spec.mode);
  res.top1 = top1 / trials;
  res.top5 = top5 / trials;
  res.n = static_cast<int>(manifest.size());
  res.seed = spec.seed;
  res.views = trials;
  res.checkpoint_hash = model_hash(model);
  return res;
}

}  // namespace vicmae
