// SPDX-License-Identifier: Apache-2.0
#include "vicmae/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "vicmae/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace vicmae {

void OptimSpec::validate() const {
  std::vector<std::string> errs;
  if (!(base_lr > 0)) errs.push_back("base_lr must be positive");
  if (batch_size < 2) errs.push_back("batch_size must be >= 2");
  if (total_epochs < 1) errs.push_back("total_epochs must be >= 1");
  if (warmup_epochs < 0 || warmup_epochs >= total_epochs) errs.push_back("warmup_epochs must lie in [0, total_epochs)");
  if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) errs.push_back("betas must lie in [0, 1)");
  if (weight_decay < 0) errs.push_back("weight_decay must be >= 0");
  if (!errs.empty()) {
    std::string msg = "invalid optimizer spec:";
    for (const auto& e : errs) msg += " " + e + ";";
    throw ValidationError(msg);
  }
}

double effective_lr(const OptimSpec& spec, double epoch_fraction) {
  const double peak = spec.peak_lr();
  if (epoch_fraction < spec.warmup_epochs) return peak * epoch_fraction / spec.warmup_epochs;
  const double span = spec.total_epochs - spec.warmup_epochs;
  const double progress = std::clamp((epoch_fraction - spec.warmup_epochs) / span, 0.0, 1.0);
  return peak * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

// ---- AdamW -------------------------------------------------------------------------

void AdamW::step(ParameterStore& params, double lr, const std::function<double(const std::string&)>& lr_scale) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (const auto& name : params.names()) {
    Parameter& p = params.at(name);
    if (!p.trainable) continue;
    if (p.grad.size() == 0) p.grad = Matrix::Zero(p.value.rows(), p.value.cols());
    const double plr = lr_scale ? lr * lr_scale(name) : lr;
    auto [mit, m_new] = m_.try_emplace(name, Matrix::Zero(p.value.rows(), p.value.cols()));
    auto [vit, v_new] = v_.try_emplace(name, Matrix::Zero(p.value.rows(), p.value.cols()));
    Matrix& m = mit->second;
    Matrix& v = vit->second;
    if (p.decay) p.value *= (1.0 - plr * weight_decay_);
    m = beta1_ * m + (1.0 - beta1_) * p.grad;
    v = beta2_ * v + (1.0 - beta2_) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= plr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps_);
  }
}

void AdamW::save(Checkpoint& ck) const {
  ck.meta["opt"] = {{"t", t_}, {"beta1", beta1_}, {"beta2", beta2_}, {"eps", eps_}, {"weight_decay", weight_decay_}};
  for (const auto& [name, m] : m_) ck.tensors.emplace_back("opt.m." + name, m);
  for (const auto& [name, v] : v_) ck.tensors.emplace_back("opt.v." + name, v);
}

void AdamW::load(const Checkpoint& ck) {
  const json& o = ck.meta.at("opt");
  t_ = o.at("t").get<std::int64_t>();
  beta1_ = o.at("beta1").get<double>();
  beta2_ = o.at("beta2").get<double>();
  eps_ = o.at("eps").get<double>();
  weight_decay_ = o.at("weight_decay").get<double>();
  m_.clear();
  v_.clear();
  for (const auto& [name, t] : ck.tensors) {
    if (name.starts_with("opt.m.")) m_[name.substr(6)] = t;
    if (name.starts_with("opt.v.")) v_[name.substr(6)] = t;
  }
}

// ---- configuration -----------------------------------------------------------------

std::string to_string(Objective o) {
  switch (o) {
    case Objective::vicmae: return "vicmae";
    case Objective::mae_simsiam: return "mae_simsiam";
    case Objective::mae_vicreg: return "mae_vicreg";
    case Objective::mae_only: return "mae_only";
  }
  return "vicmae";
}

Objective parse_objective(const std::string& s) {
  if (s == "vicmae") return Objective::vicmae;
  if (s == "mae_simsiam") return Objective::mae_simsiam;
  if (s == "mae_vicreg") return Objective::mae_vicreg;
  if (s == "mae_only") return Objective::mae_only;
  throw ValidationError("unknown objective: " + s + " (expected vicmae, mae_simsiam, mae_vicreg, mae_only)");
}

void TrainConfig::validate() const {
  std::vector<std::string> errs;
  const auto check = [&](const auto& fn) {
    try {
      fn();
    } catch (const ValidationError& e) {
      errs.emplace_back(e.what());
    }
  };
  check([&] { model.validate(); });
  check([&] { optim.validate(); });
  check([&] { sampling.validate(); });
  check([&] { augment.video.validate(); });
  check([&] { augment.image.validate(); });
  check([&] { loss.vicreg.validate(); });
  if (!(image_ratio >= 0 && image_ratio <= 1)) errs.emplace_back("image_ratio must lie in [0, 1]");
  if (!(mask_ratio >= 0 && mask_ratio < 1)) errs.emplace_back("mask_ratio must lie in [0, 1)");
  if (mask_ratio > 0 && visible_count(model.patch.num_tokens(), mask_ratio) == model.patch.num_tokens()) {
    errs.emplace_back("mask_ratio masks no token at this patch grid");
  }
  if (!(loss.switch_fraction >= 0 && loss.switch_fraction <= 1)) errs.emplace_back("switch_fraction must lie in [0, 1]");
  if (loss.lambda_max < 0) errs.emplace_back("lambda_max must be >= 0");
  if (loss.objective == Objective::mae_simsiam && model.head.out_dim != model.encoder.width) {
    errs.emplace_back("mae_simsiam needs head.out_dim equal to the encoder width");
  }
  if ((loss.objective == Objective::mae_simsiam || loss.objective == Objective::mae_vicreg) &&
      !model.use_cls_token) {
    errs.emplace_back("negative-free objectives use the class token; enable use_cls_token");
  }
  if (!loss.recon_enabled && loss.objective == Objective::mae_only) {
    errs.emplace_back("mae_only with reconstruction disabled has nothing to train");
  }
  if (model.frames != 1) errs.emplace_back("pretraining runs on single frames (model.frames must be 1)");
  if (steps_per_epoch < 0 || max_steps < 0 || checkpoint_every < 0) errs.emplace_back("step counts must be >= 0");
  if (workers < 1) errs.emplace_back("workers must be >= 1");
  if (!errs.empty()) {
    std::string msg = "invalid training config:";
    for (const auto& e : errs) msg += "\n  - " + e;
    throw ValidationError(msg);
  }
}

json to_json(const TrainConfig& c) {
  return {{"model", to_json(c.model)},
          {"optim",
           {{"base_lr", c.optim.base_lr},
            {"betas", {c.optim.beta1, c.optim.beta2}},
            {"weight_decay", c.optim.weight_decay},
            {"eps", c.optim.eps},
            {"batch_size", c.optim.batch_size},
            {"warmup_epochs", c.optim.warmup_epochs},
            {"total_epochs", c.optim.total_epochs}}},
          {"sampling", to_json(c.sampling)},
          {"augment", {{"video", to_json(c.augment.video)}, {"image", to_json(c.augment.image)}}},
          {"image_ratio", c.image_ratio},
          {"mask_ratio", c.mask_ratio},
          {"loss",
           {{"objective", to_string(c.loss.objective)},
            {"lambda_max", c.loss.lambda_max},
            {"switch_fraction", c.loss.switch_fraction},
            {"lambda_ramp", c.loss.lambda_ramp},
            {"single_view_recon", c.loss.single_view_recon},
            {"norm_pix_loss", c.loss.norm_pix_loss},
            {"loss_scale", c.loss.loss_scale},
            {"recon_enabled", c.loss.recon_enabled},
            {"vicreg",
             {{"lambda_inv", c.loss.vicreg.lambda_inv},
              {"mu", c.loss.vicreg.mu},
              {"nu", c.loss.vicreg.nu},
              {"gamma", c.loss.vicreg.gamma},
              {"eps", c.loss.vicreg.eps}}}}},
          {"seed", c.seed},
          {"steps_per_epoch", c.steps_per_epoch},
          {"max_steps", c.max_steps},
          {"checkpoint_every", c.checkpoint_every},
          {"workers", c.workers},
          {"track_grad_norms", c.track_grad_norms}};
}

void from_json_into(const json& j, TrainConfig& c) {
  if (j.contains("model")) from_json_into(j.at("model"), c.model);
  if (j.contains("optim")) {
    const json& o = j.at("optim");
    c.optim.base_lr = o.value("base_lr", c.optim.base_lr);
    if (o.contains("betas")) {
      c.optim.beta1 = o.at("betas").at(0).get<double>();
      c.optim.beta2 = o.at("betas").at(1).get<double>();
    }
    c.optim.weight_decay = o.value("weight_decay", c.optim.weight_decay);
    c.optim.eps = o.value("eps", c.optim.eps);
    c.optim.batch_size = o.value("batch_size", c.optim.batch_size);
    c.optim.warmup_epochs = o.value("warmup_epochs", c.optim.warmup_epochs);
    c.optim.total_epochs = o.value("total_epochs", c.optim.total_epochs);
  }
  if (j.contains("sampling")) from_json_into(j.at("sampling"), c.sampling);
  if (j.contains("augment")) {
    const json& a = j.at("augment");
    if (a.contains("video")) from_json_into(a.at("video"), c.augment.video);
    if (a.contains("image")) from_json_into(a.at("image"), c.augment.image);
  }
  c.image_ratio = j.value("image_ratio", c.image_ratio);
  c.mask_ratio = j.value("mask_ratio", c.mask_ratio);
  if (j.contains("loss")) {
    const json& l = j.at("loss");
    if (l.contains("objective")) c.loss.objective = parse_objective(l.at("objective").get<std::string>());
    c.loss.lambda_max = l.value("lambda_max", c.loss.lambda_max);
    c.loss.switch_fraction = l.value("switch_fraction", c.loss.switch_fraction);
    c.loss.lambda_ramp = l.value("lambda_ramp", c.loss.lambda_ramp);
    c.loss.single_view_recon = l.value("single_view_recon", c.loss.single_view_recon);
    c.loss.norm_pix_loss = l.value("norm_pix_loss", c.loss.norm_pix_loss);
    c.loss.loss_scale = l.value("loss_scale", c.loss.loss_scale);
    c.loss.recon_enabled = l.value("recon_enabled", c.loss.recon_enabled);
    if (l.contains("vicreg")) {
      const json& v = l.at("vicreg");
      c.loss.vicreg.lambda_inv = v.value("lambda_inv", c.loss.vicreg.lambda_inv);
      c.loss.vicreg.mu = v.value("mu", c.loss.vicreg.mu);
      c.loss.vicreg.nu = v.value("nu", c.loss.vicreg.nu);
      c.loss.vicreg.gamma = v.value("gamma", c.loss.vicreg.gamma);
      c.loss.vicreg.eps = v.value("eps", c.loss.vicreg.eps);
    }
  }
  c.seed = j.value("seed", c.seed);
  c.steps_per_epoch = j.value("steps_per_epoch", c.steps_per_epoch);
  c.max_steps = j.value("max_steps", c.max_steps);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.workers = j.value("workers", c.workers);
  c.track_grad_norms = j.value("track_grad_norms", c.track_grad_norms);
}

json MetricRow::to_json() const {
  return {{"step", step},   {"epoch", epoch}, {"recon", recon},     {"contrastive", contrastive},
          {"lambda", lambda}, {"total", total}, {"emb_std", emb_std}, {"lr", lr}};
}

MetricRow MetricRow::from_json(const json& j) {
  MetricRow r;
  r.step = j.at("step").get<std::int64_t>();
  r.epoch = j.at("epoch").get<int>();
  r.recon = j.at("recon").get<double>();
  r.contrastive = j.at("contrastive").get<double>();
  r.lambda = j.at("lambda").get<double>();
  r.total = j.at("total").get<double>();
  r.emb_std = j.at("emb_std").get<double>();
  r.lr = j.at("lr").get<double>();
  return r;
}

// ---- training step --------------------------------------------------------------------

RunState init_run(const TrainConfig& cfg) {
  cfg.validate();
  RunState s;
  s.seed = cfg.seed;
  s.model = init_model(cfg.model, cfg.seed);
  s.opt = AdamW(cfg.optim.beta1, cfg.optim.beta2, cfg.optim.eps, cfg.optim.weight_decay);
  return s;
}

double collapse_monitor(const Matrix& pooled) {
  if (pooled.rows() < 2) throw ValidationError("collapse_monitor: needs N >= 2");
  const Matrix c = pooled.rowwise() - pooled.colwise().mean();
  const RowVector sd = (c.array().square().colwise().mean()).sqrt().matrix();
  return sd.mean();
}

namespace {

double grad_norm(const ParameterStore& ps) {
  double acc = 0.0;
  ps.for_each([&](const std::string&, const Parameter& p) {
    if (p.trainable && p.grad.size() > 0) acc += p.grad.squaredNorm();
  });
  return std::sqrt(acc);
}

std::string term_dump(double recon, double ctr, double lambda) {
  std::ostringstream ss;
  ss << "recon=" << recon << " contrastive=" << ctr << " lambda=" << lambda;
  return ss.str();
}

}  // namespace

StepResult train_step(RunState& state, const std::vector<ViewPair>& batch, const TrainConfig& cfg, double lambda,
                      double lr, std::uint64_t step_seed) {
  const int n = static_cast<int>(batch.size());
  if (n < 2) throw ValidationError("train_step: batch size must be >= 2");
  Model& model = state.model;
  const ModelConfig& mc = model.cfg;
  const int l = mc.patch.num_tokens();

  std::vector<Image> views;
  views.reserve(static_cast<std::size_t>(2 * n));
  for (const auto& vp : batch) views.push_back(vp.view_a);
  for (const auto& vp : batch) views.push_back(vp.view_b);
  const TokenBatch full = patchify(std::span<const Image>(views), mc.patch);
  Rng mask_rng(derive_seed(step_seed, {tag("mask")}));
  const TokenBatch visible = random_mask(full, cfg.mask_ratio, mask_rng);

  ag::Graph g;
  ForwardOptions fopt;
  fopt.training = true;
  const Encoded enc = encode(g, model, visible, fopt);

  // Reconstruction.
  ag::Var recon = g.constant(Matrix::Zero(1, 1));
  if (cfg.loss.recon_enabled) {
    const Matrix target = cfg.loss.norm_pix_loss ? normalize_patch_targets(full.tokens) : full.tokens;
    ag::Var pred = decode(g, model, enc);
    if (cfg.loss.single_view_recon) {
      const std::vector<MaskPlan> first(enc.plans.begin(), enc.plans.begin() + n);
      recon = recon_loss(ag::slice_rows(pred, 0, n * l), target.topRows(static_cast<Eigen::Index>(n) * l), first);
    } else {
      recon = recon_loss(pred, target, enc.plans);
    }
  }

  // Global features and the pair objective.
  const bool uses_cls = cfg.loss.objective == Objective::mae_simsiam || cfg.loss.objective == Objective::mae_vicreg;
  ag::Var feats = uses_cls ? cls_features(enc) : pool(enc, mc.pooling, mc.gem_p);
  const double emb_std = collapse_monitor(feats.value());
  ag::Var fa = ag::slice_rows(feats, 0, n);
  ag::Var fb = ag::slice_rows(feats, n, n);
  ag::Var ctr = g.constant(Matrix::Zero(1, 1));
  switch (cfg.loss.objective) {
    case Objective::vicmae: {
      ag::Var p = project(g, model, fa, HeadRole::predictor, true);
      ag::Var z = project(g, model, fb, HeadRole::target, true);
      InfoNceOptions o;
      o.tau = mc.tau;
      o.loss_scale = cfg.loss.loss_scale;
      if (mc.learnable_log_tau) o.log_scale = g.param(model.params.at("logit_scale"));
      ctr = info_nce(p, z, o);
      break;
    }
    case Objective::mae_simsiam: {
      ag::Var pa = ag::l2_normalize_rows(project_raw(g, model, fa, true));
      ag::Var pb = ag::l2_normalize_rows(project_raw(g, model, fb, true));
      ag::Var za = ag::l2_normalize_rows(ag::detach(fa));
      ag::Var zb = ag::l2_normalize_rows(ag::detach(fb));
      ctr = ag::weighted_sum({{simsiam_loss(pa, zb), 0.5}, {simsiam_loss(pb, za), 0.5}});
      break;
    }
    case Objective::mae_vicreg: {
      ctr = vicreg_loss(project_raw(g, model, fa, true), project_raw(g, model, fb, true), cfg.loss.vicreg);
      break;
    }
    case Objective::mae_only: break;
  }

  const double lam = cfg.loss.objective == Objective::mae_only ? 0.0 : lambda;
  StepResult res;
  if (!std::isfinite(recon.scalar()) || !std::isfinite(ctr.scalar())) {
    throw NumericError("non-finite loss at step " + std::to_string(state.step) + ": " +
                       term_dump(recon.scalar(), ctr.scalar(), lam));
  }
  res.report = combined_loss(recon.scalar(), ctr.scalar(), lam);
  res.emb_std = emb_std;
  ag::Var total = ag::weighted_sum({{recon, 1.0}, {ctr, lam}});
  if (total.scalar() != res.report.total) throw NumericError("loss bookkeeping mismatch");

  ParameterStore& ps = model.params;
  if (cfg.track_grad_norms) {
    ps.zero_grad();
    g.backward(recon);
    res.report.recon_grad_norm = grad_norm(ps);
    ps.zero_grad();
    g.backward(ctr, lam);
    res.report.contrastive_grad_norm = grad_norm(ps);
  }
  ps.zero_grad();
  g.backward(total);
  state.opt.step(ps, lr);
  ++state.step;
  return res;
}

// ---- run loop ---------------------------------------------------------------------------

int steps_per_epoch(const Manifest& manifest, const TrainConfig& cfg) {
  if (cfg.steps_per_epoch > 0) return cfg.steps_per_epoch;
  return std::max(1, static_cast<int>(manifest.size()) / cfg.optim.batch_size);
}

std::int64_t total_steps(const Manifest& manifest, const TrainConfig& cfg) {
  const std::int64_t all = static_cast<std::int64_t>(cfg.optim.total_epochs) * steps_per_epoch(manifest, cfg);
  return cfg.max_steps > 0 ? std::min(all, cfg.max_steps) : all;
}

namespace {

// Record indices of one step: slices of per-epoch permutations of images and
// videos, wrapping around when the batch needs more than the epoch holds.
std::vector<std::size_t> step_sources(const Manifest& m, const TrainConfig& cfg, int epoch, int batch_in_epoch) {
  const int nb = cfg.optim.batch_size;
  const int n_img = static_cast<int>(std::floor(nb * cfg.image_ratio));
  const int n_vid = nb - n_img;
  std::vector<std::size_t> images = m.indices_of(ClipKind::image);
  std::vector<std::size_t> videos = m.indices_of(ClipKind::video);
  if (n_img > 0 && images.empty()) throw ValidationError("image_ratio requires image records but the manifest has none");
  if (n_vid > 0 && videos.empty()) throw ValidationError("batch requires video records but the manifest has none");
  Rng rng(derive_seed(cfg.seed, {tag("epoch"), static_cast<std::uint64_t>(epoch)}));
  rng.shuffle(std::span<std::size_t>(images));
  rng.shuffle(std::span<std::size_t>(videos));
  std::vector<std::size_t> out;
  const auto take = [&](const std::vector<std::size_t>& pool, int count) {
    const std::size_t start = static_cast<std::size_t>(batch_in_epoch) * static_cast<std::size_t>(count);
    for (int k = 0; k < count; ++k) out.push_back(pool[(start + static_cast<std::size_t>(k)) % pool.size()]);
  };
  if (n_img > 0) take(images, n_img);
  if (n_vid > 0) take(videos, n_vid);
  return out;
}

void write_metrics(const fs::path& path, const std::vector<MetricRow>& rows) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write metrics: " + path.string());
  for (const auto& r : rows) os << r.to_json().dump() << "\n";
  if (!os) throw IoError("metrics write failed: " + path.string());
}

std::string step_name(std::int64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "step_%08lld.ckpt", static_cast<long long>(step));
  return buf;
}

}  // namespace

PretrainResult pretrain(const Manifest& manifest, const TrainConfig& cfg_in, const fs::path& out_dir,
                        const PretrainOptions& opt) {
  if (manifest.empty()) throw ValidationError("pretrain: manifest is empty");
  TrainConfig cfg = cfg_in;
  RunState state;
  if (opt.resume) {
    TrainConfig stored;
    state = run_from_checkpoint(load_checkpoint(*opt.resume), &stored);
    if (to_json(stored.model) != to_json(cfg.model) || stored.seed != cfg.seed) {
      throw ValidationError("resume checkpoint was produced with a different model config or seed");
    }
  } else {
    state = init_run(cfg);
  }
  cfg.validate();
  std::error_code ec;
  fs::create_directories(out_dir / "checkpoints", ec);
  if (ec) throw IoError("cannot create output directory " + out_dir.string() + ": " + ec.message());

  PretrainResult res;
  res.metrics = out_dir / "metrics.ndjson";
  write_metrics(res.metrics, state.history);
  std::ofstream metrics(res.metrics, std::ios::binary | std::ios::app);

  const int spe = steps_per_epoch(manifest, cfg);
  const std::int64_t last = total_steps(manifest, cfg);
  const std::int64_t stop = opt.stop_at_step ? std::min(last, *opt.stop_at_step) : last;
  while (state.step < stop) {
    const std::int64_t step = state.step;
    const int epoch = static_cast<int>(step / spe);
    const int in_epoch = static_cast<int>(step % spe);
    const auto sources = step_sources(manifest, cfg, epoch, in_epoch);
    const std::uint64_t step_seed = derive_seed(cfg.seed, {tag("step"), static_cast<std::uint64_t>(step)});
    const auto batch = build_batch_from(manifest, sources, cfg.sampling, cfg.augment, cfg.model.patch.image_side,
                                        derive_seed(step_seed, {tag("batch")}), cfg.workers);
    const double lr = effective_lr(cfg.optim, static_cast<double>(step) / spe);
    const double lambda = lambda_schedule(epoch, cfg.optim.total_epochs, cfg.loss.lambda_max,
                                          cfg.loss.switch_fraction, cfg.loss.lambda_ramp);
    const StepResult sr = train_step(state, batch, cfg, lambda, lr, step_seed);
    MetricRow row;
    row.step = step;
    row.epoch = epoch;
    row.recon = sr.report.recon;
    row.contrastive = sr.report.contrastive;
    row.lambda = sr.report.lambda_effective;
    row.total = sr.report.total;
    row.emb_std = sr.emb_std;
    row.lr = lr;
    state.history.push_back(row);
    metrics << row.to_json().dump() << "\n";
    metrics.flush();
    if (!metrics) throw IoError("metrics write failed (disk full?): " + res.metrics.string());
    if (opt.on_step) opt.on_step(row);
    if (cfg.checkpoint_every > 0 && state.step % cfg.checkpoint_every == 0 && state.step < stop) {
      save_checkpoint(out_dir / "checkpoints" / step_name(state.step), run_checkpoint(state, cfg));
    }
  }
  res.checkpoint = state.step >= last ? out_dir / "final.ckpt" : out_dir / "checkpoints" / step_name(state.step);
  save_checkpoint(res.checkpoint, run_checkpoint(state, cfg));
  res.state = std::move(state);
  return res;
}

// ---- checkpoints ---------------------------------------------------------------------------

Checkpoint model_checkpoint(const Model& model, const json& extra) {
  Checkpoint ck;
  ck.meta = extra;
  ck.meta["model"] = to_json(model.cfg);
  if (!ck.meta.contains("kind")) ck.meta["kind"] = "model";
  for (const auto& name : model.params.names()) ck.tensors.emplace_back(name, model.params.at(name).value);
  return ck;
}

Model model_from_checkpoint(const Checkpoint& ck) {
  if (!ck.meta.contains("model")) throw IoError("checkpoint has no model config");
  ModelConfig mc = ModelConfig::desk();
  from_json_into(ck.meta.at("model"), mc);
  Model m = init_model(mc, 0);
  if (const Matrix* w = ck.find("cls_head.weight")) add_classifier(m, static_cast<int>(w->cols()), 0);
  std::size_t seen = 0;
  for (const auto& [name, t] : ck.tensors) {
    if (name.starts_with("opt.")) continue;
    if (!m.params.contains(name)) throw IoError("checkpoint tensor not in model: " + name);
    Parameter& p = m.params.at(name);
    if (p.value.rows() != t.rows() || p.value.cols() != t.cols()) throw IoError("checkpoint shape mismatch: " + name);
    p.value = t;
    ++seen;
  }
  if (seen != m.params.size()) throw IoError("checkpoint is missing model tensors");
  return m;
}

Checkpoint run_checkpoint(const RunState& state, const TrainConfig& cfg) {
  json extra;
  extra["kind"] = "run";
  extra["config"] = to_json(cfg);
  extra["step"] = state.step;
  extra["seed"] = state.seed;
  json hist = json::array();
  for (const auto& r : state.history) hist.push_back(r.to_json());
  extra["history"] = std::move(hist);
  Checkpoint ck = model_checkpoint(state.model, extra);
  state.opt.save(ck);
  return ck;
}

RunState run_from_checkpoint(const Checkpoint& ck, TrainConfig* cfg_out) {
  if (ck.meta.value("kind", "") != "run") throw IoError("not a training-run checkpoint");
  RunState s;
  s.model = model_from_checkpoint(ck);
  s.opt.load(ck);
  s.step = ck.meta.at("step").get<std::int64_t>();
  s.seed = ck.meta.at("seed").get<std::uint64_t>();
  for (const auto& r : ck.meta.at("history")) s.history.push_back(MetricRow::from_json(r));
  if (cfg_out != nullptr) {
    *cfg_out = TrainConfig{};
    from_json_into(ck.meta.at("config"), *cfg_out);
  }
  return s;
}

}  // namespace vicmae
