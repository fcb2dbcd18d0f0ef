// SPDX-License-Identifier: Apache-2.0
// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and exits
// non-zero when any fails. VICMAE_ACCEPT_ONLY=3,7 restricts the run.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "../support/fixtures.hpp"
#include "vicmae/autograd.hpp"
#include "vicmae/config.hpp"
#include "vicmae/losses.hpp"

namespace fs = std::filesystem;
using namespace vicmae;
using vicmae::testing::random_matrix;
using vicmae::testing::TempDir;
using vicmae::testing::unit_rows;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// ---- 1: vectorized contrastive loss against explicit enumeration -----------------------

long double brute_force_nce(const Matrix& p, const Matrix& z, double tau) {
  const Eigen::Index n = p.rows();
  std::vector<RowVector> e;
  for (Eigen::Index i = 0; i < n; ++i) e.emplace_back(p.row(i));
  for (Eigen::Index i = 0; i < n; ++i) e.emplace_back(z.row(i));
  const std::size_t m = e.size();
  long double total = 0.0L;
  for (std::size_t a = 0; a < m; ++a) {
    const std::size_t pos = (a + static_cast<std::size_t>(n)) % m;
    long double denom = 0.0L;
    for (std::size_t k = 0; k < m; ++k) {
      if (k == a) continue;
      long double dot = 0.0L;
      for (Eigen::Index d = 0; d < p.cols(); ++d) dot += static_cast<long double>(e[a](d)) * e[k](d);
      denom += std::exp(dot / tau);
    }
    long double pos_dot = 0.0L;
    for (Eigen::Index d = 0; d < p.cols(); ++d) pos_dot += static_cast<long double>(e[a](d)) * e[pos](d);
    total += -(pos_dot / tau - std::log(denom));
  }
  return total / static_cast<long double>(m);
}

Outcome criterion_1() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(11);
  double worst = 0.0;
  const int ns[] = {2, 4, 8};
  const int ds[] = {4, 16};
  for (int trial = 0; trial < 100; ++trial) {
    const int n = ns[trial % 3];
    const int d = ds[(trial / 3) % 2];
    const double tau = trial % 2 == 0 ? 0.1 : rng.uniform(0.05, 1.0);
    const Matrix p = unit_rows(random_matrix(n, d, rng));
    const Matrix z = unit_rows(random_matrix(n, d, rng));
    const double fast = info_nce(p, z, tau);
    ag::Graph g;
    InfoNceOptions opt;
    opt.tau = tau;
    const double graph_value = info_nce(g.input(p), g.input(z), opt).scalar();
    const double oracle = static_cast<double>(brute_force_nce(p, z, tau));
    worst = std::max({worst, std::abs(fast - oracle), std::abs(graph_value - oracle)});
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {worst <= 1e-6 && secs < 10.0, fmt("max |diff| %.2e over 100 batches, %.2fs", worst, secs)};
}

// ---- 2: finite differences ---------------------------------------------------------------

double rel_error(const Matrix& a, const Matrix& b) {
  return (a - b).norm() / std::max({a.norm(), b.norm(), 1e-12});
}

// Central differences of f at x against the analytic gradient.
double check_gradient(const std::function<double(const Matrix&)>& f, const Matrix& x, const Matrix& analytic,
                      double h = 1e-6) {
  Matrix numeric(x.rows(), x.cols());
  Matrix xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double keep = xp.data()[i];
    xp.data()[i] = keep + h;
    const double up = f(xp);
    xp.data()[i] = keep - h;
    const double down = f(xp);
    xp.data()[i] = keep;
    numeric.data()[i] = (up - down) / (2 * h);
  }
  return rel_error(analytic, numeric);
}

Outcome criterion_2() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(22);
  std::map<std::string, double> worst;
  for (int trial = 0; trial < 3; ++trial) {
    // Reconstruction over masked tokens.
    {
      const int l = 16;
      const int batch = 2;
      const int pd = 6;
      std::vector<MaskPlan> plans;
      for (int b = 0; b < batch; ++b) plans.push_back(random_mask_plan(l, 0.75, rng));
      const Matrix pred = random_matrix(batch * l, pd, rng);
      const Matrix target = random_matrix(batch * l, pd, rng);
      ag::Graph g;
      const ag::Var x = g.input(pred);
      g.backward(recon_loss(x, target, plans));
      const double e = check_gradient([&](const Matrix& m) { return recon_loss(m, target, plans); }, pred, g.grad(x));
      worst["recon"] = std::max(worst["recon"], e);
    }
    // Contrastive loss, fixed and learnable temperature.
    for (bool learnable : {false, true}) {
      const int n = 4;
      const int d = 5;
      const Matrix p = unit_rows(random_matrix(n, d, rng));
      const Matrix z = unit_rows(random_matrix(n, d, rng));
      Matrix ls(1, 1);
      ls(0, 0) = std::log(1.0 / 0.2);
      const auto eval = [&](const Matrix& pp, const Matrix& zz, const Matrix& s) {
        ag::Graph g;
        InfoNceOptions opt;
        opt.tau = 0.2;
        opt.loss_scale = 2.0;
        if (learnable) opt.log_scale = g.constant(s);
        return info_nce(g.constant(pp), g.constant(zz), opt).scalar();
      };
      ag::Graph g;
      const ag::Var pv = g.input(p);
      const ag::Var zv = g.input(z);
      const ag::Var sv = g.input(ls);
      InfoNceOptions opt;
      opt.tau = 0.2;
      opt.loss_scale = 2.0;
      if (learnable) opt.log_scale = sv;
      g.backward(info_nce(pv, zv, opt));
      double e = std::max(check_gradient([&](const Matrix& m) { return eval(m, z, ls); }, p, g.grad(pv)),
                          check_gradient([&](const Matrix& m) { return eval(p, m, ls); }, z, g.grad(zv)));
      if (learnable) e = std::max(e, check_gradient([&](const Matrix& m) { return eval(p, z, m); }, ls, g.grad(sv)));
      worst["info_nce"] = std::max(worst["info_nce"], e);
    }
    // SimSiam: gradient flows through p only.
    {
      const Matrix p = unit_rows(random_matrix(4, 6, rng));
      const Matrix z = unit_rows(random_matrix(4, 6, rng));
      ag::Graph g;
      const ag::Var pv = g.input(p);
      g.backward(simsiam_loss(pv, g.constant(z)));
      const double e = check_gradient([&](const Matrix& m) { return simsiam_loss(m, z); }, p, g.grad(pv));
      worst["simsiam"] = std::max(worst["simsiam"], e);
    }
    // VicReg with the variance hinge active on some dimensions.
    {
      const int n = 6;
      const int d = 4;
      Matrix p = random_matrix(n, d, rng);
      Matrix z = random_matrix(n, d, rng);
      p.col(0) *= 0.2;
      z.col(1) *= 3.0;
      const VicRegCoeffs c;
      ag::Graph g;
      const ag::Var pv = g.input(p);
      const ag::Var zv = g.input(z);
      g.backward(vicreg_loss(pv, zv, c));
      const auto f = [&](const Matrix& pp, const Matrix& zz) { return vicreg_terms(pp, zz, c).total; };
      const double e = std::max(check_gradient([&](const Matrix& m) { return f(m, z); }, p, g.grad(pv)),
                                check_gradient([&](const Matrix& m) { return f(p, m); }, z, g.grad(zv)));
      worst["vicreg"] = std::max(worst["vicreg"], e);
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  bool ok = secs < 60.0;
  std::string detail;
  for (const auto& [k, v] : worst) {
    ok = ok && v <= 1e-4;
    detail += fmt("%s %.1e, ", k.c_str(), v);
  }
  return {ok, detail + fmt("%.2fs", secs)};
}

// ---- 3: masking ---------------------------------------------------------------------------

Outcome criterion_3() {
  Rng rng(33);
  const int l = 196;
  const int count = visible_count(l, 0.75);
  const MaskPlan plan = random_mask_plan(l, 0.75, rng);
  bool ok = count == 49 && plan.num_visible() == 49 && static_cast<int>(plan.masked_idx.size()) == 147;

  // Perturbing predictions at visible positions leaves the loss unchanged.
  const int pd = 12;
  const Matrix target = random_matrix(l, pd, rng);
  Matrix pred = random_matrix(l, pd, rng);
  const double before = recon_loss(pred, target, {plan});
  for (int v : plan.visible_idx) pred.row(v).array() += 1e3 * rng.normal();
  const double after = recon_loss(pred, target, {plan});
  const double delta = std::abs(after - before);
  ok = ok && delta == 0.0;

  int bad = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 4 + static_cast<int>(rng.below(200));
    const MaskPlan p = random_mask_plan(n, rng.uniform(0.0, 0.95), rng);
    std::vector<int> shuffled(p.visible_idx);
    shuffled.insert(shuffled.end(), p.masked_idx.begin(), p.masked_idx.end());
    bool good = static_cast<int>(shuffled.size()) == n;
    for (int k = 0; good && k < n; ++k) good = shuffled[static_cast<std::size_t>(p.restore_perm[static_cast<std::size_t>(k)])] == k;
    // Visible rows go back to their raster positions; masked ones become the mask token.
    const Matrix tokens = random_matrix(n, 3, rng);
    const RowVector mask_token = RowVector::Constant(3, -7.0);
    const Matrix restored = restore_with_mask_token(gather_visible(tokens, p), p, mask_token);
    for (int k = 0; good && k < n; ++k) {
      good = p.is_visible(k) ? restored.row(k) == tokens.row(k) : restored.row(k) == mask_token;
    }
    bad += good ? 0 : 1;
  }
  ok = ok && bad == 0;
  return {ok, fmt("visible %d of 196, loss change %.1e, %d/1000 round-trip failures", count, delta, bad)};
}

// ---- 4: arithmetic anchors ----------------------------------------------------------------

Outcome criterion_4() {
  Matrix same(2, 3);
  same << 0.6, 0.8, 0.0, 0.6, 0.8, 0.0;
  const double nce = info_nce(same, same, 1.0);
  Matrix a(2, 2);
  a << 1, 0, 0, 1;
  Matrix b(2, 2);
  b << 0, 1, -1, 0;
  const double sim = simsiam_loss(a, b);
  const Matrix rows = Matrix::Constant(5, 4, 0.3);
  const double var = vicreg_variance(rows, 1.0, 1e-4);

  Rng rng(44);
  Matrix x(2 * 9, 6);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform();
  ag::Graph g;
  const ag::Var xv = g.constant(x);
  const double gem1 = (ag::gem_pool(xv, 2, 9, 0, 1.0).value() - ag::mean_pool(xv, 2, 9, 0).value()).cwiseAbs().maxCoeff();
  Matrix y(2 * 2, 6);
  for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = rng.uniform();
  const ag::Var yv = g.constant(y);
  const double gem100 =
      (ag::gem_pool(yv, 2, 2, 0, 100.0).value() - ag::max_pool(yv, 2, 2, 0).value()).cwiseAbs().maxCoeff();

  const bool ok = std::abs(nce - std::log(3.0)) <= 1e-9 && sim == 2.0 && std::abs(var - (1.0 - 0.01)) <= 1e-12 &&
                  gem1 <= 1e-12 && gem100 <= 1e-2;
  return {ok, fmt("nce-ln3 %.1e, simsiam %.17g, variance %.12f, |gem1-mean| %.1e, |gem100-max| %.2e (2 tokens)",
                  nce - std::log(3.0), sim, var, gem1, gem100)};
}

// ---- 5: schedules -----------------------------------------------------------------------

Outcome criterion_5() {
  const double l199 = lambda_schedule(199, 800, 0.025, 0.25);
  const double l200 = lambda_schedule(200, 800, 0.025, 0.25);
  OptimSpec o;
  o.base_lr = 1.5e-4;
  o.batch_size = 4096;
  o.warmup_epochs = 40;
  o.total_epochs = 800;
  const double peak = effective_lr(o, 40.0);
  double highest = 0.0;
  for (int i = 0; i <= 8000; ++i) highest = std::max(highest, effective_lr(o, i * 0.1));
  const bool ok = l199 == 0.0 && l200 == 0.025 && std::abs(peak - 2.4e-3) <= 1e-15 &&
                  std::abs(highest - 2.4e-3) <= 1e-15;
  return {ok, fmt("lambda(199)=%g lambda(200)=%g peak lr %.6g", l199, l200, peak)};
}

// ---- shared pretraining runs for 6-10 ---------------------------------------------------

// Probe task: four motion directions. Shapes share a small palette and one
// size, so the fading streak (direction) is what tells videos apart.
SynthSpec motion_corpus(std::uint64_t seed, Split split, int trail) {
  SynthSpec s;
  s.num_videos = 256;
  s.num_images = split == Split::train ? 64 : 0;
  s.frames_per_video = 8;
  s.canvas = 32;
  s.patch_size = 4;
  s.trail = trail;
  s.speed = 4.0;
  s.size_lo = 0.15;
  s.size_hi = 0.2;
  s.palette = 2;
  s.drift = true;
  s.seed = seed;
  s.split = split;
  return s;
}

// 1500 steps at 5 steps per epoch.
TrainConfig desk_train(std::uint64_t seed, Objective objective, SampleMode mode) {
  TrainConfig c;
  c.model = ModelConfig::tiny();
  c.optim.batch_size = 64;
  c.optim.base_lr = 1e-2;
  c.optim.warmup_epochs = 8;
  c.optim.total_epochs = 300;
  c.sampling.mode = mode;
  c.augment.video.hflip_prob = 0.0;
  c.augment.image.hflip_prob = 0.0;
  c.augment.video.scale_lo = 0.8;
  c.augment.image.scale_lo = 0.8;
  c.loss.objective = objective;
  c.seed = seed;
  return c;
}

ProbeSpec desk_probe(std::uint64_t seed) {
  ProbeSpec p;
  p.epochs = 100;
  p.warmup_epochs = 5;
  p.batch_size = 64;
  p.seed = seed;
  return p;
}

struct Corpora {
  Manifest train;
  Manifest train_eval;
  Manifest val_eval;
};

class Workspace {
 public:
  Workspace() : dir_("vicmae_accept") {}

  const Corpora& corpora(std::uint64_t seed) {
    auto it = corpora_.find(seed);
    if (it != corpora_.end()) return it->second;
    const fs::path root = dir_ / ("corpus_" + std::to_string(seed));
    Corpora c;
    c.train = generate_synthetic(motion_corpus(100 + seed, Split::train, 3), root / "train");
    c.train_eval = evaluation_records(c.train);
    c.val_eval = evaluation_records(generate_synthetic(motion_corpus(200 + seed, Split::val, 3), root / "val"));
    return corpora_.emplace(seed, std::move(c)).first->second;
  }

  struct Run {
    PretrainResult result;
    double probe_top1 = 0.0;
  };

  const Run& run(std::uint64_t seed, Objective objective, SampleMode mode) {
    const std::string key = std::to_string(seed) + "_" + to_string(objective) + "_" + to_string(mode);
    auto it = runs_.find(key);
    if (it != runs_.end()) return it->second;
    const Corpora& c = corpora(seed);
    const auto t0 = std::chrono::steady_clock::now();
    Run r;
    r.result = pretrain(c.train, desk_train(seed, objective, mode), dir_ / ("run_" + key));
    r.probe_top1 = linear_probe(r.result.state.model, c.train_eval, c.val_eval, desk_probe(seed)).top1;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::fprintf(stderr, "  [run %s: %lld steps, probe %.2f, %.0fs]\n", key.c_str(),
                 static_cast<long long>(r.result.state.step), r.probe_top1, secs);
    return runs_.emplace(key, std::move(r)).first->second;
  }

  double random_probe(std::uint64_t seed) {
    const Corpora& c = corpora(seed);
    Model m = init_model(desk_train(seed, Objective::vicmae, SampleMode::distant).model, seed);
    return linear_probe(m, c.train_eval, c.val_eval, desk_probe(seed)).top1;
  }

  const fs::path& dir() const { return dir_.path(); }

 private:
  TempDir dir_;
  std::map<std::uint64_t, Corpora> corpora_;
  std::map<std::string, Run> runs_;
};

constexpr std::uint64_t kSeeds[] = {0, 1, 2};

// Floor for the mean per-dimension std of pooled features. Pilot runs stay
// well above it; collapsed encoders fall to ~0.
constexpr double kCollapseFloor = 0.02;

Outcome criterion_6(Workspace& ws) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& run = ws.run(0, Objective::vicmae, SampleMode::distant);
  const auto& h = run.result.state.history;
  if (h.size() < 500) return {false, fmt("only %zu steps", h.size())};
  const auto window_mean = [&](std::size_t end) {
    double s = 0.0;
    for (std::size_t i = end - 10; i < end; ++i) s += h[i].total;
    return s / 10.0;
  };
  const double start = window_mean(10);
  const double end = window_mean(h.size());
  double min_std = h.front().emb_std;
  for (const auto& r : h) min_std = std::min(min_std, r.emb_std);
  const double drop = 1.0 - end / start;
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {drop >= 0.30 && min_std > kCollapseFloor && secs < 900.0,
          fmt("%zu steps, total %.4f -> %.4f (-%.1f%%), min emb std %.4f (floor %.2f), %.0fs", h.size(), start, end,
              100 * drop, min_std, kCollapseFloor, secs)};
}

Outcome criterion_7(Workspace& ws) {
  bool ok = true;
  std::string detail;
  for (std::uint64_t s : kSeeds) {
    const double trained = ws.run(s, Objective::vicmae, SampleMode::distant).probe_top1;
    const double random = ws.random_probe(s);
    ok = ok && trained - random >= 10.0;
    detail += fmt("seed %llu: %.2f vs random %.2f; ", static_cast<unsigned long long>(s), trained, random);
  }
  return {ok, detail};
}

Outcome criterion_8(Workspace& ws) {
  bool ok = true;
  double gap = 0.0;
  std::string detail;
  for (std::uint64_t s : kSeeds) {
    const double distant = ws.run(s, Objective::vicmae, SampleMode::distant).probe_top1;
    const double same = ws.run(s, Objective::vicmae, SampleMode::same_frame).probe_top1;
    ok = ok && distant >= same;
    gap += (distant - same) / 3.0;
    detail += fmt("seed %llu: distant %.2f same %.2f; ", static_cast<unsigned long long>(s), distant, same);
  }
  return {ok && gap >= 2.0, detail + fmt("mean gap %.2f", gap)};
}

Outcome criterion_9(Workspace& ws) {
  bool ok = true;
  std::string detail;
  for (std::uint64_t s : kSeeds) {
    const double ours = ws.run(s, Objective::vicmae, SampleMode::distant).probe_top1;
    const double simsiam = ws.run(s, Objective::mae_simsiam, SampleMode::distant).probe_top1;
    ok = ok && ours >= simsiam;
    detail += fmt("seed %llu: vicmae %.2f simsiam %.2f; ", static_cast<unsigned long long>(s), ours, simsiam);
  }
  return {ok, detail};
}

Outcome criterion_10(Workspace& ws) {
  // Constant-in-time clips through the inflated tokenizer.
  const Model& image_model = ws.run(0, Objective::vicmae, SampleMode::distant).result.state.model;
  const int t = 4;
  Model video = inflate_to_video(image_model, t);
  Model image_copy = image_model;
  const Manifest& train = ws.corpora(0).train;
  double worst = 0.0;
  for (std::size_t r = 0; r < 4; ++r) {
    const Image& f = train.frame(r, 0);
    const std::vector<Image> still(static_cast<std::size_t>(t), f);
    const Matrix iv = extract_features(image_copy, std::vector<Matrix>{sample_tokens(image_copy, {&f, 1})}, false);
    const Matrix vv = extract_features(video, std::vector<Matrix>{sample_tokens(video, still)}, false);
    worst = std::max(worst, (iv - vv).cwiseAbs().maxCoeff());
  }

  // Short video finetune on streak-free motion, then order ablations.
  const fs::path root = ws.dir() / "temporal";
  const Manifest ft_train =
      evaluation_records(generate_synthetic(motion_corpus(300, Split::train, 0), root / "train"));
  const Manifest ft_val = evaluation_records(generate_synthetic(motion_corpus(400, Split::val, 0), root / "val"));
  FinetuneSpec spec;
  spec.epochs = 30;
  spec.warmup_epochs = 3;
  spec.batch_size = 16;
  spec.base_lr = 1.6e-2;
  spec.seed = 0;
  Model tuned = finetune(video, ft_train, ft_val, spec).model;
  TemporalSpec ts;
  ts.seed = 0;
  ts.mode = TemporalMode::ordered;
  const double ordered = temporal_ablation(tuned, ft_val, ts).top1;
  ts.mode = TemporalMode::shuffled;
  ts.n_perms = 16;
  const double shuffled = temporal_ablation(tuned, ft_val, ts).top1;
  ts.mode = TemporalMode::repeated;
  const double repeated = temporal_ablation(tuned, ft_val, ts).top1;
  const bool ok = worst <= 1e-5 && ordered - shuffled >= 5.0 && repeated <= shuffled;
  return {ok, fmt("ordered %.2f shuffled %.2f repeated %.2f; inflation max diff %.1e", ordered, shuffled, repeated,
                  worst)};
}

// ---- 11: reproducibility ------------------------------------------------------------------

Outcome criterion_11() {
  TempDir dir("vicmae_repro");
  generate_synthetic(testing::small_corpus(5), dir / "corpus_a");
  const Manifest m = generate_synthetic(testing::small_corpus(5), dir / "corpus_b");
  bool same_corpus = true;
  for (const auto& e : fs::recursive_directory_iterator(dir / "corpus_a")) {
    if (!e.is_regular_file()) continue;
    const fs::path other = dir / "corpus_b" / fs::relative(e.path(), dir / "corpus_a");
    same_corpus = same_corpus && slurp(e.path()) == slurp(other);
  }

  TrainConfig cfg = testing::small_train(9);
  cfg.max_steps = 12;
  cfg.checkpoint_every = 4;
  pretrain(m, cfg, dir / "a");
  pretrain(m, cfg, dir / "b");
  const bool same_metrics = slurp(dir / "a/metrics.ndjson") == slurp(dir / "b/metrics.ndjson");
  const bool same_final = slurp(dir / "a/final.ckpt") == slurp(dir / "b/final.ckpt");

  PretrainOptions stop;
  stop.stop_at_step = 5;
  const PretrainResult first = pretrain(m, cfg, dir / "c", stop);
  PretrainOptions resume;
  resume.resume = first.checkpoint;
  pretrain(m, cfg, dir / "c", resume);
  const bool resumed_metrics = slurp(dir / "a/metrics.ndjson") == slurp(dir / "c/metrics.ndjson");
  const bool resumed_final = slurp(dir / "a/final.ckpt") == slurp(dir / "c/final.ckpt");
  const bool ok = same_corpus && same_metrics && same_final && resumed_metrics && resumed_final;
  return {ok, fmt("corpus %s, rerun metrics %s, rerun checkpoint %s, resumed metrics %s, resumed checkpoint %s",
                  same_corpus ? "identical" : "DIFFERENT", same_metrics ? "identical" : "DIFFERENT",
                  same_final ? "identical" : "DIFFERENT", resumed_metrics ? "identical" : "DIFFERENT",
                  resumed_final ? "identical" : "DIFFERENT")};
}

std::set<int> selected() {
  std::set<int> out;
  const char* env = std::getenv("VICMAE_ACCEPT_ONLY");
  if (env == nullptr || *env == '\0') {
    for (int i = 1; i <= 11; ++i) out.insert(i);
    return out;
  }
  std::stringstream ss(env);
  std::string item;
  while (std::getline(ss, item, ',')) out.insert(std::stoi(item));
  return out;
}

}  // namespace

int main() {
  Workspace ws;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"contrastive loss matches brute-force enumeration", criterion_1},
      {"analytic gradients match central differences", criterion_2},
      {"masking contract", criterion_3},
      {"arithmetic anchors", criterion_4},
      {"lambda and lr schedule anchors", criterion_5},
      {"training smoke without collapse", [&] { return criterion_6(ws); }},
      {"pretrained probe beats random init", [&] { return criterion_7(ws); }},
      {"distant frames beat same-frame pairs", [&] { return criterion_8(ws); }},
      {"contrastive objective beats SimSiam", [&] { return criterion_9(ws); }},
      {"temporal order matters after video finetuning", [&] { return criterion_10(ws); }},
      {"reruns and resume are bit-exact", criterion_11},
  };
  const std::set<int> only = selected();
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.contains(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::printf("CRITERION %2d %s  %s: %s\n", id, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
