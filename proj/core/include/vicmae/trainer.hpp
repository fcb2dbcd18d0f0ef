// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vicmae/checkpoint.hpp"
#include "vicmae/corpus.hpp"
#include "vicmae/losses.hpp"
#include "vicmae/network.hpp"
#include "vicmae/sampling.hpp"

namespace vicmae {

struct OptimSpec {
  double base_lr = 1.5e-4;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double weight_decay = 0.05;
  double eps = 1e-8;
  int batch_size = 64;
  double warmup_epochs = 5.0;
  int total_epochs = 100;

  /// base_lr * batch_size / 256.
  double peak_lr() const { return base_lr * batch_size / 256.0; }
  void validate() const;
};

/// Linear warmup from 0 to the scaled peak over warmup_epochs, then half-cosine
/// decay to 0 at total_epochs. `epoch_fraction` counts fractional epochs elapsed.
double effective_lr(const OptimSpec& spec, double epoch_fraction);

/// Adam with decoupled weight decay. Moments are created lazily per trainable
/// parameter; parameters flagged decay = false skip the decay term.
class AdamW {
 public:
  AdamW() = default;
  AdamW(double beta1, double beta2, double eps, double weight_decay)
      : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

  /// `lr_scale`, when given, multiplies the learning rate per parameter name.
  void step(ParameterStore& params, double lr, const std::function<double(const std::string&)>& lr_scale = {});

  std::int64_t steps() const { return t_; }
  void save(Checkpoint& ck) const;
  void load(const Checkpoint& ck);

 private:
  double beta1_ = 0.9;
  double beta2_ = 0.95;
  double eps_ = 1e-8;
  double weight_decay_ = 0.05;
  std::int64_t t_ = 0;
  std::map<std::string, Matrix> m_;
  std::map<std::string, Matrix> v_;
};

enum class Objective { vicmae, mae_simsiam, mae_vicreg, mae_only };

std::string to_string(Objective o);
Objective parse_objective(const std::string& s);

struct LossSpec {
  Objective objective = Objective::vicmae;
  double lambda_max = 0.025;
  double switch_fraction = 0.25;
  bool lambda_ramp = false;
  /// Reconstruct only the first view of each pair.
  bool single_view_recon = false;
  /// Per-patch standardized pixel targets.
  bool norm_pix_loss = false;
  /// Multiplier on the contrastive term (2 reproduces the doubled variant).
  double loss_scale = 1.0;
  VicRegCoeffs vicreg;
  /// When false the decoder is not run and only lambda * contrastive is trained.
  bool recon_enabled = true;
};

struct TrainConfig {
  ModelConfig model = ModelConfig::tiny();
  OptimSpec optim;
  SamplingPolicy sampling;
  AugmentPolicies augment;
  double image_ratio = 0.25;
  double mask_ratio = 0.75;
  LossSpec loss;
  std::uint64_t seed = 0;
  /// Steps per epoch; 0 derives max(1, records / batch_size).
  int steps_per_epoch = 0;
  /// Stop after this many steps in total (0 = run every epoch).
  std::int64_t max_steps = 0;
  /// Checkpoint period in steps (0 = final checkpoint only).
  int checkpoint_every = 0;
  /// Threads assembling each batch; results do not depend on it.
  int workers = 1;
  /// Also record per-term gradient norms (three backward passes per step).
  bool track_grad_norms = false;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
void from_json_into(const nlohmann::json& j, TrainConfig& c);

struct MetricRow {
  std::int64_t step = 0;
  int epoch = 0;
  double recon = 0.0;
  double contrastive = 0.0;
  double lambda = 0.0;
  double total = 0.0;
  double emb_std = 0.0;
  double lr = 0.0;

  nlohmann::json to_json() const;
  static MetricRow from_json(const nlohmann::json& j);
};

struct RunState {
  Model model;
  AdamW opt;
  std::int64_t step = 0;
  std::uint64_t seed = 0;
  std::vector<MetricRow> history;
};

RunState init_run(const TrainConfig& cfg);

struct StepResult {
  LossReport report;
  double emb_std = 0.0;
};

/// One optimisation step on `batch` (sample pairs already drawn): mask,
/// encode, decode, pool, project, losses, AdamW update. Deterministic given
/// (state, batch, step_seed).
StepResult train_step(RunState& state, const std::vector<ViewPair>& batch, const TrainConfig& cfg, double lambda,
                      double lr, std::uint64_t step_seed);

/// Mean over dimensions of the per-dimension standard deviation of `pooled`.
double collapse_monitor(const Matrix& pooled);

struct PretrainOptions {
  std::optional<std::filesystem::path> resume;
  /// Stop (and checkpoint) once this many steps have been taken in total.
  std::optional<std::int64_t> stop_at_step;
  std::function<void(const MetricRow&)> on_step;
};

struct PretrainResult {
  RunState state;
  std::filesystem::path checkpoint;
  std::filesystem::path metrics;
};

int steps_per_epoch(const Manifest& manifest, const TrainConfig& cfg);
std::int64_t total_steps(const Manifest& manifest, const TrainConfig& cfg);

/// Runs pretraining, writing <out>/metrics.ndjson, periodic checkpoints under
/// <out>/checkpoints and <out>/final.ckpt (or step_<k>.ckpt when stopped early).
PretrainResult pretrain(const Manifest& manifest, const TrainConfig& cfg, const std::filesystem::path& out_dir,
                        const PretrainOptions& opt = {});

Checkpoint run_checkpoint(const RunState& state, const TrainConfig& cfg);
RunState run_from_checkpoint(const Checkpoint& ck, TrainConfig* cfg_out = nullptr);

/// Parameters plus model config.
Checkpoint model_checkpoint(const Model& model, const nlohmann::json& extra = nlohmann::json::object());
/// Reads the model from either a model or a run checkpoint.
Model model_from_checkpoint(const Checkpoint& ck);

}  // namespace vicmae
