// SPDX-License-Identifier: Apache-2.0
// vicmae: corpus generation, pretraining, evaluation and ablation sweeps.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "vicmae/config.hpp"
#include "vicmae/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace vicmae;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct Common {
  std::string config;
  std::vector<std::string> set;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string data;
  std::string val;
};

void add_common(CLI::App* cmd, Common& c, bool with_data) {
  cmd->add_option("--config", c.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--set", c.set, "Override a config key, e.g. train.optim.batch_size=32");
  cmd->add_option("--seed", c.seed, "Seed (default: VICMAE_SEED or the config)");
  if (with_data) {
    cmd->add_option("--data", c.data, "Training manifest");
    cmd->add_option("--val", c.val, "Evaluation manifest (default: --data)");
  }
}

ExperimentConfig resolve(const Common& c, std::vector<std::string> extra = {}) {
  std::vector<std::string> overrides = c.set;
  if (c.seed) overrides.push_back("seed=" + std::to_string(*c.seed));
  if (!c.out.empty()) overrides.push_back("paths.out=" + json(c.out).dump());
  if (!c.data.empty()) overrides.push_back("paths.data=" + json(c.data).dump());
  if (!c.val.empty()) overrides.push_back("paths.val=" + json(c.val).dump());
  overrides.insert(overrides.end(), extra.begin(), extra.end());
  return load_experiment(c.config, overrides);
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

Manifest require_manifest(const std::string& path, const char* what) {
  if (path.empty()) throw ValidationError(std::string("missing ") + what + " manifest (--data or paths.data)");
  return load_manifest(path);
}

// ---- gen / pack -------------------------------------------------------------------------

struct GenArgs {
  Common common;
  std::optional<int> videos, images, frames, canvas, trail;
  std::optional<double> speed;
  std::string split;
};

int cmd_gen(const GenArgs& a) {
  std::vector<std::string> extra;
  if (a.videos) extra.push_back("corpus.num_videos=" + std::to_string(*a.videos));
  if (a.images) extra.push_back("corpus.num_images=" + std::to_string(*a.images));
  if (a.frames) extra.push_back("corpus.frames_per_video=" + std::to_string(*a.frames));
  if (a.canvas) extra.push_back("corpus.canvas=" + std::to_string(*a.canvas));
  if (a.trail) extra.push_back("corpus.trail=" + std::to_string(*a.trail));
  if (a.speed) extra.push_back("corpus.speed=" + json(*a.speed).dump());
  if (!a.split.empty()) extra.push_back("corpus.split=" + json(a.split).dump());
  ExperimentConfig cfg = resolve(a.common, extra);
  const Manifest m = generate_synthetic(cfg.corpus, a.common.out);
  (void)m;
  std::cout << (fs::path(a.common.out) / "manifest.json").string() << "\n";
  return kExitOk;
}

int cmd_pack(const std::string& src, const std::string& split) {
  const Manifest m = pack_directory(src, parse_split(split));
  std::cout << (fs::path(src) / "manifest.json").string() << "\n";
  std::cerr << "packed " << m.size() << " records, " << m.num_classes << " classes\n";
  return kExitOk;
}

// ---- pretrain ---------------------------------------------------------------------------

struct PretrainArgs {
  Common common;
  std::string objective;
  std::string resume;
  bool dry_run = false;
  int log_every = 50;
};

int cmd_pretrain(const PretrainArgs& a) {
  std::vector<std::string> extra;
  if (!a.objective.empty()) extra.push_back("objective=" + json(a.objective).dump());
  const ExperimentConfig cfg = resolve(a.common, extra);
  if (a.dry_run) {
    std::cout << to_json(cfg).dump(2) << "\n";
    return kExitOk;
  }
  const Manifest m = require_manifest(cfg.paths.data, "training");
  PretrainOptions opt;
  if (!a.resume.empty()) opt.resume = a.resume;
  opt.on_step = [&](const MetricRow& r) {
    if (a.log_every > 0 && r.step % a.log_every == 0) {
      std::fprintf(stderr, "step %6lld  epoch %4d  total %.5f  recon %.5f  contrastive %.5f  lambda %.4f  std %.4f\n",
                   static_cast<long long>(r.step), r.epoch, r.total, r.recon, r.contrastive, r.lambda, r.emb_std);
    }
  };
  const PretrainResult res = pretrain(m, cfg.train, cfg.paths.out, opt);
  write_json(fs::path(cfg.paths.out) / "config.json", to_json(cfg));
  std::cout << res.checkpoint.string() << "\n";
  return kExitOk;
}

// ---- eval -------------------------------------------------------------------------------

struct EvalArgs {
  Common common;
  std::string ckpt;
  std::string mode = "ordered";
  std::optional<int> perms, k_clips, views;
  std::vector<double> fractions;
  bool use_cls = false;
};

struct Loaded {
  ExperimentConfig cfg;
  Model model;
  std::string hash;
  Manifest train;
  Manifest val;
};

Loaded load_for_eval(const EvalArgs& a, bool need_train) {
  std::vector<std::string> extra;
  if (a.use_cls) {
    extra.emplace_back("probe.use_cls=true");
    extra.emplace_back("finetune.use_cls=true");
  }
  if (a.perms) extra.push_back("eval.n_perms=" + std::to_string(*a.perms));
  if (a.k_clips) extra.push_back("eval.k_clips=" + std::to_string(*a.k_clips));
  if (a.views) extra.push_back("eval.spatial_views=" + std::to_string(*a.views));
  if (!a.fractions.empty()) extra.push_back("eval.fractions=" + json(a.fractions).dump());
  Loaded l{resolve(a.common, extra), {}, {}, {}, {}};
  l.model = model_from_checkpoint(load_checkpoint(a.ckpt));
  l.hash = file_hash(a.ckpt);
  if (need_train || l.cfg.paths.val.empty()) {
    l.train = evaluation_records(require_manifest(l.cfg.paths.data, "training"));
  }
  l.val = l.cfg.paths.val.empty() ? l.train : evaluation_records(load_manifest(l.cfg.paths.val));
  return l;
}

// A video classifier: inflated and finetuned unless the checkpoint already is one.
Model video_classifier(Loaded& l) {
  if (l.model.cfg.frames > 1 && l.model.has_classifier()) return l.model;
  Model video = l.model.cfg.frames > 1 ? l.model : inflate_to_video(l.model, l.cfg.eval.video_frames);
  if (l.train.empty()) l.train = evaluation_records(require_manifest(l.cfg.paths.data, "training"));
  FinetuneSpec spec = l.cfg.finetune;
  spec.clip_stride = l.cfg.eval.clip_stride;
  std::cerr << "finetuning a " << video.cfg.frames << "-frame video model\n";
  return finetune(video, l.train, l.val, spec).model;
}

void emit(const fs::path& out, const std::string& name, const json& j) {
  const fs::path path = out / (name + ".json");
  write_json(path, j);
  std::cout << j.dump(2) << "\n";
  std::cerr << "wrote " << path.string() << "\n";
}

int cmd_eval(const std::string& which, const EvalArgs& a) {
  if (which == "probe") {
    Loaded l = load_for_eval(a, true);
    EvalResult r = linear_probe(l.model, l.train, l.val, l.cfg.probe);
    r.checkpoint_hash = l.hash;
    emit(l.cfg.paths.out, "probe", r.to_json());
  } else if (which == "finetune") {
    Loaded l = load_for_eval(a, true);
    FinetuneOutput o = finetune(l.model, l.train, l.val, l.cfg.finetune);
    o.result.checkpoint_hash = l.hash;
    save_checkpoint(fs::path(l.cfg.paths.out) / "finetune.ckpt", model_checkpoint(o.model));
    emit(l.cfg.paths.out, "finetune", o.result.to_json());
  } else if (which == "semi") {
    Loaded l = load_for_eval(a, true);
    json rows = json::array();
    for (EvalResult& r : semi_supervised_sweep(l.model, l.train, l.val, l.cfg.eval.fractions, l.cfg.finetune)) {
      r.checkpoint_hash = l.hash;
      rows.push_back(r.to_json());
    }
    emit(l.cfg.paths.out, "semi", rows);
  } else if (which == "multiview") {
    Loaded l = load_for_eval(a, false);
    Model video = video_classifier(l);
    EvalResult r = multiview_video_eval(video, l.val, l.cfg.eval.k_clips, l.cfg.eval.spatial_views,
                                        l.cfg.eval.clip_stride);
    r.seed = l.cfg.seed;
    r.checkpoint_hash = l.hash;
    json j = r.to_json();
    j["views"] = r.views;
    emit(l.cfg.paths.out, "multiview", j);
  } else if (which == "temporal") {
    Loaded l = load_for_eval(a, false);
    Model video = video_classifier(l);
    TemporalSpec spec;
    spec.mode = parse_temporal_mode(a.mode);
    spec.n_perms = l.cfg.eval.n_perms;
    spec.clip_stride = l.cfg.eval.clip_stride;
    spec.seed = l.cfg.seed;
    EvalResult r = temporal_ablation(video, l.val, spec);
    r.checkpoint_hash = l.hash;
    emit(l.cfg.paths.out, "temporal_" + a.mode, r.to_json());
  } else {
    throw ValidationError("unknown eval command " + which);
  }
  return kExitOk;
}

// ---- ablate -----------------------------------------------------------------------------

struct AblateArgs {
  Common common;
  std::string axis;
  std::optional<std::string> values;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void apply_cell(ExperimentConfig& cfg, const std::string& axis, const std::string& value) {
  if (axis == "frame_sep") {
    if (value == "D") {
      cfg.train.sampling.mode = SampleMode::distant;
    } else {
      std::size_t used = 0;
      int delta = -1;
      try {
        delta = std::stoi(value, &used);
      } catch (const std::exception&) {
      }
      if (delta < 0 || used != value.size()) throw ValidationError("frame_sep value must be D or a gap >= 0: " + value);
      cfg.train.sampling.mode = delta == 0 ? SampleMode::same_frame : SampleMode::continuous;
      cfg.train.sampling.delta = delta;
    }
  } else if (axis == "pooling") {
    cfg.train.model.pooling = parse_pooling(value);
  } else if (axis == "augment") {
    const bool color = value == "color" || value == "both";
    const bool spatial = value == "spatial" || value == "both";
    if (!color && !spatial) throw ValidationError("augment value must be color, spatial or both: " + value);
    for (AugmentPolicy* p : {&cfg.train.augment.video, &cfg.train.augment.image}) {
      p->spatial = spatial;
      p->color.enabled = color;
    }
  } else {
    throw ValidationError("unknown ablation axis " + axis + " (frame_sep, pooling, augment)");
  }
}

int cmd_ablate(const AblateArgs& a) {
  static const std::map<std::string, std::string> defaults = {
      {"frame_sep", "0,2,4,8,D"}, {"pooling", "gem,max,mean"}, {"augment", "color,spatial,both"}};
  if (!defaults.contains(a.axis)) throw ValidationError("unknown ablation axis " + a.axis + " (frame_sep, pooling, augment)");
  const std::vector<std::string> values = split_list(a.values.value_or(defaults.at(a.axis)));
  if (values.empty()) throw ValidationError("--values lists no value");
  const ExperimentConfig base = resolve(a.common);
  // Every cell is checked before any training starts.
  for (const auto& v : values) {
    ExperimentConfig cfg = base;
    apply_cell(cfg, a.axis, v);
    cfg.validate();
  }
  const Manifest full = require_manifest(base.paths.data, "training");
  const Manifest train = evaluation_records(full);
  const Manifest val = base.paths.val.empty() ? train : evaluation_records(load_manifest(base.paths.val));

  json rows = json::array();
  int failures = 0;
  for (const auto& v : values) {
    json row = {{"axis", a.axis}, {"value", v}};
    try {
      ExperimentConfig cfg = base;
      apply_cell(cfg, a.axis, v);
      const fs::path dir = fs::path(base.paths.out) / (a.axis + "_" + v);
      std::cerr << "cell " << a.axis << "=" << v << "\n";
      PretrainResult pre = pretrain(full, cfg.train, dir);
      EvalResult r = linear_probe(pre.state.model, train, val, cfg.probe);
      r.condition = a.axis + "=" + v;
      r.checkpoint_hash = file_hash(pre.checkpoint);
      row.update(r.to_json());
      row["status"] = "ok";
    } catch (const std::exception& e) {
      ++failures;
      row["status"] = "failed";
      row["error"] = e.what();
      std::cerr << "cell " << a.axis << "=" << v << " failed: " << e.what() << "\n";
    }
    rows.push_back(row);
  }
  write_json(fs::path(base.paths.out) / ("ablate_" + a.axis + ".json"), rows);
  std::printf("| %-10s | %-8s | %7s | %7s |\n", a.axis.c_str(), "status", "top1", "top5");
  for (const auto& r : rows) {
    if (r["status"] == "ok") {
      std::printf("| %-10s | %-8s | %7.2f | %7.2f |\n", r["value"].get<std::string>().c_str(), "ok",
                  r["top1"].get<double>(), r["top5"].get<double>());
    } else {
      std::printf("| %-10s | %-8s | %7s | %7s |\n", r["value"].get<std::string>().c_str(), "failed", "-", "-");
    }
  }
  return failures == 0 ? kExitOk : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ViC-MAE desk-scale pipeline"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate the synthetic moving-shapes corpus");
  add_common(gen_cmd, gen.common, false);
  gen_cmd->add_option("--out", gen.common.out, "Output directory")->required();
  gen_cmd->add_option("--videos", gen.videos, "Number of videos");
  gen_cmd->add_option("--images", gen.images, "Number of still images");
  gen_cmd->add_option("--frames", gen.frames, "Frames per video");
  gen_cmd->add_option("--canvas", gen.canvas, "Frame side in pixels");
  gen_cmd->add_option("--trail", gen.trail, "Motion streak length in frames");
  gen_cmd->add_option("--speed", gen.speed, "Pixels per frame");
  gen_cmd->add_option("--split", gen.split, "train, val or test");

  std::string pack_src;
  std::string pack_split = "train";
  auto* pack_cmd = app.add_subcommand("pack", "Index a <class>/<clip> directory tree into a manifest");
  pack_cmd->add_option("--src", pack_src, "Source directory")->required()->check(CLI::ExistingDirectory);
  pack_cmd->add_option("--split", pack_split, "train, val or test");

  PretrainArgs pre;
  auto* pre_cmd = app.add_subcommand("pretrain", "Pretrain an encoder");
  add_common(pre_cmd, pre.common, true);
  pre_cmd->add_option("--out", pre.common.out, "Run directory");
  pre_cmd->add_option("--objective", pre.objective, "vicmae, mae_simsiam, mae_vicreg or mae_only");
  pre_cmd->add_option("--resume", pre.resume, "Run checkpoint to continue from")->check(CLI::ExistingFile);
  pre_cmd->add_flag("--dry-run", pre.dry_run, "Validate and print the resolved config");
  pre_cmd->add_option("--log-every", pre.log_every, "Progress line period in steps (0 = quiet)");

  EvalArgs ev;
  std::string eval_which;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval_cmd->require_subcommand(1);
  for (const char* name : {"probe", "finetune", "semi", "multiview", "temporal"}) {
    auto* sub = eval_cmd->add_subcommand(name);
    add_common(sub, ev.common, true);
    sub->add_option("--ckpt", ev.ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", ev.common.out, "Result directory");
    sub->add_flag("--cls", ev.use_cls, "Use the class token instead of pooled tokens");
    if (std::string(name) == "temporal") {
      sub->add_option("--mode", ev.mode, "ordered, shuffled or repeated")
          ->check(CLI::IsMember({"ordered", "shuffled", "repeated"}));
      sub->add_option("--perms", ev.perms, "Random permutations for shuffled mode");
    }
    if (std::string(name) == "multiview") {
      sub->add_option("--k", ev.k_clips, "Temporal clips per video");
      sub->add_option("--views", ev.views, "Spatial crops per clip");
    }
    if (std::string(name) == "semi") sub->add_option("--fractions", ev.fractions, "Label fractions")->delimiter(',');
    sub->callback([&eval_which, name] { eval_which = name; });
  }

  AblateArgs ab;
  auto* ab_cmd = app.add_subcommand("ablate", "Pretrain and probe one cell per axis value");
  add_common(ab_cmd, ab.common, true);
  ab_cmd->add_option("--out", ab.common.out, "Sweep directory");
  ab_cmd->add_option("--axis", ab.axis, "frame_sep, pooling or augment")->required();
  ab_cmd->add_option("--values", ab.values, "Comma-separated values (default: the whole axis)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen_cmd->parsed()) return cmd_gen(gen);
    if (pack_cmd->parsed()) return cmd_pack(pack_src, pack_split);
    if (pre_cmd->parsed()) return cmd_pretrain(pre);
    if (eval_cmd->parsed()) return cmd_eval(eval_which, ev);
    if (ab_cmd->parsed()) return cmd_ablate(ab);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  std::cerr << app.help();
  return kExitUsage;
}
