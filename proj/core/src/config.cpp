// SPDX-License-Identifier: Apache-2.0
#include "vicmae/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include "vicmae/error.hpp"

using nlohmann::json;

namespace vicmae {

void EvalConfig::validate() const {
  if (k_clips < 1 || spatial_views < 1) throw ValidationError("eval: k_clips and spatial_views must be >= 1");
  if (n_perms < 1) throw ValidationError("eval: n_perms must be >= 1");
  if (video_frames < 1 || clip_stride < 1) throw ValidationError("eval: video_frames and clip_stride must be >= 1");
  for (double f : fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw ValidationError("eval: fraction " + std::to_string(f) + " outside (0, 1]");
  }
}

ExperimentConfig::ExperimentConfig() {
  probe.epochs = 20;
  probe.warmup_epochs = 2;
  finetune.epochs = 10;
  finetune.warmup_epochs = 1;
  corpus.patch_size = train.model.patch.patch_side;
  corpus.canvas = train.model.patch.image_side;
  seed = default_seed();
  propagate_seed();
}

void ExperimentConfig::propagate_seed() {
  corpus.seed = seed;
  train.seed = seed;
  probe.seed = seed;
  finetune.seed = seed;
}

void ExperimentConfig::validate() const {
  std::vector<std::string> errs;
  const auto check = [&](const auto& fn) {
    try {
      fn();
    } catch (const ValidationError& e) {
      errs.emplace_back(e.what());
    }
  };
  if (version != kConfigVersion) errs.push_back("unsupported config version " + std::to_string(version));
  check([&] { corpus.validate(); });
  check([&] { train.validate(); });
  check([&] { probe.validate(); });
  check([&] { finetune.validate(); });
  check([&] { eval.validate(); });
  if (paths.out.empty()) errs.emplace_back("paths.out must not be empty");
  if (!errs.empty()) {
    std::string msg = "invalid config:";
    for (const auto& e : errs) msg += "\n  - " + e;
    throw ValidationError(msg);
  }
}

json to_json(const ExperimentConfig& c) {
  json train = to_json(c.train);
  train.erase("seed");
  json probe = to_json(c.probe);
  probe.erase("seed");
  json finetune = to_json(c.finetune);
  finetune.erase("seed");
  json corpus = to_json(c.corpus);
  corpus.erase("seed");
  return {{"version", c.version},
          {"objective", to_string(c.objective())},
          {"seed", c.seed},
          {"paths", {{"data", c.paths.data}, {"val", c.paths.val}, {"out", c.paths.out}}},
          {"corpus", corpus},
          {"train", train},
          {"probe", probe},
          {"finetune", finetune},
          {"eval",
           {{"k_clips", c.eval.k_clips},
            {"spatial_views", c.eval.spatial_views},
            {"n_perms", c.eval.n_perms},
            {"video_frames", c.eval.video_frames},
            {"clip_stride", c.eval.clip_stride},
            {"fractions", c.eval.fractions}}}};
}

ExperimentConfig experiment_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  static const std::set<std::string> known = {"version", "objective", "seed",     "paths", "corpus",
                                              "train",   "probe",     "finetune", "eval"};
  std::vector<std::string> unknown;
  for (const auto& [k, v] : j.items()) {
    if (!known.contains(k)) unknown.push_back(k);
  }
  if (!unknown.empty()) {
    std::string msg = "unknown config keys:";
    for (const auto& k : unknown) msg += " " + k;
    throw ValidationError(msg);
  }
  ExperimentConfig c;
  try {
    c.version = j.value("version", kConfigVersion);
    if (c.version != kConfigVersion) {
      throw ValidationError("unsupported config version " + std::to_string(c.version) + " (expected " +
                            std::to_string(kConfigVersion) + ")");
    }
    c.seed = j.value("seed", c.seed);
    if (j.contains("paths")) {
      const json& p = j.at("paths");
      c.paths.data = p.value("data", c.paths.data);
      c.paths.val = p.value("val", c.paths.val);
      c.paths.out = p.value("out", c.paths.out);
    }
    if (j.contains("corpus")) {
      json merged = to_json(c.corpus);
      merged.merge_patch(j.at("corpus"));
      c.corpus = synth_spec_from_json(merged);
    }
    if (j.contains("train")) from_json_into(j.at("train"), c.train);
    if (j.contains("objective")) c.train.loss.objective = parse_objective(j.at("objective").get<std::string>());
    if (j.contains("probe")) from_json_into(j.at("probe"), c.probe);
    if (j.contains("finetune")) from_json_into(j.at("finetune"), c.finetune);
    if (j.contains("eval")) {
      const json& e = j.at("eval");
      c.eval.k_clips = e.value("k_clips", c.eval.k_clips);
      c.eval.spatial_views = e.value("spatial_views", c.eval.spatial_views);
      c.eval.n_perms = e.value("n_perms", c.eval.n_perms);
      c.eval.video_frames = e.value("video_frames", c.eval.video_frames);
      c.eval.clip_stride = e.value("clip_stride", c.eval.clip_stride);
      c.eval.fractions = e.value("fractions", c.eval.fractions);
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed config: ") + e.what());
  }
  c.propagate_seed();
  return c;
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ValidationError("override must look like key.path=value: " + assignment);
  }
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ValidationError("empty component in override key: " + key);
    if (!node->is_object()) throw ValidationError("override " + key + " descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

ExperimentConfig load_experiment(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  json doc = json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config " + path.string());
    doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw ValidationError("config " + path.string() + " is not valid JSON");
  }
  for (const auto& o : overrides) apply_override(doc, o);
  ExperimentConfig c = experiment_from_json(doc);
  c.validate();
  return c;
}

std::uint64_t default_seed() {
  const char* env = std::getenv("VICMAE_SEED");
  if (env == nullptr || *env == '\0') return 0;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(env, &end, 10);
  if (end == nullptr || *end != '\0') throw ValidationError(std::string("VICMAE_SEED is not an integer: ") + env);
  return v;
}

}  // namespace vicmae
