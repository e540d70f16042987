// Copyright (c) 2026 The disn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Run configuration: a single JSON document with command-scoped sections,
// merged over built-in defaults. Keys absent from the defaults are rejected.

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "disn/error.hpp"
#include "disn/framework.hpp"
#include "disn/metrics.hpp"
#include "disn/synth.hpp"
#include "disn/trainer.hpp"

namespace disn {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Typed section <-> JSON
// ---------------------------------------------------------------------------

inline json to_json(const LossWeights& w) {
  return {{"spk", w.spk}, {"recons", w.recons}, {"env", w.env},
          {"adv", w.adv}, {"corr", w.corr},     {"margin", w.margin}};
}

inline LossWeights loss_weights_from_json(const json& j) {
  LossWeights w;
  w.spk = j.at("spk").get<double>();
  w.recons = j.at("recons").get<double>();
  w.env = j.at("env").get<double>();
  w.adv = j.at("adv").get<double>();
  w.corr = j.at("corr").get<double>();
  w.margin = j.at("margin").get<double>();
  return w;
}

inline std::string to_string(Precision p) { return p == Precision::float32 ? "float32" : "float64"; }

inline Precision precision_from_string(const std::string& s) {
  if (s == "float32") return Precision::float32;
  if (s == "float64") return Precision::float64;
  throw ConfigError("precision must be \"float32\" or \"float64\", got \"" + s + "\"");
}

inline json to_json(const TrainConfig& c) {
  return {{"weights", to_json(c.weights)},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"lr0", c.lr0},
          {"decay_factor", c.decay_factor},
          {"decay_every", c.decay_every},
          {"precision", to_string(c.precision)},
          {"swap", c.swap},
          {"checkpoint_every", c.checkpoint_every}};
}

inline TrainConfig train_config_from_json(const json& j, std::uint64_t seed) {
  TrainConfig c;
  c.weights = loss_weights_from_json(j.at("weights"));
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.lr0 = j.at("lr0").get<double>();
  c.decay_factor = j.at("decay_factor").get<double>();
  c.decay_every = j.at("decay_every").get<std::size_t>();
  c.precision = precision_from_string(j.at("precision").get<std::string>());
  c.swap = j.at("swap").get<bool>();
  c.checkpoint_every = j.at("checkpoint_every").get<std::size_t>();
  c.seed = seed;
  return c;
}

inline json to_json(const ModelConfig& m) {
  return {{"input_dim", m.ae.input_dim},
          {"code_dim", m.ae.code_dim},
          {"n_speakers", m.n_speakers},
          {"env_hidden_dim", m.env_hidden_dim},
          {"env_out_dim", m.env_out_dim}};
}

inline ModelConfig model_config_from_json(const json& j) {
  ModelConfig m;
  m.ae.input_dim = j.at("input_dim").get<std::size_t>();
  m.ae.code_dim = j.at("code_dim").get<std::size_t>();
  m.n_speakers = j.at("n_speakers").get<std::size_t>();
  m.env_hidden_dim = j.at("env_hidden_dim").get<std::size_t>();
  m.env_out_dim = j.at("env_out_dim").get<std::size_t>();
  return m;
}

inline json to_json(const SynthWorld& w) {
  return {{"n_speakers", w.n_speakers},
          {"sessions_per_speaker", w.sessions_per_speaker},
          {"utterances_per_session", w.utterances_per_session},
          {"speaker_factor_dim", w.speaker_factor_dim},
          {"env_factor_dim", w.env_factor_dim},
          {"embedding_dim", w.embedding_dim},
          {"n_aug_tags", w.n_aug_tags},
          {"noise_sigma", w.noise_sigma},
          {"aug_sigma", w.aug_sigma}};
}

inline SynthWorld synth_world_from_json(const json& j, std::uint64_t seed) {
  SynthWorld w;
  w.n_speakers = j.at("n_speakers").get<std::size_t>();
  w.sessions_per_speaker = j.at("sessions_per_speaker").get<std::size_t>();
  w.utterances_per_session = j.at("utterances_per_session").get<std::size_t>();
  w.speaker_factor_dim = j.at("speaker_factor_dim").get<std::size_t>();
  w.env_factor_dim = j.at("env_factor_dim").get<std::size_t>();
  w.embedding_dim = j.at("embedding_dim").get<std::size_t>();
  w.n_aug_tags = j.at("n_aug_tags").get<std::size_t>();
  w.noise_sigma = j.at("noise_sigma").get<double>();
  w.aug_sigma = j.at("aug_sigma").get<double>();
  w.seed = seed;
  return w;
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

struct EvalConfig {
  std::size_t n_trials = 2000;
  DcfParams dcf;
  bool det_csv = false;
  bool probe = true;
  std::size_t probe_steps = 300;
  double probe_lr = 0.05;
};

struct PathsConfig {
  std::string dataset;     // directory with embeddings.emb + metadata.jsonl
  std::string checkpoint;  // model checkpoint for eval
  std::string trials;      // optional trial list; generated when empty
  std::string resume;      // checkpoint to resume training from
};

struct RunConfig {
  json resolved;
  std::uint64_t seed = 0;
  SynthWorld world;
  std::size_t input_dim = 64;
  std::size_t code_dim = 32;
  std::size_t env_hidden_dim = 64;
  std::size_t env_out_dim = 32;
  TrainConfig train;
  EvalConfig eval;
  PathsConfig paths;

  ModelConfig model_for(std::size_t n_speakers) const {
    ModelConfig m;
    m.ae.input_dim = input_dim;
    m.ae.code_dim = code_dim;
    m.n_speakers = n_speakers;
    m.env_hidden_dim = env_hidden_dim;
    m.env_out_dim = env_out_dim;
    return m;
  }
};

inline json default_run_config() {
  TrainConfig t;
  SynthWorld w;
  EvalConfig e;
  return {
      {"seed", 0},
      {"world", to_json(w)},
      {"model", {{"input_dim", 64}, {"code_dim", 32}, {"env_hidden_dim", 64}, {"env_out_dim", 32}}},
      {"train", to_json(t)},
      {"eval",
       {{"n_trials", e.n_trials},
        {"p_target", e.dcf.p_target},
        {"c_miss", e.dcf.c_miss},
        {"c_fa", e.dcf.c_fa},
        {"det_csv", e.det_csv},
        {"probe", e.probe},
        {"probe_steps", e.probe_steps},
        {"probe_lr", e.probe_lr}}},
      {"paths", {{"dataset", ""}, {"checkpoint", ""}, {"trials", ""}, {"resume", ""}}},
  };
}

namespace detail {

inline bool same_kind(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) {
    // Integral defaults only accept integral values.
    return !(a.is_number_integer() && !b.is_number_integer());
  }
  return a.type() == b.type();
}

inline void merge_into(json& base, const json& user, const std::string& path) {
  if (!user.is_object()) throw ConfigError("config section '" + path + "' must be an object");
  for (const auto& [key, val] : user.items()) {
    const std::string where = path.empty() ? key : path + "." + key;
    if (!base.contains(key)) throw ConfigError("unknown config key '" + where + "'");
    json& slot = base[key];
    if (slot.is_object()) {
      merge_into(slot, val, where);
    } else {
      if (!same_kind(slot, val)) {
        throw ConfigError("config key '" + where + "' expects " + slot.type_name() + ", got " +
                          val.type_name());
      }
      if (slot.is_number_unsigned() && val.is_number_integer()) {
        if (!val.is_number_unsigned() && val.get<std::int64_t>() < 0) {
          throw ConfigError("config key '" + where + "' must be non-negative");
        }
        slot = val.get<std::uint64_t>();  // stays unsigned for later merges
      } else {
        slot = val;
      }
    }
  }
}

}  // namespace detail

/// Defaults with `user` merged over them; unknown keys and type changes throw.
inline json merge_config(const json& user) {
  json cfg = default_run_config();
  if (!user.is_null()) detail::merge_into(cfg, user, "");
  return cfg;
}

/// Applies "a.b.c=value"; the value is parsed as JSON, falling back to a string.
inline void apply_override(json& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' is not of the form key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;

  json patch = value;
  std::string rest = key;
  std::vector<std::string> parts;
  for (std::size_t pos; (pos = rest.find('.')) != std::string::npos;) {
    parts.push_back(rest.substr(0, pos));
    rest = rest.substr(pos + 1);
  }
  parts.push_back(rest);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = json{{*it, patch}};
  detail::merge_into(cfg, patch, "");
}

inline json load_config_file(const std::filesystem::path& path) {
  const std::string text = detail::read_file(path);
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config file '" + path.string() + "' is not valid JSON");
  return j;
}

inline RunConfig parse_run_config(const json& resolved) {
  RunConfig rc;
  rc.resolved = resolved;
  try {
    rc.seed = resolved.at("seed").get<std::uint64_t>();
    rc.world = synth_world_from_json(resolved.at("world"), splitmix64(rc.seed ^ fnv1a64("world")));
    const auto& m = resolved.at("model");
    rc.input_dim = m.at("input_dim").get<std::size_t>();
    rc.code_dim = m.at("code_dim").get<std::size_t>();
    rc.env_hidden_dim = m.at("env_hidden_dim").get<std::size_t>();
    rc.env_out_dim = m.at("env_out_dim").get<std::size_t>();
    rc.train = train_config_from_json(resolved.at("train"), rc.seed);
    const auto& e = resolved.at("eval");
    rc.eval.n_trials = e.at("n_trials").get<std::size_t>();
    rc.eval.dcf.p_target = e.at("p_target").get<double>();
    rc.eval.dcf.c_miss = e.at("c_miss").get<double>();
    rc.eval.dcf.c_fa = e.at("c_fa").get<double>();
    rc.eval.det_csv = e.at("det_csv").get<bool>();
    rc.eval.probe = e.at("probe").get<bool>();
    rc.eval.probe_steps = e.at("probe_steps").get<std::size_t>();
    rc.eval.probe_lr = e.at("probe_lr").get<double>();
    const auto& p = resolved.at("paths");
    rc.paths.dataset = p.at("dataset").get<std::string>();
    rc.paths.checkpoint = p.at("checkpoint").get<std::string>();
    rc.paths.trials = p.at("trials").get<std::string>();
    rc.paths.resume = p.at("resume").get<std::string>();
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("invalid configuration: ") + ex.what());
  }
  rc.world.validate();
  ModelConfig probe_model = rc.model_for(2);
  probe_model.validate();
  rc.train.validate();
  rc.eval.dcf.validate();
  return rc;
}

}  // namespace disn
