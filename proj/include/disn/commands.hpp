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

// The five CLI commands as library calls. Each writes its artifacts and the
// resolved configuration (config.json) into the output directory.
//
// Output files:
//   synth:     embeddings.emb, metadata.jsonl, ground_truth.json
//   train:     checkpoint.disn, loss_history.csv, train_report.json
//   eval:      metrics.json, trials.txt, det_raw.csv / det_disentangled.csv
//   gradcheck: gradcheck.json

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "disn/checkpoint.hpp"
#include "disn/config.hpp"
#include "disn/embedding_io.hpp"
#include "disn/error.hpp"
#include "disn/gradcheck_suite.hpp"
#include "disn/metrics.hpp"
#include "disn/probe.hpp"
#include "disn/sampler.hpp"
#include "disn/scoring.hpp"
#include "disn/synth.hpp"
#include "disn/trainer.hpp"

namespace disn {

namespace fs = std::filesystem;

inline constexpr const char* kEmbeddingsFile = "embeddings.emb";
inline constexpr const char* kMetadataFile = "metadata.jsonl";
inline constexpr const char* kGroundTruthFile = "ground_truth.json";
inline constexpr const char* kCheckpointFile = "checkpoint.disn";
inline constexpr const char* kLossHistoryFile = "loss_history.csv";

/// Exit codes: 0 success, 1 validation/config error, 2 runtime/numeric error.
inline int exit_code_for(const std::exception& e) {
  return dynamic_cast<const ValidationError*>(&e) ? 1 : 2;
}

/// Config file (optional) -> --set overrides -> --seed, resolved and parsed.
inline RunConfig resolve_config(const std::string& config_path,
                                const std::vector<std::string>& overrides,
                                std::optional<std::uint64_t> seed) {
  json cfg = merge_config(config_path.empty() ? json() : load_config_file(config_path));
  for (const auto& o : overrides) apply_override(cfg, o);
  if (seed) cfg["seed"] = *seed;
  return parse_run_config(cfg);
}

/// Creates `out` when allowed, otherwise requires it to exist.
inline void prepare_out_dir(const fs::path& out, bool create) {
  if (out.empty()) throw ConfigError("an output directory (--out) is required");
  if (fs::is_directory(out)) return;
  if (fs::exists(out)) throw IoError("'" + out.string() + "' exists and is not a directory");
  if (!create) throw ConfigError("output directory '" + out.string() + "' does not exist");
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create '" + out.string() + "': " + ec.message());
}

inline void write_json(const fs::path& path, const json& j) {
  detail::write_file_atomic(path, j.dump(2) + "\n");
}

inline void echo_config(const RunConfig& rc, const fs::path& out) {
  write_json(out / "config.json", rc.resolved);
}

inline Dataset load_dataset(const fs::path& dir, std::optional<std::size_t> expected_dim) {
  if (dir.empty()) throw ConfigError("paths.dataset is not set");
  Dataset ds;
  try {
    ds.embeddings = load_embeddings(dir / kEmbeddingsFile, expected_dim);
  } catch (const DimensionMismatchError& e) {
    throw ConfigMismatchError(std::string("config/dataset mismatch on D: ") + e.what());
  }
  ds.meta = load_metadata(dir / kMetadataFile);
  ds.validate();
  return ds;
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

inline SynthData cmd_synth(const RunConfig& rc, const fs::path& out, bool create_out = true) {
  prepare_out_dir(out, create_out);
  echo_config(rc, out);
  SynthData data = synth_generate(rc.world);
  save_embeddings(out / kEmbeddingsFile, data.dataset.embeddings);
  save_metadata(out / kMetadataFile, data.dataset.meta);
  json gt = to_json(data.truth);
  gt["world"] = to_json(rc.world);
  gt["world"]["seed"] = rc.world.seed;
  write_json(out / kGroundTruthFile, gt);
  return data;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainResult {
  std::vector<EpochRecord> history;
  std::size_t epochs_done = 0;
};

inline json train_config_record(const TrainConfig& tc) {
  json j = to_json(tc);
  j["seed"] = tc.seed;
  return j;
}

template <typename Real>
TrainResult run_training(const RunConfig& rc, const Dataset& ds, const fs::path& out,
                         std::ostream* log) {
  const ModelConfig mc = rc.model_for(speaker_classes(ds.meta).size());
  mc.validate();
  for (const auto& w : mc.ae.warnings()) {
    if (log) *log << "warning: " << w << "\n";
  }
  TrainerState<Real> st = make_trainer<Real>(mc, rc.seed);
  if (!rc.paths.resume.empty()) {
    st = restore_trainer<Real>(load_checkpoint(rc.paths.resume, mc));
    if (log) *log << "resumed from '" << rc.paths.resume << "' at epoch " << st.epoch << "\n";
  }
  const json train_rec = train_config_record(rc.train);
  const fs::path ckpt = out / kCheckpointFile;
  const std::size_t every = rc.train.checkpoint_every;

  auto hook = [&](std::size_t done) {
    if ((every > 0 && done % every == 0) || done == rc.train.epochs) {
      save_checkpoint(ckpt, capture(st, train_rec));
    }
  };
  auto history = fit(st, ds, rc.train, [&](std::size_t done) {
    hook(done);
    if (log) *log << "epoch " << done << "/" << rc.train.epochs << " done\n";
  });
  if (history.empty()) save_checkpoint(ckpt, capture(st, train_rec));
  return {std::move(history), st.epoch};
}

inline TrainResult cmd_train(const RunConfig& rc, const fs::path& out, std::ostream* log = nullptr) {
  prepare_out_dir(out, true);
  echo_config(rc, out);
  const Dataset ds = load_dataset(rc.paths.dataset, rc.input_dim);
  TrainResult res = rc.train.precision == Precision::float32
                        ? run_training<float>(rc, ds, out, log)
                        : run_training<double>(rc, ds, out, log);
  detail::write_file_atomic(out / kLossHistoryFile, loss_history_csv(res.history));

  json report = {{"epochs_completed", res.epochs_done},
                 {"weights", to_json(rc.train.weights)},
                 {"precision", to_string(rc.train.precision)}};
  if (!res.history.empty()) {
    const auto& last = res.history.back();
    report["final"] = {{"L_spk", last.spk},       {"L_recons", last.recons},
                       {"L_env_env", last.env_env}, {"L_env_spk", last.env_spk},
                       {"L_corr", last.corr},     {"L_total", last.total},
                       {"lr", last.lr}};
  }
  write_json(out / "train_report.json", report);
  return res;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

/// Eval-mode (spk, env) codes for every utterance in metadata order.
inline CodeBatch<double> utterance_codes(Framework<double>& model, const Dataset& ds) {
  Tensor<double> e(ds.meta.size(), ds.embeddings.dim());
  for (std::size_t i = 0; i < ds.meta.size(); ++i) {
    auto v = ds.embeddings.get(ds.meta[i].utt_id);
    auto row = e.row(i);
    for (std::size_t k = 0; k < v.size(); ++k) row[k] = v[k];
  }
  return model.codes(e);
}

inline EmbeddingStore code_store(const Dataset& ds, const Tensor<double>& codes) {
  EmbeddingStore store(codes.cols());
  std::vector<float> buf(codes.cols());
  for (std::size_t i = 0; i < ds.meta.size(); ++i) {
    auto row = codes.row(i);
    for (std::size_t k = 0; k < buf.size(); ++k) buf[k] = static_cast<float>(row[k]);
    store.add(ds.meta[i].utt_id, buf);
  }
  return store;
}

inline json cmd_eval(const RunConfig& rc, const fs::path& out) {
  prepare_out_dir(out, true);
  echo_config(rc, out);
  if (rc.paths.checkpoint.empty()) throw ConfigError("paths.checkpoint is not set");
  if (!fs::exists(rc.paths.checkpoint)) {
    throw ConfigError("checkpoint '" + rc.paths.checkpoint + "' does not exist");
  }
  const Dataset ds = load_dataset(rc.paths.dataset, rc.input_dim);
  const CheckpointData cd = load_checkpoint(rc.paths.checkpoint);
  if (cd.model.ae.input_dim != ds.embeddings.dim()) {
    throw ConfigMismatchError("checkpoint expects D = " + std::to_string(cd.model.ae.input_dim) +
                              ", dataset has D = " + std::to_string(ds.embeddings.dim()));
  }
  auto st = restore_trainer<double>(cd);

  std::vector<Trial> trials;
  if (!rc.paths.trials.empty()) {
    trials = load_trials(rc.paths.trials);
  } else {
    Rng rng = substream(rc.seed, "trials");
    trials = build_mismatch_trials(ds.meta, rng, rc.eval.n_trials);
  }
  save_trials(out / "trials.txt", trials);

  const auto codes = utterance_codes(st.model, ds);
  const EmbeddingStore spk_store = code_store(ds, codes.spk);
  const ScoreSet raw = score_trials(ds.embeddings, trials);
  const ScoreSet dis = score_trials(spk_store, trials);

  json report = {{"raw", to_json(evaluate_scores(raw, rc.eval.dcf))},
                 {"disentangled", to_json(evaluate_scores(dis, rc.eval.dcf))},
                 {"dcf_params",
                  {{"p_target", rc.eval.dcf.p_target},
                   {"c_miss", rc.eval.dcf.c_miss},
                   {"c_fa", rc.eval.dcf.c_fa}}},
                 {"n_trials", trials.size()},
                 {"checkpoint_epoch", cd.epoch}};
  if (rc.eval.probe) {
    ProbeOptions po{rc.eval.probe_steps, rc.eval.probe_lr};
    report["probe"] = to_json(probe_disentanglement(codes.spk, codes.env, ds.meta, po));
  }
  if (rc.eval.det_csv) {
    detail::write_file_atomic(out / "det_raw.csv", det_curve_csv(raw));
    detail::write_file_atomic(out / "det_disentangled.csv", det_curve_csv(dis));
  }
  write_json(out / "metrics.json", report);
  return report;
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

/// Returns true when every check passes. Prints one line per component.
inline bool cmd_gradcheck(std::uint64_t seed, const std::optional<fs::path>& out,
                          const GradSuiteOptions& opt, std::ostream& os,
                          std::size_t repeats = 1) {
  const auto entries = run_gradcheck_suite(seed, repeats, opt);
  bool ok = true;
  char line[256];
  for (const auto& e : entries) {
    ok = ok && e.passed;
    std::snprintf(line, sizeof line, "%-18s max_rel_error %.3e  tol %.0e  %s  (worst: %s[%zu])\n",
                  e.component.c_str(), e.result.max_rel_error, e.tolerance,
                  e.passed ? "PASS" : "FAIL", e.result.worst_name.c_str(), e.result.worst_index);
    os << line;
  }
  if (out) {
    prepare_out_dir(*out, true);
    write_json(*out / "gradcheck.json", to_json(entries));
  }
  return ok;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

/// Human-readable summary of whatever artifacts an output directory holds.
inline std::string cmd_report(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ConfigError("'" + dir.string() + "' is not a directory");
  std::ostringstream os;
  bool any = false;
  auto read_json = [&](const char* name) -> std::optional<json> {
    const fs::path p = dir / name;
    if (!fs::exists(p)) return std::nullopt;
    json j = json::parse(detail::read_file(p), nullptr, false);
    if (j.is_discarded()) throw FormatError("'" + p.string() + "' is not valid JSON");
    any = true;
    return j;
  };
  if (auto cfg = read_json("config.json")) os << "seed: " << cfg->at("seed") << "\n";
  if (fs::exists(dir / kEmbeddingsFile)) {
    const auto store = load_embeddings(dir / kEmbeddingsFile);
    os << "dataset: " << store.size() << " embeddings, D = " << store.dim() << "\n";
    any = true;
  }
  if (fs::exists(dir / kLossHistoryFile)) {
    std::istringstream in(detail::read_file(dir / kLossHistoryFile));
    std::string header, line, last;
    std::getline(in, header);
    std::size_t rows = 0;
    while (std::getline(in, line)) {
      if (!line.empty()) {
        last = line;
        ++rows;
      }
    }
    os << "training: " << rows << " epochs logged\n";
    if (!last.empty()) os << "  " << header << "\n  " << last << "\n";
    any = true;
  }
  if (auto m = read_json("metrics.json")) {
    for (const char* block : {"raw", "disentangled"}) {
      const auto& b = m->at(block);
      char line[160];
      std::snprintf(line, sizeof line, "%-13s EER %.4f  minDCF %.4f  (%zu target / %zu nontarget)\n",
                    block, b.at("eer").get<double>(), b.at("min_dcf").get<double>(),
                    b.at("n_target").get<std::size_t>(), b.at("n_nontarget").get<std::size_t>());
      os << line;
    }
    if (m->contains("probe")) os << "probe: " << m->at("probe").dump() << "\n";
  }
  if (auto g = read_json("gradcheck.json")) {
    os << "gradcheck: " << (g->at("passed").get<bool>() ? "PASS" : "FAIL") << "\n";
    for (const auto& c : g->at("checks")) {
      char line[128];
      std::snprintf(line, sizeof line, "  %-18s %.3e\n", c.at("component").get<std::string>().c_str(),
                    c.at("max_rel_error").get<double>());
      os << line;
    }
  }
  if (!any) throw DatasetError("no disn artifacts found in '" + dir.string() + "'");
  return os.str();
}

}  // namespace disn
