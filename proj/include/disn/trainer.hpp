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

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "disn/adam.hpp"
#include "disn/framework.hpp"
#include "disn/rng.hpp"
#include "disn/sampler.hpp"

namespace disn {

enum class Precision { float32, float64 };

struct TrainConfig {
  LossWeights weights;
  std::size_t batch_size = 64;  // triplets per step
  std::size_t epochs = 30;
  double lr0 = 1e-3;
  double decay_factor = 0.75;   // fraction of the rate kept at each decay
  std::size_t decay_every = 16;
  std::uint64_t seed = 0;
  Precision precision = Precision::float32;
  bool swap = true;
  std::size_t checkpoint_every = 0;  // 0: only at the end

  void validate() const {
    weights.validate();
    if (!(lr0 > 0)) throw ConfigError("lr0 must be positive");
    if (!(decay_factor > 0 && decay_factor < 1)) {
      throw ConfigError("decay_factor must lie in (0, 1)");
    }
    if (decay_every == 0) throw ConfigError("decay_every must be positive");
    if (batch_size < 2) throw ConfigError("batch_size must be at least 2 triplets");
  }
};

/// lr0 * decay_factor ^ floor(epoch / decay_every)
inline double lr_at(std::size_t epoch, const TrainConfig& cfg) {
  return cfg.lr0 * std::pow(cfg.decay_factor, static_cast<double>(epoch / cfg.decay_every));
}

/// Everything that evolves during training.
template <typename Real>
struct TrainerState {
  Framework<Real> model;
  AdamState main_opt;
  AdamState adv_opt;
  std::size_t epoch = 0;  // epochs completed
  Rng sampler_rng;
};

template <typename Real>
TrainerState<Real> make_trainer(const ModelConfig& mc, std::uint64_t seed) {
  TrainerState<Real> st{Framework<Real>(mc), {}, {}, 0, substream(seed, "sampler")};
  Rng init = substream(seed, "init");
  st.model.init(init);
  return st;
}

/// Zero grads, one composite forward/backward, then the two updates from the
/// same mini-batch: main set from L_total, E^S from L_env_spk.
template <typename Real>
LossReport train_step(TrainerState<Real>& st, const Batch<Real>& batch, const StepOptions& opt,
                      double lr) {
  st.model.zero_grad();
  LossReport rep = forward_backward(st.model, batch, opt);
  adam_step(st.model.main_params(), st.main_opt, lr);
  if (opt.use_adversary) adam_step(st.model.adversary_params(), st.adv_opt, lr);
  st.model.spk.clamp_scale();
  return rep;
}

struct EpochRecord {
  std::size_t epoch = 0;
  double spk = 0, recons = 0, env_env = 0, env_spk = 0, corr = 0, total = 0;
  double lr = 0;
};

/// Splits an epoch's triplets into batches of `size`; a trailing single
/// triplet joins the previous batch.
inline std::vector<std::span<const TripletIndex>> split_batches(
    std::span<const TripletIndex> all, std::size_t size) {
  std::vector<std::span<const TripletIndex>> out;
  std::size_t pos = 0;
  while (pos < all.size()) {
    std::size_t n = std::min(size, all.size() - pos);
    if (all.size() - pos - n == 1) ++n;
    out.push_back(all.subspan(pos, n));
    pos += n;
  }
  if (!out.empty() && out.back().size() < 2) {
    throw DegenerateBatchError("training needs at least 2 triplets per batch");
  }
  return out;
}

using EpochHook = std::function<void(std::size_t epoch_done)>;

/// Trains from st.epoch up to cfg.epochs. `on_epoch` runs after every epoch
/// (checkpointing lives there).
template <typename Real>
std::vector<EpochRecord> fit(TrainerState<Real>& st, const Dataset& ds, const TrainConfig& cfg,
                             const EpochHook& on_epoch = {}) {
  cfg.validate();
  ds.validate();
  const auto classes = speaker_classes(ds.meta);
  if (classes.size() != st.model.cfg.n_speakers) {
    throw ConfigMismatchError("dataset has " + std::to_string(classes.size()) +
                              " speakers, model was built for " +
                              std::to_string(st.model.cfg.n_speakers));
  }
  if (ds.embeddings.dim() != st.model.cfg.ae.input_dim) {
    throw ConfigMismatchError("dataset embeddings have D = " +
                              std::to_string(ds.embeddings.dim()) + ", model expects " +
                              std::to_string(st.model.cfg.ae.input_dim));
  }
  StepOptions opt;
  opt.weights = cfg.weights;
  opt.swap = cfg.swap;

  std::vector<EpochRecord> history;
  while (st.epoch < cfg.epochs) {
    const double lr = lr_at(st.epoch, cfg);
    const TripletSet ts = build_triplets(ds.meta, st.sampler_rng);
    EpochRecord rec;
    rec.epoch = st.epoch;
    rec.lr = lr;
    const auto batches = split_batches(ts.triplets, cfg.batch_size);
    for (const auto& group : batches) {
      const auto rep = train_step(st, make_batch<Real>(ds, group, classes), opt, lr);
      rec.spk += rep.spk;
      rec.recons += rep.recons;
      rec.env_env += rep.env_env;
      rec.env_spk += rep.env_spk;
      rec.corr += rep.corr;
      rec.total += rep.total;
    }
    const double n = static_cast<double>(batches.size());
    for (double* v : {&rec.spk, &rec.recons, &rec.env_env, &rec.env_spk, &rec.corr, &rec.total}) {
      *v /= n;
    }
    history.push_back(rec);
    ++st.epoch;
    if (on_epoch) on_epoch(st.epoch);
  }
  return history;
}

inline std::string loss_history_csv(const std::vector<EpochRecord>& hist) {
  std::string out = "epoch,L_spk,L_recons,L_env_env,L_env_spk,L_corr,L_total,lr\n";
  char buf[512];
  for (const auto& r : hist) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", r.epoch, r.spk,
                  r.recons, r.env_env, r.env_spk, r.corr, r.total, r.lr);
    out += buf;
  }
  return out;
}

}  // namespace disn
