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

// The full model (auto-encoder + S + E^E + E^S) and one composite
// forward/backward pass with the two-player gradient routing:
//
//   main set  (everything but E^S) <- grad of  lS*Lspk + lR*Lrec + lE*Lenv
//                                              - ladv*Lenv_spk + lC*Lcorr
//            (the minus sign is the gradient reversal in front of E^S)
//   E^S       <- grad of Lenv_spk with e_spk held constant

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "disn/discriminators.hpp"
#include "disn/disentangler.hpp"

namespace disn {

struct ModelConfig {
  DisentanglerConfig ae;
  std::size_t n_speakers = 2;
  std::size_t env_hidden_dim = 64;
  std::size_t env_out_dim = 32;

  void validate() const {
    ae.validate();
    if (n_speakers < 2) throw ConfigError("model needs at least 2 speaker classes");
    if (env_hidden_dim < 1 || env_out_dim < 1) {
      throw ConfigError("environment discriminator dims must be positive");
    }
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

template <typename Real>
struct Framework {
  ModelConfig cfg;
  AutoEncoder<Real> ae;
  SpeakerDisc<Real> spk;
  EnvDisc<Real> env_env;  // E^E, sees e_env
  EnvDisc<Real> env_spk;  // E^S, sees e_spk; never shares storage with E^E

  Framework() = default;

  explicit Framework(const ModelConfig& c)
      : cfg(c),
        ae(c.ae),
        spk(c.ae.spk_dim(), c.n_speakers),
        env_env(c.ae.env_dim(), c.env_hidden_dim, c.env_out_dim),
        env_spk(c.ae.spk_dim(), c.env_hidden_dim, c.env_out_dim) {
    c.validate();
  }

  template <typename Rng>
  void init(Rng& rng) {
    ae.init(rng);
    spk.init(rng);
    env_env.init(rng);
    env_spk.init(rng);
  }

  std::vector<Param<Real>*> main_params() {
    std::vector<Param<Real>*> out = ae.params();
    for (auto* p : spk.params()) out.push_back(p);
    for (auto* p : env_env.params()) out.push_back(p);
    return out;
  }

  std::vector<Param<Real>*> adversary_params() { return env_spk.params(); }

  void zero_grad() {
    for (auto* p : main_params()) p->zero_grad();
    for (auto* p : adversary_params()) p->zero_grad();
  }

  /// Every trainable tensor with a stable name.
  void visit_params(const std::function<void(const std::string&, Param<Real>&)>& fn) {
    auto bn = [&](const std::string& pre, BnLayer<Real>& l) {
      fn(pre + ".gamma", l.gamma);
      fn(pre + ".beta", l.beta);
    };
    auto fc = [&](const std::string& pre, FcLayer<Real>& l) {
      fn(pre + ".weight", l.weight);
      fn(pre + ".bias", l.bias);
    };
    auto env = [&](const std::string& pre, EnvDisc<Real>& g) {
      bn(pre + ".bn1", g.bn1);
      fc(pre + ".fc1", g.fc1);
      bn(pre + ".bn2", g.bn2);
      fc(pre + ".fc2", g.fc2);
    };
    bn("ae.enc_bn", ae.enc_bn);
    fc("ae.enc_fc", ae.enc_fc);
    bn("ae.dec_bn", ae.dec_bn);
    fc("ae.dec_fc", ae.dec_fc);
    fc("spk.f", spk.f);
    fn("spk.ap_scale", spk.ap_scale);
    fn("spk.ap_offset", spk.ap_offset);
    env("env_env", env_env);
    env("env_spk", env_spk);
  }

  /// Non-trainable BN running statistics.
  void visit_buffers(const std::function<void(const std::string&, Tensor<Real>&)>& fn) {
    auto bn = [&](const std::string& pre, BnLayer<Real>& l) {
      fn(pre + ".running_mean", l.running_mean);
      fn(pre + ".running_var", l.running_var);
    };
    bn("ae.enc_bn", ae.enc_bn);
    bn("ae.dec_bn", ae.dec_bn);
    bn("env_env.bn1", env_env.bn1);
    bn("env_env.bn2", env_env.bn2);
    bn("env_spk.bn1", env_spk.bn1);
    bn("env_spk.bn2", env_spk.bn2);
  }

  /// Eval-mode speaker/environment codes for a batch of embeddings.
  CodeBatch<Real> codes(const Tensor<Real>& e) {
    auto [z, cache] = encode(ae, e, Mode::eval);
    return split_codes(z).first;
  }
};

/// Triplet-contiguous embeddings (3B rows) and one speaker class per triplet.
template <typename Real>
struct Batch {
  Tensor<Real> e;
  std::vector<std::size_t> labels;

  std::size_t triplets() const noexcept { return e.rows() / 3; }
};

struct LossReport {
  double spk = 0;
  double recons = 0;
  double env_env = 0;
  double env_spk = 0;
  double corr = 0;
  double total = 0;
  LossWeights weights;
};

/// lS*Lspk + lR*Lrec + lE*Lenv + ladv*Lenv_spk + lC*Lcorr on reported values.
inline double weighted_total(const LossReport& r) {
  const auto& w = r.weights;
  return w.spk * r.spk + w.recons * r.recons + w.env * r.env_env + w.adv * r.env_spk +
         w.corr * r.corr;
}

struct StepOptions {
  LossWeights weights;
  bool swap = true;
  // When false E^S is not run at all; used as the reference for the
  // routing identity checks.
  bool use_adversary = true;
  Mode mode = Mode::train;
};

/// Backpropagates L_env_spk once through E^S. E^S receives the plain
/// gradient (seed 1, its input treated as a constant); the returned tensor is
/// the encoder-side contribution after gradient reversal, -lambda_adv * dL/dspk.
template <typename Real>
Tensor<Real> route_adversarial(EnvDisc<Real>& es, const EnvLossCache<Real>& cache,
                               double lambda_adv) {
  Tensor<Real> dspk = env_triplet_loss_backward(es, cache, Real(1));
  dspk *= static_cast<Real>(-lambda_adv);
  return dspk;
}

namespace detail {

inline void require_finite_loss(double v, const char* term) {
  if (!std::isfinite(v)) {
    throw NumericError(std::string("non-finite loss in ") + term);
  }
}

}  // namespace detail

/// One composite forward pass and gradient accumulation (grads are added to
/// whatever is already in the Param slots).
template <typename Real>
LossReport forward_backward(Framework<Real>& fw, const Batch<Real>& batch,
                            const StepOptions& opt) {
  opt.weights.validate();
  batch.e.require_finite("input embeddings");
  const auto& w = opt.weights;

  auto [z, enc_cache] = encode(fw.ae, batch.e, opt.mode);
  auto [codes, split_cache] = split_codes(z);

  auto [spk_val, spk_cache] = speaker_loss(fw.spk, codes.spk, batch.labels);
  auto [env_val, env_cache] =
      env_triplet_loss(fw.env_env, codes.env, static_cast<Real>(w.margin), opt.mode);
  auto [corr_val, corr_cache] = mapc_loss(codes.spk, codes.env);

  CodeBatch<Real> dec_in = opt.swap ? swap_speaker_codes(codes) : codes;
  auto [e_hat, dec_cache] = decode(fw.ae, dec_in, opt.mode);
  const Real rec_val = recons_loss(batch.e, e_hat);

  LossReport rep;
  rep.weights = w;
  rep.spk = spk_val.total;
  rep.env_env = static_cast<double>(env_val);
  rep.corr = static_cast<double>(corr_val);
  rep.recons = static_cast<double>(rec_val);

  // Forward of E^S on the shared e_spk.
  std::optional<EnvLossCache<Real>> adv_cache;
  if (opt.use_adversary) {
    auto [adv_val, c] =
        env_triplet_loss(fw.env_spk, codes.spk, static_cast<Real>(w.margin), opt.mode);
    rep.env_spk = static_cast<double>(adv_val);
    adv_cache = std::move(c);
  }
  rep.total = weighted_total(rep);

  detail::require_finite_loss(rep.spk, "L_spk");
  detail::require_finite_loss(rep.recons, "L_recons");
  detail::require_finite_loss(rep.env_env, "L_env_env");
  detail::require_finite_loss(rep.env_spk, "L_env_spk");
  detail::require_finite_loss(rep.corr, "L_corr");

  Tensor<Real> dspk = speaker_loss_backward(fw.spk, spk_cache, static_cast<Real>(w.spk));
  Tensor<Real> denv = env_triplet_loss_backward(fw.env_env, env_cache, static_cast<Real>(w.env));
  auto [dspk_corr, denv_corr] = mapc_loss_backward(corr_cache, static_cast<Real>(w.corr));
  dspk += dspk_corr;
  denv += denv_corr;

  Tensor<Real> drec = recons_loss_backward(batch.e, e_hat, static_cast<Real>(w.recons));
  auto [dspk_dec, denv_dec] = decode_backward(fw.ae, dec_cache, drec);
  dspk += opt.swap ? swap_triplet_rows(dspk_dec) : dspk_dec;
  denv += denv_dec;

  if (adv_cache) dspk += route_adversarial(fw.env_spk, *adv_cache, w.adv);

  Tensor<Real> dz = split_codes_backward(split_cache, dspk, denv);
  encode_backward(fw.ae, enc_cache, dz);
  return rep;
}

}  // namespace disn
