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

// Finite-difference checks for every layer, loss and the composite step,
// each on a freshly drawn random instance at 64-bit.
//
// The composite check verifies the gradients the optimizers actually see:
// main parameters against
//   lS*L_spk + lR*L_recons + lE*L_env_env + lC*L_corr - l_adv*L_env_spk
// (the reversed adversarial term) and E^S parameters against plain L_env_spk.
// BN uses batch statistics without updating running estimates.

#include <algorithm>
#include <functional>
#include <list>
#include <span>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "disn/discriminators.hpp"
#include "disn/disentangler.hpp"
#include "disn/framework.hpp"
#include "disn/gradcheck.hpp"
#include "disn/layers.hpp"
#include "disn/rng.hpp"

namespace disn {

struct GradSuiteOptions {
  GradCheckOptions check;
  bool inject_sign_flip = false;  // self-test: negate every analytic gradient
};

namespace gradsuite {

inline Tensor<double> random_tensor(Rng& rng, std::size_t rows, std::size_t cols,
                                    double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Tensor<double> t(rows, cols);
  for (auto& v : t.flat()) v = n(rng);
  return t;
}

inline void randomize(Rng& rng, Param<double>& p, double scale = 0.5, double shift = 0.0) {
  std::normal_distribution<double> n(shift, scale);
  for (auto& v : p.value.flat()) v = n(rng);
}

/// Copies analytic gradients out of their live slots so the loss closure may
/// touch the parameters' grad storage freely.
class Frozen {
 public:
  void add(std::string name, std::span<double> value, std::span<const double> analytic,
           bool flip) {
    auto& copy = store_.emplace_back(analytic.begin(), analytic.end());
    if (flip) {
      for (auto& v : copy) v = -v;
    }
    names_.push_back(std::move(name));
    values_.push_back(value);
  }
  void add_param(std::string name, Param<double>& p, bool flip) {
    add(std::move(name), p.value.flat(), p.grad.flat(), flip);
  }

  std::vector<GradTarget> targets() const {
    std::vector<GradTarget> out;
    auto it = store_.begin();
    for (std::size_t i = 0; i < names_.size(); ++i, ++it) {
      out.push_back({names_[i], values_[i], std::span<const double>(*it)});
    }
    return out;
  }

 private:
  std::list<std::vector<double>> store_;  // stable addresses
  std::vector<std::string> names_;
  std::vector<std::span<double>> values_;
};

inline GradCheckResult check_fc(Rng& rng, const GradSuiteOptions& opt) {
  FcLayer<double> fc(5, 4);
  randomize(rng, fc.weight);
  randomize(rng, fc.bias);
  auto x = random_tensor(rng, 6, 5);
  const auto w = random_tensor(rng, 6, 4);
  auto [y, cache] = fc.forward(x);
  const auto dx = fc.backward(cache, w);
  Frozen f;
  f.add_param("weight", fc.weight, opt.inject_sign_flip);
  f.add_param("bias", fc.bias, opt.inject_sign_flip);
  f.add("x", x.flat(), dx.flat(), opt.inject_sign_flip);
  return gradcheck(f.targets(), [&] { return projected_sum(fc.forward(x).first, w); }, opt.check);
}

inline GradCheckResult check_bn(Rng& rng, const GradSuiteOptions& opt, Mode mode) {
  BnLayer<double> bn(4);
  randomize(rng, bn.gamma, 0.5, 1.0);
  randomize(rng, bn.beta);
  std::uniform_real_distribution<double> pos(0.5, 2.0);
  for (auto& v : bn.running_mean.flat()) v = pos(rng) - 1.0;
  for (auto& v : bn.running_var.flat()) v = pos(rng);
  auto x = random_tensor(rng, 6, 4);
  const auto w = random_tensor(rng, 6, 4);
  const Mode fwd = mode == Mode::eval ? Mode::eval : Mode::batch_stats;
  auto [y, cache] = bn.forward(x, fwd);
  const auto dx = bn.backward(cache, w);
  Frozen f;
  f.add_param("gamma", bn.gamma, opt.inject_sign_flip);
  f.add_param("beta", bn.beta, opt.inject_sign_flip);
  f.add("x", x.flat(), dx.flat(), opt.inject_sign_flip);
  return gradcheck(f.targets(), [&] { return projected_sum(bn.forward(x, fwd).first, w); },
                   opt.check);
}

inline GradCheckResult check_elu(Rng& rng, const GradSuiteOptions& opt) {
  auto x = random_tensor(rng, 5, 4);
  const auto w = random_tensor(rng, 5, 4);
  auto [y, cache] = elu_forward(x);
  const auto dx = elu_backward(cache, w);
  Frozen f;
  f.add("x", x.flat(), dx.flat(), opt.inject_sign_flip);
  return gradcheck(f.targets(), [&] { return projected_sum(elu_forward(x).first, w); },
                   opt.check);
}

inline GradCheckResult check_l1norm(Rng& rng, const GradSuiteOptions& opt) {
  auto x = random_tensor(rng, 5, 4);
  const auto w = random_tensor(rng, 5, 4);
  auto [y, cache] = l1_normalize_forward(x);
  const auto dx = l1_normalize_backward(cache, w);
  Frozen f;
  f.add("x", x.flat(), dx.flat(), opt.inject_sign_flip);
  return gradcheck(f.targets(), [&] { return projected_sum(l1_normalize_forward(x).first, w); },
                   opt.check);
}

inline AutoEncoder<double> random_autoencoder(Rng& rng, std::size_t input, std::size_t code) {
  AutoEncoder<double> ae(DisentanglerConfig{input, code});
  ae.init(rng);
  for (auto* p : ae.params()) {
    if (p == &ae.enc_bn.gamma || p == &ae.dec_bn.gamma) {
      randomize(rng, *p, 0.3, 1.0);
    } else if (p == &ae.enc_bn.beta || p == &ae.dec_bn.beta) {
      randomize(rng, *p, 0.3);
    }
  }
  return ae;
}

inline void add_params(Frozen& f, const std::string& prefix, const std::vector<Param<double>*>& ps,
                       bool flip) {
  for (std::size_t i = 0; i < ps.size(); ++i) {
    f.add_param(prefix + "[" + std::to_string(i) + "]", *ps[i], flip);
  }
}

/// encode -> split -> projected sum of both halves.
inline GradCheckResult check_encode(Rng& rng, const GradSuiteOptions& opt) {
  auto ae = random_autoencoder(rng, 6, 4);
  auto e = random_tensor(rng, 6, 6);
  const auto ws = random_tensor(rng, 6, 2);
  const auto we = random_tensor(rng, 6, 2);
  auto loss = [&] {
    auto [z, ec] = encode(ae, e, Mode::batch_stats);
    auto [codes, sc] = split_codes(z);
    return projected_sum(codes.spk, ws) + projected_sum(codes.env, we);
  };
  auto [z, ec] = encode(ae, e, Mode::batch_stats);
  auto [codes, sc] = split_codes(z);
  const auto de = encode_backward(ae, ec, split_codes_backward(sc, ws, we));
  Frozen f;
  add_params(f, "enc", {&ae.enc_bn.gamma, &ae.enc_bn.beta, &ae.enc_fc.weight, &ae.enc_fc.bias},
             opt.inject_sign_flip);
  f.add("e", e.flat(), de.flat(), opt.inject_sign_flip);
  return gradcheck(f.targets(), loss, opt.check);
}

inline GradCheckResult check_decode(Rng& rng, const GradSuiteOptions& opt) {
  auto ae = random_autoencoder(rng, 5, 4);
  CodeBatch<double> codes{random_tensor(rng, 6, 2), random_tensor(rng, 6, 2)};
  const auto w = random_tensor(rng, 6, 5);
  auto [out, cache] = decode(ae, codes, Mode::batch_stats);
  auto [dspk, denv] = decode_backward(ae, cache, w);
  Frozen f;
  add_params(f, "dec", {&ae.dec_bn.gamma, &ae.dec_bn.beta, &ae.dec_fc.weight, &ae.dec_fc.bias},
             opt.inject_sign_flip);
  f.add("spk", codes.spk.flat(), dspk.flat(), opt.inject_sign_flip);
  f.add("env", codes.env.flat(), denv.flat(), opt.inject_sign_flip);
  return gradcheck(f.targets(),
                   [&] { return projected_sum(decode(ae, codes, Mode::batch_stats).first, w); },
                   opt.check);
}

inline GradCheckResult check_recons(Rng& rng, const GradSuiteOptions& opt) {
  const auto e = random_tensor(rng, 6, 4);
  auto e_hat = random_tensor(rng, 6, 4);
  const auto g = recons_loss_backward(e, e_hat);
  Frozen f;
  f.add("e_hat", e_hat.flat(), g.flat(), opt.inject_sign_flip);
  return gradcheck(f.targets(), [&] { return recons_loss(e, e_hat); }, opt.check);
}

inline GradCheckResult check_speaker_loss(Rng& rng, const GradSuiteOptions& opt) {
  SpeakerDisc<double> disc(3, 4);
  disc.init(rng);
  disc.ap_scale.value[0] = 4.0;
  disc.ap_offset.value[0] = -1.5;
  auto spk = random_tensor(rng, 9, 3);
  const std::vector<std::size_t> labels = {0, 2, 1};
  auto [val, cache] = speaker_loss(disc, spk, labels);
  const auto dspk = speaker_loss_backward(disc, cache);
  Frozen f;
  add_params(f, "spk", disc.params(), opt.inject_sign_flip);
  f.add("codes", spk.flat(), dspk.flat(), opt.inject_sign_flip);
  return gradcheck(f.targets(), [&] { return speaker_loss(disc, spk, labels).first.total; },
                   opt.check);
}

inline GradCheckResult check_env_triplet(Rng& rng, const GradSuiteOptions& opt) {
  EnvDisc<double> g(3, 5, 4);
  g.init(rng);
  randomize(rng, g.bn1.gamma, 0.3, 1.0);
  randomize(rng, g.bn2.gamma, 0.3, 1.0);
  randomize(rng, g.bn1.beta, 0.3);
  randomize(rng, g.bn2.beta, 0.3);
  auto x = random_tensor(rng, 9, 3);
  const double margin = 4.0;  // keeps most hinges active
  auto [loss, cache] = env_triplet_loss(g, x, margin, Mode::batch_stats);
  const auto dx = env_triplet_loss_backward(g, cache);
  Frozen f;
  add_params(f, "g", g.params(), opt.inject_sign_flip);
  f.add("x", x.flat(), dx.flat(), opt.inject_sign_flip);
  return gradcheck(f.targets(),
                   [&] { return env_triplet_loss(g, x, margin, Mode::batch_stats).first; },
                   opt.check);
}

inline GradCheckResult check_mapc(Rng& rng, const GradSuiteOptions& opt) {
  auto spk = random_tensor(rng, 8, 3);
  auto env = random_tensor(rng, 8, 4);
  auto [loss, cache] = mapc_loss(spk, env);
  auto [ds, de] = mapc_loss_backward(cache);
  Frozen f;
  f.add("spk", spk.flat(), ds.flat(), opt.inject_sign_flip);
  f.add("env", env.flat(), de.flat(), opt.inject_sign_flip);
  return gradcheck(f.targets(), [&] { return mapc_loss(spk, env).first; }, opt.check);
}

/// Surrogate objective whose gradient the main-set optimizer receives.
inline double main_surrogate(const LossReport& r) {
  const auto& w = r.weights;
  return w.spk * r.spk + w.recons * r.recons + w.env * r.env_env + w.corr * r.corr -
         w.adv * r.env_spk;
}

inline GradCheckResult check_full_step(Rng& rng, const GradSuiteOptions& opt) {
  ModelConfig mc;
  mc.ae = {8, 6};
  mc.n_speakers = 3;
  mc.env_hidden_dim = 5;
  mc.env_out_dim = 4;
  Framework<double> fw(mc);
  fw.init(rng);
  fw.visit_params([&](const std::string& name, Param<double>& p) {
    if (name.ends_with(".gamma")) randomize(rng, p, 0.3, 1.0);
    if (name.ends_with(".beta")) randomize(rng, p, 0.3);
  });
  Batch<double> batch{random_tensor(rng, 6, 8), {0, 2}};
  StepOptions so;
  so.mode = Mode::batch_stats;
  so.weights.margin = 2.0;

  fw.zero_grad();
  forward_backward(fw, batch, so);
  const auto adv_set = fw.adversary_params();
  Frozen main, adv;
  fw.visit_params([&](const std::string& name, Param<double>& p) {
    const bool is_adv = std::find(adv_set.begin(), adv_set.end(), &p) != adv_set.end();
    (is_adv ? adv : main).add_param(name, p, opt.inject_sign_flip);
  });
  // Loss evaluations keep accumulating into the grad slots; the frozen
  // copies above are what gets compared.
  auto eval = [&] { return forward_backward(fw, batch, so); };
  GradCheckResult a = gradcheck(main.targets(), [&] { return main_surrogate(eval()); },
                                opt.check);
  GradCheckResult b = gradcheck(adv.targets(), [&] { return eval().env_spk; }, opt.check);
  if (b.max_rel_error > a.max_rel_error) {
    b.n_checked += a.n_checked;
    return b;
  }
  a.n_checked += b.n_checked;
  return a;
}

}  // namespace gradsuite

struct GradSuiteEntry {
  std::string component;
  double tolerance = 0;
  GradCheckResult result;
  bool passed = false;
};

struct GradSuiteCase {
  std::string component;
  double tolerance;
  std::function<GradCheckResult(Rng&, const GradSuiteOptions&)> run;
};

/// Layers are held to 1e-5, losses and the composite step to 1e-4.
inline std::vector<GradSuiteCase> gradcheck_cases() {
  using namespace gradsuite;
  return {
      {"fc", 1e-5, check_fc},
      {"bn_train", 1e-5, [](Rng& r, const GradSuiteOptions& o) { return check_bn(r, o, Mode::train); }},
      {"bn_eval", 1e-5, [](Rng& r, const GradSuiteOptions& o) { return check_bn(r, o, Mode::eval); }},
      {"elu", 1e-5, check_elu},
      {"l1_normalize", 1e-5, check_l1norm},
      {"encode", 1e-5, check_encode},
      {"decode", 1e-5, check_decode},
      {"recons_loss", 1e-5, check_recons},
      {"speaker_loss", 1e-4, check_speaker_loss},
      {"env_triplet_loss", 1e-4, check_env_triplet},
      {"mapc_loss", 1e-4, check_mapc},
      {"full_step", 1e-4, check_full_step},
  };
}

/// Runs every case `repeats` times with fresh random instances; each entry
/// reports the worst result over its repeats.
inline std::vector<GradSuiteEntry> run_gradcheck_suite(std::uint64_t seed, std::size_t repeats = 1,
                                                       const GradSuiteOptions& opt = {}) {
  std::vector<GradSuiteEntry> out;
  for (const auto& c : gradcheck_cases()) {
    Rng rng = substream(seed, "gradcheck." + c.component);
    GradSuiteEntry e{c.component, c.tolerance, {}, true};
    for (std::size_t k = 0; k < repeats; ++k) {
      auto r = c.run(rng, opt);
      const std::size_t n = e.result.n_checked + r.n_checked;
      if (k == 0 || r.max_rel_error > e.result.max_rel_error) e.result = r;
      e.result.n_checked = n;
    }
    e.passed = e.result.max_rel_error < c.tolerance;
    out.push_back(e);
  }
  return out;
}

inline nlohmann::json to_json(const std::vector<GradSuiteEntry>& entries) {
  nlohmann::json arr = nlohmann::json::array();
  bool ok = true;
  for (const auto& e : entries) {
    ok = ok && e.passed;
    arr.push_back({{"component", e.component},
                   {"max_rel_error", e.result.max_rel_error},
                   {"tolerance", e.tolerance},
                   {"worst_tensor", e.result.worst_name},
                   {"worst_index", e.result.worst_index},
                   {"analytic", e.result.worst_analytic},
                   {"numeric", e.result.worst_numeric},
                   {"n_checked", e.result.n_checked},
                   {"passed", e.passed}});
  }
  return {{"passed", ok}, {"checks", arr}};
}

}  // namespace disn
