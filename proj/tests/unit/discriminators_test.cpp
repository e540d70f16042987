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

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "disn/discriminators.hpp"
#include "disn/framework.hpp"
#include "disn/gradcheck_suite.hpp"

namespace disn {
namespace {

using T = Tensor<double>;
using gradsuite::random_tensor;

TEST(LossWeights, Defaults) {
  LossWeights w;
  EXPECT_EQ(w.adv, 0.5);
  EXPECT_EQ(w.spk, 1.0);
  EXPECT_EQ(w.recons, 1.0);
  EXPECT_EQ(w.env, 1.0);
  EXPECT_EQ(w.corr, 1.0);
  EXPECT_EQ(w.margin, 1.0);
  w.corr = -1;
  EXPECT_THROW(w.validate(), ConfigError);
}

TEST(SpeakerLoss, OrthogonalPrototypesAnalyticValue) {
  SpeakerDisc<double> disc(2, 2);
  EXPECT_EQ(disc.ap_scale.value[0], 10.0);
  EXPECT_EQ(disc.ap_offset.value[0], -5.0);
  const T spk = T::from_rows({{1, 0}, {1, 0}, {1, 0}, {0, 1}, {0, 1}, {0, 1}});
  const auto v = speaker_loss(disc, spk, {0, 1}).first;
  EXPECT_NEAR(v.ap, std::log1p(std::exp(-10.0)), 1e-15);
  EXPECT_NEAR(v.ap, 4.54e-5, 1e-7);
  EXPECT_NEAR(v.total, v.ce + v.ap, 1e-15);
}

TEST(SpeakerLoss, SingleTripletIsDegenerate) {
  SpeakerDisc<double> disc(2, 2);
  EXPECT_THROW(speaker_loss(disc, T(3, 2, 1.0), {0}), DegenerateBatchError);
}

TEST(SpeakerLoss, LabelValidation) {
  SpeakerDisc<double> disc(2, 2);
  EXPECT_THROW(speaker_loss(disc, T(6, 2, 1.0), {0, 2}), ShapeError);
  EXPECT_THROW(speaker_loss(disc, T(6, 2, 1.0), {0}), ShapeError);
}

TEST(SpeakerLoss, ApTermInvariantToPositiveRowScaling) {
  Rng rng(17);
  std::uniform_real_distribution<double> scale(0.1, 10.0);
  for (int rep = 0; rep < 100; ++rep) {
    SpeakerDisc<double> disc(3, 4);
    disc.init(rng);
    const T spk = random_tensor(rng, 9, 3);
    const std::vector<std::size_t> labels = {0, 3, 1};
    const double ref = speaker_loss(disc, spk, labels).first.ap;
    // Scale a query row, and both support rows of another triplet jointly.
    T scaled = spk;
    const double a = scale(rng), b = scale(rng);
    for (std::size_t k = 0; k < 3; ++k) {
      scaled(3 * (rep % 3), k) *= a;
      scaled(3 * ((rep + 1) % 3) + 1, k) *= b;
      scaled(3 * ((rep + 1) % 3) + 2, k) *= b;
    }
    EXPECT_NEAR(speaker_loss(disc, scaled, labels).first.ap, ref, 1e-12);
  }
}

TEST(SpeakerDisc, ScaleClamp) {
  SpeakerDisc<double> disc(2, 2);
  disc.ap_scale.value[0] = -3.0;
  disc.clamp_scale();
  EXPECT_EQ(disc.ap_scale.value[0], kApScaleMin);
}

TEST(TripletMarginLoss, HandValues) {
  // pos = 0, neg = 4 -> 0
  EXPECT_EQ(triplet_margin_loss(T::from_rows({{0}, {0}, {2}}), 1.0).first, 0.0);
  // pos = 1, neg = 0 -> 2
  EXPECT_DOUBLE_EQ(triplet_margin_loss(T::from_rows({{0}, {1}, {0}}), 1.0).first, 2.0);
  // identity g, rows (0, 0, 1), m = 0.5 -> 0
  EXPECT_EQ(triplet_margin_loss(T::from_rows({{0}, {0}, {1}}), 0.5).first, 0.0);
}

TEST(EnvTripletLoss, NonNegativeAndZeroWhenMarginMet) {
  Rng rng(21);
  for (int rep = 0; rep < 200; ++rep) {
    const T y = random_tensor(rng, 9, 4);
    const auto [loss, dy] = triplet_margin_loss(y, 1.0);
    EXPECT_GE(loss, 0.0);
  }
  // Margin satisfied everywhere: loss and gradient vanish.
  T y = T::from_rows({{0, 0}, {0, 0.1}, {3, 0}, {1, 1}, {1, 1}, {-2, 1}});
  const auto [loss, dy] = triplet_margin_loss(y, 1.0);
  EXPECT_EQ(loss, 0.0);
  for (double v : dy.flat()) EXPECT_EQ(v, 0.0);
}

TEST(Mapc, SelfCorrelationIsOne) {
  Rng rng(3);
  const T x = random_tensor(rng, 20, 1);
  EXPECT_NEAR(mapc_loss(x, x).first, 1.0, 1e-12);
}

TEST(Mapc, ConstantColumnContributesZero) {
  Rng rng(4);
  T env = random_tensor(rng, 10, 2);
  const T spk = random_tensor(rng, 10, 2);
  for (std::size_t r = 0; r < 10; ++r) env(r, 1) = 0.25;
  auto [full, cache] = mapc_loss(spk, env);
  const double col0 = mapc_loss(spk, column_slice(env, 0, 1)).first;
  EXPECT_NEAR(full, col0 / 2.0, 1e-12);
  auto [ds, de] = mapc_loss_backward(cache);
  for (std::size_t r = 0; r < 10; ++r) EXPECT_EQ(de(r, 1), 0.0);
}

TEST(Mapc, NeedsTwoRows) {
  EXPECT_THROW(mapc_loss(T(1, 2), T(1, 2)), DegenerateBatchError);
  EXPECT_THROW(mapc_loss(T(3, 2), T(4, 2)), ShapeError);
}

// Monte-Carlo oracle: for independent columns, E|r| ~ sqrt(2 / (pi N)).
TEST(Mapc, NullDistributionLevel) {
  Rng rng(99);
  const T spk = random_tensor(rng, 1024, 8);
  const T env = random_tensor(rng, 1024, 8);
  const double v = mapc_loss(spk, env).first;
  EXPECT_NEAR(v, 0.025, 0.01);
  EXPECT_NEAR(v, std::sqrt(2.0 / (M_PI * 1024.0)), 0.01);
}

TEST(Mapc, RangeAndAffineInvariance) {
  Rng rng(5);
  std::uniform_real_distribution<double> pos(0.1, 5.0), shift(-3.0, 3.0);
  for (int rep = 0; rep < 100; ++rep) {
    T spk = random_tensor(rng, 12, 3);
    T env = random_tensor(rng, 12, 4);
    for (std::size_t r = 0; r < 12; ++r) env(r, 0) += 0.8 * spk(r, 1);  // some real correlation
    const double ref = mapc_loss(spk, env).first;
    EXPECT_GE(ref, 0.0);
    EXPECT_LE(ref, 1.0);
    for (std::size_t k = 0; k < 3; ++k) {
      const double a = pos(rng), b = shift(rng);
      for (std::size_t r = 0; r < 12; ++r) spk(r, k) = a * spk(r, k) + b;
    }
    EXPECT_NEAR(mapc_loss(spk, env).first, ref, 1e-12);
  }
}

TEST(DiscriminatorGradients, RandomInstances) {
  Rng rng(41);
  for (int rep = 0; rep < 20; ++rep) {
    EXPECT_LT(gradsuite::check_speaker_loss(rng, {}).max_rel_error, 1e-4);
    EXPECT_LT(gradsuite::check_env_triplet(rng, {}).max_rel_error, 1e-4);
    EXPECT_LT(gradsuite::check_mapc(rng, {}).max_rel_error, 1e-4);
  }
}

// ---------------------------------------------------------------------------
// Routing
// ---------------------------------------------------------------------------

ModelConfig small_model() {
  ModelConfig mc;
  mc.ae = {8, 6};
  mc.n_speakers = 3;
  mc.env_hidden_dim = 5;
  mc.env_out_dim = 4;
  return mc;
}

Batch<double> random_batch(Rng& rng, std::size_t triplets, std::size_t dim, std::size_t classes) {
  Batch<double> b{random_tensor(rng, 3 * triplets, dim), {}};
  for (std::size_t i = 0; i < triplets; ++i) b.labels.push_back(i % classes);
  return b;
}

std::vector<T> encoder_grads(Framework<double>& fw) {
  std::vector<T> out;
  for (auto* p : fw.ae.params()) out.push_back(p->grad);
  return out;
}

TEST(Routing, EnvironmentDiscriminatorsShareNoStorage) {
  Framework<double> fw(small_model());
  Rng rng(1);
  fw.init(rng);
  const T before = fw.env_spk.fc1.weight.value;
  auto ee = fw.env_env.params();
  auto es = fw.env_spk.params();
  for (auto* a : ee) {
    for (auto* b : es) EXPECT_NE(a->value.raw(), b->value.raw());
  }
  fw.env_env.fc1.weight.value[0] += 1.0;
  EXPECT_EQ(fw.env_spk.fc1.weight.value, before);
}

TEST(Routing, ZeroAdversaryWeightMatchesAdversaryFreeRun) {
  Rng rng(2);
  Framework<double> fw(small_model());
  fw.init(rng);
  const auto batch = random_batch(rng, 2, 8, 3);
  StepOptions with;
  with.weights.adv = 0.0;
  with.mode = Mode::batch_stats;
  StepOptions without = with;
  without.use_adversary = false;

  Framework<double> a = fw, b = fw;
  a.zero_grad();
  b.zero_grad();
  forward_backward(a, batch, with);
  forward_backward(b, batch, without);
  EXPECT_EQ(encoder_grads(a), encoder_grads(b));
  // E^S still learns from L_env_spk.
  double es_norm = 0;
  for (auto* p : a.env_spk.params()) {
    for (double g : p->grad.flat()) es_norm += std::abs(g);
  }
  EXPECT_GT(es_norm, 0.0);
}

TEST(Routing, ZeroAdvAndCorrReducesToRemainingTerms) {
  Rng rng(3);
  Framework<double> fw(small_model());
  fw.init(rng);
  const auto batch = random_batch(rng, 3, 8, 3);
  StepOptions opt;
  opt.weights.adv = 0.0;
  opt.weights.corr = 0.0;
  opt.mode = Mode::batch_stats;

  Framework<double> a = fw;
  a.zero_grad();
  forward_backward(a, batch, opt);

  // Reference: only L_spk, L_recons, L_env_env, propagated by hand.
  Framework<double> b = fw;
  b.zero_grad();
  auto [z, ec] = encode(b.ae, batch.e, Mode::batch_stats);
  auto [codes, sc] = split_codes(z);
  auto [sv, scache] = speaker_loss(b.spk, codes.spk, batch.labels);
  auto [ev, ecache] = env_triplet_loss(b.env_env, codes.env, 1.0, Mode::batch_stats);
  auto [e_hat, dc] = decode(b.ae, swap_speaker_codes(codes), Mode::batch_stats);
  T dspk = speaker_loss_backward(b.spk, scache, 1.0);
  T denv = env_triplet_loss_backward(b.env_env, ecache, 1.0);
  auto [ds_dec, de_dec] = decode_backward(b.ae, dc, recons_loss_backward(batch.e, e_hat, 1.0));
  dspk += swap_triplet_rows(ds_dec);
  denv += de_dec;
  encode_backward(b.ae, ec, split_codes_backward(sc, dspk, denv));

  const auto ga = encoder_grads(a), gb = encoder_grads(b);
  ASSERT_EQ(ga.size(), gb.size());
  for (std::size_t i = 0; i < ga.size(); ++i) {
    for (std::size_t k = 0; k < ga[i].size(); ++k) EXPECT_EQ(ga[i][k], gb[i][k]);
  }
}

// Duplicate-forward oracle: the encoder's share of the adversarial term is
// -lambda_adv times the plain gradient of L_env_spk.
TEST(Routing, EncoderReceivesReversedScaledGradient) {
  Rng rng(4);
  Framework<double> fw(small_model());
  fw.init(rng);
  const auto batch = random_batch(rng, 3, 8, 3);
  StepOptions opt;
  opt.mode = Mode::batch_stats;
  opt.weights.adv = 0.7;
  StepOptions off = opt;
  off.use_adversary = false;

  Framework<double> a = fw, b = fw, c = fw;
  a.zero_grad();
  b.zero_grad();
  c.zero_grad();
  forward_backward(a, batch, opt);
  forward_backward(b, batch, off);

  auto [z, ec] = encode(c.ae, batch.e, Mode::batch_stats);
  auto [codes, sc] = split_codes(z);
  auto [lv, lcache] = env_triplet_loss(c.env_spk, codes.spk, 1.0, Mode::batch_stats);
  const T dspk = env_triplet_loss_backward(c.env_spk, lcache, 1.0);
  encode_backward(c.ae, ec, split_codes_backward(sc, dspk, T(codes.env.rows(), codes.env.cols())));

  const auto ga = encoder_grads(a), gb = encoder_grads(b), gc = encoder_grads(c);
  double max_abs = 0;
  for (std::size_t i = 0; i < ga.size(); ++i) {
    for (std::size_t k = 0; k < ga[i].size(); ++k) {
      const double diff = ga[i][k] - gb[i][k];
      const double expect = -0.7 * gc[i][k];
      EXPECT_NEAR(diff, expect, 1e-10 * (1.0 + std::abs(expect)));
      max_abs = std::max(max_abs, std::abs(expect));
    }
  }
  EXPECT_GT(max_abs, 1e-6);  // the comparison is not vacuous
  // E^S gets the unreversed gradient with unit weight.
  for (std::size_t i = 0; i < a.env_spk.params().size(); ++i) {
    EXPECT_EQ(a.env_spk.params()[i]->grad, c.env_spk.params()[i]->grad);
  }
}

TEST(Routing, FullStepGradientMatchesFiniteDifferences) {
  Rng rng(51);
  for (int rep = 0; rep < 5; ++rep) {
    EXPECT_LT(gradsuite::check_full_step(rng, {}).max_rel_error, 1e-4);
  }
}

}  // namespace
}  // namespace disn
