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

#include "disn/gradcheck.hpp"
#include "disn/gradcheck_suite.hpp"
#include "disn/layers.hpp"

namespace disn {
namespace {

using T = Tensor<double>;

TEST(Tensor, RejectsEmptyShapes) {
  EXPECT_THROW(T(0, 3), ShapeError);
  EXPECT_THROW(T(2, 0), ShapeError);
  EXPECT_THROW(T(2, 2, std::vector<double>{1, 2, 3}), ShapeError);
}

TEST(Tensor, RejectsNonFiniteData) {
  EXPECT_THROW(T(1, 2, std::vector<double>{1, NAN}), NumericError);
  T t(1, 1);
  t[0] = INFINITY;
  EXPECT_THROW(t.require_finite("test"), NumericError);
}

TEST(Fc, IdentityWeightsPassInputThrough) {
  FcLayer<double> fc(T::identity(2), T(1, 2));
  auto [y, cache] = fc.forward(T::from_rows({{3, -1}}));
  EXPECT_EQ(y, T::from_rows({{3, -1}}));
  const T g = T::from_rows({{0.25, -2}});
  EXPECT_EQ(fc.backward(cache, g), g);
}

TEST(Fc, HandSum) {
  FcLayer<double> fc(T::from_rows({{1}, {1}}), T::from_rows({{0.5}}));
  EXPECT_DOUBLE_EQ(fc.forward(T::from_rows({{2, 3}})).first[0], 5.5);
}

TEST(Fc, ShapeErrors) {
  FcLayer<double> fc(3, 2);
  EXPECT_THROW(fc.forward(T(4, 2)), ShapeError);
  auto [y, cache] = fc.forward(T(4, 3));
  EXPECT_THROW(fc.backward(cache, T(4, 3)), ShapeError);
  EXPECT_THROW(FcLayer<double>(T(3, 2), T(1, 3)), ShapeError);
}

TEST(Bn, EvalWithUnitStatsIsNearIdentity) {
  BnLayer<double> bn(3);
  const T x = T::from_rows({{1, -2, 0.5}, {4, 0, -1}});
  auto [y, cache] = bn.forward(x, Mode::eval);
  const double s = 1.0 / std::sqrt(1.0 + bn.eps);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y[i], x[i] * s, 1e-15);
}

TEST(Bn, TrainNormalizesColumn) {
  BnLayer<double> bn(1);
  bn.eps = 1e-14;
  auto [y, cache] = bn.forward(T::from_rows({{1}, {3}}), Mode::train);
  EXPECT_NEAR(y[0], -1.0, 1e-12);
  EXPECT_NEAR(y[1], 1.0, 1e-12);
}

TEST(Bn, TrainUpdatesRunningStatsBatchStatsDoesNot) {
  BnLayer<double> bn(1);
  bn.forward(T::from_rows({{1}, {3}}), Mode::batch_stats);
  EXPECT_DOUBLE_EQ(bn.running_mean[0], 0.0);
  EXPECT_DOUBLE_EQ(bn.running_var[0], 1.0);
  bn.forward(T::from_rows({{1}, {3}}), Mode::train);
  EXPECT_NEAR(bn.running_mean[0], 0.1 * 2.0, 1e-15);
  EXPECT_NEAR(bn.running_var[0], 0.9 + 0.1 * 2.0, 1e-15);  // unbiased var of {1,3} is 2
}

TEST(Bn, TrainModeNeedsTwoRows) {
  BnLayer<double> bn(2);
  EXPECT_THROW(bn.forward(T(1, 2), Mode::train), DegenerateBatchError);
  EXPECT_THROW(bn.forward(T(1, 2), Mode::batch_stats), DegenerateBatchError);
  EXPECT_NO_THROW(bn.forward(T(1, 2), Mode::eval));
}

TEST(Bn, EvalIsBitReproducibleAndIgnoresBatch) {
  Rng rng(3);
  BnLayer<double> bn(4);
  gradsuite::randomize(rng, bn.gamma, 0.5, 1.0);
  bn.running_mean = gradsuite::random_tensor(rng, 1, 4);
  const T x = gradsuite::random_tensor(rng, 5, 4);
  const T a = bn.forward(x, Mode::eval).first;
  const T b = bn.forward(x, Mode::eval).first;
  EXPECT_EQ(a, b);
  // Row 0 alone gives the same output as within the batch.
  T first(1, 4);
  for (std::size_t k = 0; k < 4; ++k) first(0, k) = x(0, k);
  const T solo = bn.forward(first, Mode::eval).first;
  for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(solo(0, k), a(0, k));
}

TEST(Elu, Values) {
  auto [y, cache] = elu_forward(T::from_rows({{2, -1, 0}}));
  EXPECT_DOUBLE_EQ(y[0], 2.0);
  EXPECT_NEAR(y[1], std::exp(-1.0) - 1.0, 1e-15);
  EXPECT_NEAR(y[1], -0.63212, 1e-5);
  EXPECT_DOUBLE_EQ(y[2], 0.0);
  const T g = elu_backward(cache, T::from_rows({{0.7, 1, 1}}));
  EXPECT_DOUBLE_EQ(g[0], 0.7);
}

TEST(L1Normalize, Values) {
  auto [y, c] = l1_normalize_forward(T::from_rows({{2, -2}, {0, 0}}));
  EXPECT_NEAR(y(0, 0), 0.5, 1e-12);
  EXPECT_NEAR(y(0, 1), -0.5, 1e-12);
  EXPECT_EQ(y(1, 0), 0.0);
  EXPECT_EQ(y(1, 1), 0.0);
}

TEST(L1Normalize, NormIdentity) {
  Rng rng(11);
  for (int rep = 0; rep < 100; ++rep) {
    const T x = gradsuite::random_tensor(rng, 3, 5, 2.0);
    const T y = l1_normalize_forward(x).first;
    for (std::size_t r = 0; r < 3; ++r) {
      double nx = 0, ny = 0;
      for (std::size_t k = 0; k < 5; ++k) {
        nx += std::abs(x(r, k));
        ny += std::abs(y(r, k));
      }
      EXPECT_LE(ny, 1.0);
      EXPECT_NEAR(ny, nx / (nx + kL1NormEps), 1e-15);
    }
  }
}

TEST(Layers, ForwardDoesNotMutateInput) {
  Rng rng(5);
  const T x = gradsuite::random_tensor(rng, 4, 3);
  const T copy = x;
  FcLayer<double> fc(3, 3);
  fc.init_uniform(rng);
  BnLayer<double> bn(3);
  fc.forward(x);
  bn.forward(x, Mode::train);
  elu_forward(x);
  l1_normalize_forward(x);
  EXPECT_EQ(x, copy);
}

TEST(Layers, BackwardAccumulatesParameterGrads) {
  Rng rng(9);
  FcLayer<double> fc(3, 2);
  fc.init_uniform(rng);
  const T x = gradsuite::random_tensor(rng, 4, 3);
  const T g = gradsuite::random_tensor(rng, 4, 2);
  auto [y, cache] = fc.forward(x);
  fc.backward(cache, g);
  const T once = fc.weight.grad;
  fc.backward(cache, g);
  for (std::size_t i = 0; i < once.size(); ++i) {
    EXPECT_NEAR(fc.weight.grad[i], 2 * once[i], 1e-15);
  }
}

TEST(Gradcheck, DetectsSignFlip) {
  GradSuiteOptions opt;
  opt.inject_sign_flip = true;
  Rng rng(1);
  EXPECT_GT(gradsuite::check_fc(rng, opt).max_rel_error, 0.1);
}

TEST(Gradcheck, NonFiniteLossThrows) {
  std::vector<double> v = {1.0}, g = {0.0};
  std::vector<GradTarget> t = {{"v", v, g}};
  EXPECT_THROW(gradcheck(t, [&] { return v[0] > 1.0 ? NAN : v[0]; }), NumericError);
}

// Each layer against central differences over 100 random configurations.
class LayerGradients : public ::testing::TestWithParam<const char*> {};

TEST_P(LayerGradients, HundredRandomConfigurations) {
  const std::string name = GetParam();
  for (const auto& c : gradcheck_cases()) {
    if (c.component != name) continue;
    Rng rng = substream(2024, name);
    for (int rep = 0; rep < 100; ++rep) {
      const auto r = c.run(rng, {});
      ASSERT_LT(r.max_rel_error, 1e-5) << name << " rep " << rep << " worst " << r.worst_name
                                       << "[" << r.worst_index << "]";
    }
    return;
  }
  FAIL() << "no such gradient case " << name;
}

INSTANTIATE_TEST_SUITE_P(All, LayerGradients,
                         ::testing::Values("fc", "bn_train", "bn_eval", "elu", "l1_normalize"),
                         [](const auto& info) { return std::string(info.param); });

}  // namespace
}  // namespace disn
