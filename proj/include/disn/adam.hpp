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
#include <vector>

#include "disn/tensor.hpp"

namespace disn {

/// Adam with bias correction. Moments live in each Param (m1, m2); this
/// object owns the step counter shared by one parameter set.
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
};

template <typename Real>
void adam_update(Param<Real>& p, const AdamState& state, double lr) {
  p.value.require_shape(p.grad, "adam_update");
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  const Real b1 = static_cast<Real>(state.beta1);
  const Real b2 = static_cast<Real>(state.beta2);
  for (std::size_t i = 0; i < p.value.size(); ++i) {
    const Real g = p.grad[i];
    p.m1[i] = b1 * p.m1[i] + (Real(1) - b1) * g;
    p.m2[i] = b2 * p.m2[i] + (Real(1) - b2) * g * g;
    const double mhat = static_cast<double>(p.m1[i]) / c1;
    const double vhat = static_cast<double>(p.m2[i]) / c2;
    p.value[i] -= static_cast<Real>(lr * mhat / (std::sqrt(vhat) + state.eps));
  }
}

/// Advances the step counter once, then updates every parameter of the set.
template <typename Real>
void adam_step(const std::vector<Param<Real>*>& params, AdamState& state, double lr) {
  ++state.step;
  for (auto* p : params) adam_update(*p, state, lr);
}

}  // namespace disn
