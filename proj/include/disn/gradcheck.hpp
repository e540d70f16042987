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

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "disn/error.hpp"
#include "disn/tensor.hpp"

namespace disn {

/// One perturbable array and the analytic gradient the caller computed for it.
struct GradTarget {
  std::string name;
  std::span<double> value;
  std::span<const double> analytic;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_name;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t n_checked = 0;
};

struct GradCheckOptions {
  double step = 1e-5;
  // Relative error is |a - n| / max(|a|, |n|, abs_floor); the floor keeps
  // round-off on near-zero gradients from dominating.
  double abs_floor = 1e-3;
};

inline double relative_error(double analytic, double numeric, double abs_floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), abs_floor});
  return std::abs(analytic - numeric) / scale;
}

/// Central-difference check of every entry of every target. `loss` must be a
/// pure function of the target values; it is evaluated twice per entry.
inline GradCheckResult gradcheck(const std::vector<GradTarget>& targets,
                                 const std::function<double()>& loss,
                                 const GradCheckOptions& opt = {}) {
  GradCheckResult res;
  for (const auto& t : targets) {
    if (t.value.size() != t.analytic.size()) {
      throw ShapeError("gradcheck: '" + t.name + "' value/gradient size mismatch");
    }
    for (std::size_t i = 0; i < t.value.size(); ++i) {
      const double orig = t.value[i];
      t.value[i] = orig + opt.step;
      const double up = loss();
      t.value[i] = orig - opt.step;
      const double down = loss();
      t.value[i] = orig;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericError("gradcheck: non-finite loss perturbing '" + t.name + "'[" +
                           std::to_string(i) + "]");
      }
      const double numeric = (up - down) / (2.0 * opt.step);
      const double err = relative_error(t.analytic[i], numeric, opt.abs_floor);
      ++res.n_checked;
      if (err > res.max_rel_error || res.worst_name.empty()) {
        res.max_rel_error = err;
        res.worst_name = t.name;
        res.worst_index = i;
        res.worst_analytic = t.analytic[i];
        res.worst_numeric = numeric;
      }
    }
  }
  return res;
}

/// Target over a parameter: perturbs its value, reads its accumulated grad.
inline GradTarget param_target(std::string name, Param<double>& p) {
  return {std::move(name), p.value.flat(), p.grad.flat()};
}

inline GradTarget tensor_target(std::string name, Tensor<double>& value,
                                const Tensor<double>& analytic) {
  return {std::move(name), value.flat(), analytic.flat()};
}

/// sum(weights .* y): projects an output onto a scalar with a dense gradient.
inline double projected_sum(const Tensor<double>& y, const Tensor<double>& weights) {
  y.require_shape(weights, "projected_sum");
  double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * weights[i];
  return s;
}

}  // namespace disn
