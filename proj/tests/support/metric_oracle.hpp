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

// Brute-force verification metrics: every candidate threshold is scored by a
// direct pass over all trials.

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "disn/metrics.hpp"
#include "disn/rng.hpp"

namespace disn::testing_util {

struct OracleRates {
  double far, frr;
};

/// Trials with score >= threshold are accepted.
inline OracleRates oracle_rates(const ScoreSet& s, double threshold) {
  double fa = 0, miss = 0, nt = 0, nn = 0;
  for (std::size_t i = 0; i < s.scores.size(); ++i) {
    const bool accept = s.scores[i] >= threshold;
    if (s.is_target[i]) {
      nt += 1;
      miss += accept ? 0 : 1;
    } else {
      nn += 1;
      fa += accept ? 1 : 0;
    }
  }
  return {fa / nn, miss / nt};
}

/// Accept-all, every midpoint between distinct scores, reject-all.
inline std::vector<double> oracle_thresholds(const ScoreSet& s) {
  std::vector<double> v = s.scores;
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  std::vector<double> out{v.front()};
  for (std::size_t i = 1; i < v.size(); ++i) out.push_back(v[i - 1] + (v[i] - v[i - 1]) / 2.0);
  out.push_back(std::nextafter(v.back(), std::numeric_limits<double>::infinity()));
  return out;
}

inline double oracle_eer(const ScoreSet& s) {
  const auto th = oracle_thresholds(s);
  for (std::size_t i = 1; i < th.size(); ++i) {
    const auto b = oracle_rates(s, th[i]);
    if (b.frr >= b.far) {
      const auto a = oracle_rates(s, th[i - 1]);
      const double f = (a.far - a.frr) / ((a.far - a.frr) - (b.far - b.frr));
      return a.frr + f * (b.frr - a.frr);
    }
  }
  return 1.0;
}

inline double oracle_min_dcf(const ScoreSet& s, const DcfParams& p = {}) {
  double best = std::numeric_limits<double>::infinity();
  for (double t : oracle_thresholds(s)) {
    const auto r = oracle_rates(s, t);
    best = std::min(best, p.c_miss * r.frr * p.p_target + p.c_fa * r.far * (1 - p.p_target));
  }
  return best / std::min(p.c_miss * p.p_target, p.c_fa * (1 - p.p_target));
}

/// Random score set of n trials; about half the sets are quantized so that
/// ties occur.
inline ScoreSet random_score_set(Rng& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0.0, 1.0), shift(0.0, 2.0);
  std::normal_distribution<double> g(0.0, 1.0);
  const double p_target = 0.05 + 0.9 * u(rng);
  const double sep = shift(rng);
  const bool quantize = u(rng) < 0.5;
  ScoreSet s;
  for (std::size_t i = 0; i < n; ++i) {
    const bool target = (i == 0) || (i != 1 && u(rng) < p_target);
    double v = g(rng) + (target ? sep : 0.0);
    if (quantize) v = std::round(v * 4.0) / 4.0;
    s.add(v, target);
  }
  return s;
}

}  // namespace disn::testing_util
