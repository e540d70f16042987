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

// Verification metrics. A trial is accepted when score >= threshold.
// Operating points are taken at every distinct-score boundary: below the
// lowest score (accept all), at each midpoint between consecutive distinct
// scores, and just above the highest score (reject all). Equal scores always
// fall on the same side of a threshold.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "disn/error.hpp"

namespace disn {

struct ScoreSet {
  std::vector<double> scores;
  std::vector<bool> is_target;

  void add(double score, bool target) {
    scores.push_back(score);
    is_target.push_back(target);
  }

  std::size_t n_target() const {
    return static_cast<std::size_t>(std::count(is_target.begin(), is_target.end(), true));
  }
  std::size_t n_nontarget() const { return is_target.size() - n_target(); }

  void validate() const {
    if (scores.size() != is_target.size()) throw ProtocolError("scores/labels length mismatch");
    if (scores.empty()) throw ProtocolError("empty score set");
    if (n_target() == 0 || n_nontarget() == 0) {
      throw ProtocolError("score set needs at least one target and one nontarget trial");
    }
    for (double s : scores) {
      if (!std::isfinite(s)) throw ProtocolError("non-finite score in score set");
    }
  }
};

struct OperatingPoint {
  double threshold = 0;
  double far = 0;
  double frr = 0;
};

/// Operating points in increasing threshold order (FRR rising, FAR falling).
inline std::vector<OperatingPoint> operating_points(const ScoreSet& s) {
  s.validate();
  std::vector<std::size_t> order(s.scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return s.scores[a] < s.scores[b]; });
  const double nt = static_cast<double>(s.n_target());
  const double nn = static_cast<double>(s.n_nontarget());

  std::vector<double> values;          // distinct scores ascending
  std::vector<std::size_t> tgt, non;   // counts per distinct score
  for (std::size_t idx : order) {
    if (values.empty() || s.scores[idx] != values.back()) {
      values.push_back(s.scores[idx]);
      tgt.push_back(0);
      non.push_back(0);
    }
    (s.is_target[idx] ? tgt.back() : non.back())++;
  }

  std::vector<OperatingPoint> pts;
  pts.reserve(values.size() + 1);
  std::size_t rejected_t = 0, accepted_n = static_cast<std::size_t>(nn);
  for (std::size_t t = 0; t <= values.size(); ++t) {
    double thr;
    if (t == 0) {
      thr = values.front();
    } else if (t == values.size()) {
      thr = std::nextafter(values.back(), std::numeric_limits<double>::infinity());
    } else {
      thr = values[t - 1] + (values[t] - values[t - 1]) / 2.0;
    }
    pts.push_back({thr, static_cast<double>(accepted_n) / nn,
                   static_cast<double>(rejected_t) / nt});
    if (t < values.size()) {
      rejected_t += tgt[t];
      accepted_n -= non[t];
    }
  }
  return pts;
}

struct EerResult {
  double eer = 0;
  double threshold = 0;
};

/// Equal error rate, linearly interpolated between the two operating points
/// that bracket the FRR = FAR crossing.
inline EerResult compute_eer(const ScoreSet& s) {
  const auto pts = operating_points(s);
  for (std::size_t t = 1; t < pts.size(); ++t) {
    if (pts[t].frr >= pts[t].far) {
      const auto& a = pts[t - 1];
      const auto& b = pts[t];
      const double da = a.far - a.frr;  // > 0
      const double db = b.far - b.frr;  // <= 0
      const double f = da / (da - db);
      return {a.frr + f * (b.frr - a.frr), a.threshold + f * (b.threshold - a.threshold)};
    }
  }
  // Unreachable: the reject-all point always has FRR = 1 >= FAR = 0.
  return {pts.back().frr, pts.back().threshold};
}

struct DcfParams {
  double p_target = 0.05;
  double c_miss = 1.0;
  double c_fa = 1.0;

  void validate() const {
    if (!(p_target > 0.0 && p_target < 1.0)) {
      throw ConfigError("p_target must lie in (0, 1), got " + std::to_string(p_target));
    }
    if (!(c_miss > 0.0) || !(c_fa > 0.0)) throw ConfigError("DCF costs must be positive");
  }
};

struct DcfResult {
  double min_dcf = 0;
  double threshold = 0;
};

/// Minimum normalized detection cost over all operating points:
/// c_miss*FRR*p + c_fa*FAR*(1-p), divided by min(c_miss*p, c_fa*(1-p)).
inline DcfResult compute_min_dcf(const ScoreSet& s, const DcfParams& p = {}) {
  p.validate();
  const auto pts = operating_points(s);
  const double norm = std::min(p.c_miss * p.p_target, p.c_fa * (1.0 - p.p_target));
  DcfResult best{std::numeric_limits<double>::infinity(), 0};
  for (const auto& op : pts) {
    const double c = p.c_miss * op.frr * p.p_target + p.c_fa * op.far * (1.0 - p.p_target);
    if (c < best.min_dcf) best = {c, op.threshold};
  }
  best.min_dcf /= norm;
  return best;
}

struct MetricsReport {
  double eer = 0;
  double eer_threshold = 0;
  double min_dcf = 0;
  double dcf_threshold = 0;
  std::size_t n_target = 0;
  std::size_t n_nontarget = 0;
};

inline MetricsReport evaluate_scores(const ScoreSet& s, const DcfParams& p = {}) {
  const auto e = compute_eer(s);
  const auto d = compute_min_dcf(s, p);
  return {e.eer, e.threshold, d.min_dcf, d.threshold, s.n_target(), s.n_nontarget()};
}

inline nlohmann::json to_json(const MetricsReport& m) {
  return {{"eer", m.eer},
          {"eer_threshold", m.eer_threshold},
          {"min_dcf", m.min_dcf},
          {"dcf_threshold", m.dcf_threshold},
          {"n_target", m.n_target},
          {"n_nontarget", m.n_nontarget}};
}

/// DET curve as CSV rows "threshold,FAR,FRR".
inline std::string det_curve_csv(const ScoreSet& s) {
  std::string out = "threshold,FAR,FRR\n";
  char buf[128];
  for (const auto& op : operating_points(s)) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", op.threshold, op.far, op.frr);
    out += buf;
  }
  return out;
}

}  // namespace disn
