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

// Linear probes: how much speaker and session identity is linearly decodable
// from each code half.

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "disn/adam.hpp"
#include "disn/discriminators.hpp"
#include "disn/error.hpp"
#include "disn/layers.hpp"
#include "disn/rng.hpp"
#include "disn/sampler.hpp"

namespace disn {

struct ProbeOptions {
  std::size_t steps = 300;  // full-batch Adam steps
  double lr = 0.05;
};

/// Dense class indices for a list of string labels (sorted order).
inline std::vector<std::size_t> encode_labels(std::span<const std::string> labels,
                                              std::size_t* n_classes = nullptr) {
  std::map<std::string, std::size_t> index;
  for (const auto& l : labels) index.emplace(l, 0);
  std::size_t k = 0;
  for (auto& kv : index) kv.second = k++;
  if (n_classes) *n_classes = index.size();
  std::vector<std::size_t> out;
  out.reserve(labels.size());
  for (const auto& l : labels) out.push_back(index.at(l));
  return out;
}

/// Trains a softmax-regression probe on the `train` rows of x and returns
/// accuracy on the `test` rows. Features are standardized with training
/// statistics. The probe starts from zero weights, so the result is
/// deterministic.
inline double linear_probe_accuracy(const Tensor<double>& x, std::span<const std::size_t> labels,
                                    std::size_t n_classes, std::span<const std::size_t> train,
                                    std::span<const std::size_t> test,
                                    const ProbeOptions& opt = {}) {
  if (labels.size() != x.rows()) throw ProbeError("probe labels and features differ in length");
  if (train.empty() || test.empty()) throw ProbeError("probe needs nonempty train and test splits");
  std::vector<bool> seen(n_classes, false);
  std::size_t distinct = 0;
  for (std::size_t r : train) {
    if (!seen.at(labels[r])) ++distinct;
    seen[labels[r]] = true;
  }
  if (n_classes < 2 || distinct < 2) throw ProbeError("probe labels have a single class");

  const std::size_t d = x.cols();
  std::vector<double> mean(d, 0.0), scale(d, 0.0);
  for (std::size_t r : train) {
    for (std::size_t k = 0; k < d; ++k) mean[k] += x(r, k);
  }
  for (auto& m : mean) m /= static_cast<double>(train.size());
  for (std::size_t r : train) {
    for (std::size_t k = 0; k < d; ++k) scale[k] += (x(r, k) - mean[k]) * (x(r, k) - mean[k]);
  }
  for (auto& s : scale) {
    s = std::sqrt(s / static_cast<double>(train.size()));
    s = s > 1e-12 ? 1.0 / s : 0.0;
  }
  auto standardized = [&](std::span<const std::size_t> rows) {
    Tensor<double> out(rows.size(), d);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t k = 0; k < d; ++k) out(i, k) = (x(rows[i], k) - mean[k]) * scale[k];
    }
    return out;
  };
  const Tensor<double> xtr = standardized(train);
  const Tensor<double> xte = standardized(test);

  FcLayer<double> fc(d, n_classes);
  AdamState adam;
  std::vector<double> prob(n_classes);
  for (std::size_t step = 0; step < opt.steps; ++step) {
    fc.weight.zero_grad();
    fc.bias.zero_grad();
    auto [logits, cache] = fc.forward(xtr);
    Tensor<double> g(xtr.rows(), n_classes);
    const double inv = 1.0 / static_cast<double>(xtr.rows());
    for (std::size_t i = 0; i < xtr.rows(); ++i) {
      detail::softmax_xent<double>(logits.row(i), labels[train[i]], prob);
      auto gi = g.row(i);
      for (std::size_t c = 0; c < n_classes; ++c) gi[c] = prob[c] * inv;
      gi[labels[train[i]]] -= inv;
    }
    fc.backward(cache, g);
    adam_step(fc.params(), adam, opt.lr);
  }

  auto [logits, cache] = fc.forward(xte);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < xte.rows(); ++i) {
    auto row = logits.row(i);
    const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    if (best == labels[test[i]]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(xte.rows());
}

/// Holds out the last utterance (in metadata order) of every session with at
/// least two utterances; everything else is training data.
struct ProbeSplit {
  std::vector<std::size_t> train, test;
};

inline ProbeSplit holdout_split(std::span<const UtteranceMeta> meta) {
  std::map<std::string, std::vector<std::size_t>> by_session;
  for (std::size_t i = 0; i < meta.size(); ++i) by_session[meta[i].session_id].push_back(i);
  std::vector<bool> held(meta.size(), false);
  for (const auto& [ses, rows] : by_session) {
    if (rows.size() >= 2) held[rows.back()] = true;
  }
  ProbeSplit s;
  for (std::size_t i = 0; i < meta.size(); ++i) (held[i] ? s.test : s.train).push_back(i);
  if (s.test.empty()) throw ProbeError("no session has two utterances to hold one out");
  return s;
}

struct ProbeReport {
  double speaker_from_spk = 0;
  double speaker_from_env = 0;
  double session_from_spk = 0;
  double session_from_env = 0;
  double mapc = 0;
  std::size_t n_train = 0, n_test = 0;
  std::size_t n_speakers = 0, n_sessions = 0;
};

/// Four probes (speaker/session from spk/env codes) plus MAPC over all rows.
inline ProbeReport probe_disentanglement(const Tensor<double>& spk, const Tensor<double>& env,
                                         std::span<const UtteranceMeta> meta,
                                         const ProbeOptions& opt = {}) {
  if (spk.rows() != meta.size() || env.rows() != meta.size()) {
    throw ProbeError("probe codes and metadata differ in length");
  }
  std::vector<std::string> speakers, sessions;
  for (const auto& m : meta) {
    speakers.push_back(m.speaker_id);
    sessions.push_back(m.session_id);
  }
  ProbeReport rep;
  const auto spk_labels = encode_labels(speakers, &rep.n_speakers);
  const auto ses_labels = encode_labels(sessions, &rep.n_sessions);
  const auto split = holdout_split(meta);
  rep.n_train = split.train.size();
  rep.n_test = split.test.size();
  rep.speaker_from_spk = linear_probe_accuracy(spk, spk_labels, rep.n_speakers, split.train, split.test, opt);
  rep.speaker_from_env = linear_probe_accuracy(env, spk_labels, rep.n_speakers, split.train, split.test, opt);
  rep.session_from_spk = linear_probe_accuracy(spk, ses_labels, rep.n_sessions, split.train, split.test, opt);
  rep.session_from_env = linear_probe_accuracy(env, ses_labels, rep.n_sessions, split.train, split.test, opt);
  rep.mapc = mapc_loss(spk, env).first;
  return rep;
}

inline nlohmann::json to_json(const ProbeReport& r) {
  return {{"speaker_from_spk", r.speaker_from_spk}, {"speaker_from_env", r.speaker_from_env},
          {"session_from_spk", r.session_from_spk}, {"session_from_env", r.session_from_env},
          {"mapc", r.mapc},                         {"n_train", r.n_train},
          {"n_test", r.n_test},                     {"n_speakers", r.n_speakers},
          {"n_sessions", r.n_sessions}};
}

}  // namespace disn
