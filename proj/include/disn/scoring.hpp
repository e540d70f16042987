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

// Trial lists and cosine scoring.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "disn/embedding_io.hpp"
#include "disn/error.hpp"
#include "disn/metrics.hpp"
#include "disn/rng.hpp"
#include "disn/sampler.hpp"

namespace disn {

struct Trial {
  bool target = false;
  std::string enroll;
  std::string test;

  friend bool operator==(const Trial&, const Trial&) = default;
};

/// A vector tagged with the utterance it came from, for error messages.
struct NamedVector {
  std::string_view utt;
  std::span<const float> v;
};

/// Mean cosine similarity over all |a| x |b| cross pairs.
inline double score_trial(std::span<const NamedVector> a, std::span<const NamedVector> b) {
  if (a.empty() || b.empty()) throw ScoringError("score_trial needs nonempty lists");
  auto norm = [](const NamedVector& x) {
    double s = 0;
    for (float v : x.v) s += static_cast<double>(v) * v;
    if (!(s > 0)) throw ScoringError("zero vector for utterance '" + std::string(x.utt) + "'");
    return std::sqrt(s);
  };
  std::vector<double> na, nb;
  for (const auto& x : a) na.push_back(norm(x));
  for (const auto& y : b) nb.push_back(norm(y));
  double total = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      if (a[i].v.size() != b[j].v.size()) {
        throw ScoringError("dimension mismatch between '" + std::string(a[i].utt) + "' and '" +
                           std::string(b[j].utt) + "'");
      }
      double dot = 0;
      for (std::size_t k = 0; k < a[i].v.size(); ++k) {
        dot += static_cast<double>(a[i].v[k]) * b[j].v[k];
      }
      total += dot / (na[i] * nb[j]);
    }
  }
  return total / static_cast<double>(a.size() * b.size());
}

/// Worker count for trial scoring: DISN_THREADS if set, else hardware concurrency.
inline std::size_t scoring_threads() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("DISN_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1) {
      throw ConfigError(std::string("DISN_THREADS must be a positive integer, got '") + env + "'");
    }
    n = std::min(n, static_cast<std::size_t>(v));
  }
  return n;
}

/// Scores every trial against one embedding per utterance. The result is
/// independent of the worker count.
inline ScoreSet score_trials(const EmbeddingStore& store, std::span<const Trial> trials,
                             std::size_t threads = scoring_threads()) {
  for (const auto& t : trials) {
    for (const auto* id : {&t.enroll, &t.test}) {
      if (!store.contains(*id)) throw ProtocolError("trial utterance '" + *id + "' has no embedding");
    }
  }
  std::vector<double> scores(trials.size());
  std::vector<std::string> errors(threads);
  auto work = [&](std::size_t worker) {
    try {
      for (std::size_t i = worker; i < trials.size(); i += threads) {
        const NamedVector a{trials[i].enroll, store.get(trials[i].enroll)};
        const NamedVector b{trials[i].test, store.get(trials[i].test)};
        scores[i] = score_trial(std::span(&a, 1), std::span(&b, 1));
      }
    } catch (const std::exception& e) {
      errors[worker] = e.what();
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, trials.size()));
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w) pool.emplace_back(work, w);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw ScoringError(e);
  }
  ScoreSet out;
  for (std::size_t i = 0; i < trials.size(); ++i) out.add(scores[i], trials[i].target);
  return out;
}

/// Balanced trial list: targets pair same-speaker utterances from different
/// sessions, nontargets pair utterances of different speakers.
inline std::vector<Trial> build_mismatch_trials(std::span<const UtteranceMeta> meta, Rng& rng,
                                                std::size_t n_trials) {
  validate_sessions(meta);
  std::map<std::string, std::vector<std::size_t>> by_speaker;
  for (std::size_t i = 0; i < meta.size(); ++i) by_speaker[meta[i].speaker_id].push_back(i);

  std::vector<const std::vector<std::size_t>*> cross;  // speakers with >= 2 sessions
  std::vector<const std::vector<std::size_t>*> all;
  for (const auto& [spk, utts] : by_speaker) {
    all.push_back(&utts);
    for (std::size_t u : utts) {
      if (meta[u].session_id != meta[utts.front()].session_id) {
        cross.push_back(&utts);
        break;
      }
    }
  }
  if (cross.empty()) {
    throw ProtocolError("no speaker has utterances from two different sessions");
  }
  if (all.size() < 2) throw ProtocolError("nontarget trials need at least two speakers");
  if (n_trials < 2) throw ProtocolError("trial count must be at least 2");

  std::vector<Trial> out;
  const std::size_t n_target = n_trials / 2;
  while (out.size() < n_target) {
    const auto& utts = *cross[uniform_index(rng, cross.size())];
    const std::size_t a = utts[uniform_index(rng, utts.size())];
    std::vector<std::size_t> other;
    for (std::size_t u : utts) {
      if (meta[u].session_id != meta[a].session_id) other.push_back(u);
    }
    if (other.empty()) continue;  // a's session is the only one left; redraw
    const std::size_t b = other[uniform_index(rng, other.size())];
    out.push_back({true, meta[a].utt_id, meta[b].utt_id});
  }
  for (std::size_t t = n_target; t < n_trials; ++t) {
    const std::size_t s1 = uniform_index(rng, all.size());
    std::size_t s2 = uniform_index(rng, all.size() - 1);
    if (s2 >= s1) ++s2;
    const auto& u1 = *all[s1];
    const auto& u2 = *all[s2];
    out.push_back({false, meta[u1[uniform_index(rng, u1.size())]].utt_id,
                   meta[u2[uniform_index(rng, u2.size())]].utt_id});
  }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

/// Text format: one trial per line, "label enroll_id test_id", label 1 or 0.
inline std::string serialize_trials(std::span<const Trial> trials) {
  std::string out;
  for (const auto& t : trials) {
    out += t.target ? "1 " : "0 ";
    out += t.enroll;
    out += ' ';
    out += t.test;
    out += '\n';
  }
  return out;
}

inline std::vector<Trial> parse_trials(const std::string& text) {
  std::vector<Trial> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream fields(line);
    std::string label, a, b, extra;
    if (!(fields >> label >> a >> b) || (fields >> extra) || (label != "0" && label != "1")) {
      throw FormatError("trial list line " + std::to_string(lineno) +
                        ": expected \"<0|1> enroll_id test_id\"");
    }
    out.push_back({label == "1", a, b});
  }
  return out;
}

inline void save_trials(const std::filesystem::path& path, std::span<const Trial> trials) {
  detail::write_file_atomic(path, serialize_trials(trials));
}

inline std::vector<Trial> load_trials(const std::filesystem::path& path) {
  return parse_trials(detail::read_file(path));
}

}  // namespace disn
