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

// Synthetic factor world with known speaker and environment factors:
//
//   e = W_s s_speaker + W_e (v_session + a_session) + noise_sigma * eps
//
// s ~ N(0, I_ds) per speaker, v ~ N(0, I_de) per session, a ~ aug_sigma *
// N(0, I_de) is the augmentation perturbation shared by every utterance of a
// session (all of which carry the session's augmentation tag).

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "disn/rng.hpp"
#include "disn/sampler.hpp"

namespace disn {

struct SynthWorld {
  std::size_t n_speakers = 50;
  std::size_t sessions_per_speaker = 8;
  std::size_t utterances_per_session = 4;
  std::size_t speaker_factor_dim = 16;
  std::size_t env_factor_dim = 16;
  std::size_t embedding_dim = 64;
  std::size_t n_aug_tags = 4;
  double noise_sigma = 0.1;
  double aug_sigma = 0.5;
  std::uint64_t seed = 0;

  void validate() const {
    if (!n_speakers || !sessions_per_speaker || !utterances_per_session ||
        !speaker_factor_dim || !env_factor_dim || !embedding_dim || !n_aug_tags) {
      throw ConfigError("synthetic world dimensions and counts must be positive");
    }
    if (!(noise_sigma >= 0) || !(aug_sigma >= 0)) {
      throw ConfigError("noise_sigma and aug_sigma must be non-negative");
    }
  }
};

struct SessionTruth {
  std::string speaker_id;
  std::string tag;
  std::vector<double> factor;        // v
  std::vector<double> perturbation;  // a
};

struct GroundTruth {
  std::vector<std::vector<double>> mix_speaker;  // D x ds
  std::vector<std::vector<double>> mix_env;      // D x de
  std::map<std::string, std::vector<double>> speakers;
  std::map<std::string, SessionTruth> sessions;
};

struct SynthData {
  Dataset dataset;
  GroundTruth truth;
};

inline std::string synth_speaker_id(std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "spk%03zu", k);
  return buf;
}

inline std::string synth_session_id(std::size_t k, std::size_t m) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "spk%03zu-ses%02zu", k, m);
  return buf;
}

/// W_s s + W_e (v + a) for one session, before observation noise.
inline std::vector<double> noiseless_embedding(const GroundTruth& gt, const std::string& speaker,
                                               const std::string& session) {
  const auto& s = gt.speakers.at(speaker);
  const auto& st = gt.sessions.at(session);
  std::vector<double> e(gt.mix_speaker.size(), 0.0);
  for (std::size_t k = 0; k < e.size(); ++k) {
    double acc = 0;
    for (std::size_t j = 0; j < s.size(); ++j) acc += gt.mix_speaker[k][j] * s[j];
    for (std::size_t j = 0; j < st.factor.size(); ++j) {
      acc += gt.mix_env[k][j] * (st.factor[j] + st.perturbation[j]);
    }
    e[k] = acc;
  }
  return e;
}

inline SynthData synth_generate(const SynthWorld& w) {
  w.validate();
  Rng rng(w.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto draw = [&](std::size_t n, double scale) {
    std::vector<double> v(n);
    for (auto& x : v) x = scale * normal(rng);
    return v;
  };

  SynthData out;
  GroundTruth& gt = out.truth;
  const double ws = 1.0 / std::sqrt(static_cast<double>(w.speaker_factor_dim));
  const double we = 1.0 / std::sqrt(static_cast<double>(w.env_factor_dim));
  for (std::size_t k = 0; k < w.embedding_dim; ++k) gt.mix_speaker.push_back(draw(w.speaker_factor_dim, ws));
  for (std::size_t k = 0; k < w.embedding_dim; ++k) gt.mix_env.push_back(draw(w.env_factor_dim, we));

  out.dataset.embeddings = EmbeddingStore(w.embedding_dim);
  std::vector<float> buf(w.embedding_dim);
  for (std::size_t k = 0; k < w.n_speakers; ++k) {
    const std::string spk = synth_speaker_id(k);
    gt.speakers[spk] = draw(w.speaker_factor_dim, 1.0);
    for (std::size_t m = 0; m < w.sessions_per_speaker; ++m) {
      const std::string ses = synth_session_id(k, m);
      SessionTruth st;
      st.speaker_id = spk;
      st.tag = "aug" + std::to_string((k + m) % w.n_aug_tags);
      st.factor = draw(w.env_factor_dim, 1.0);
      st.perturbation = draw(w.env_factor_dim, w.aug_sigma);
      gt.sessions[ses] = st;
      const auto clean = noiseless_embedding(gt, spk, ses);
      for (std::size_t u = 0; u < w.utterances_per_session; ++u) {
        char uid[64];
        std::snprintf(uid, sizeof uid, "%s-utt%02zu", ses.c_str(), u);
        for (std::size_t d = 0; d < w.embedding_dim; ++d) {
          const double noise = w.noise_sigma > 0 ? w.noise_sigma * normal(rng) : 0.0;
          buf[d] = static_cast<float>(clean[d] + noise);
        }
        out.dataset.embeddings.add(uid, buf);
        out.dataset.meta.push_back({uid, spk, ses, st.tag});
      }
    }
  }
  return out;
}

inline nlohmann::json to_json(const GroundTruth& gt) {
  nlohmann::json j;
  j["mix_speaker"] = gt.mix_speaker;
  j["mix_env"] = gt.mix_env;
  j["speakers"] = gt.speakers;
  nlohmann::json ses = nlohmann::json::object();
  for (const auto& [id, st] : gt.sessions) {
    ses[id] = {{"speaker_id", st.speaker_id},
               {"augmentation_tag", st.tag},
               {"factor", st.factor},
               {"perturbation", st.perturbation}};
  }
  j["sessions"] = ses;
  return j;
}

inline GroundTruth ground_truth_from_json(const nlohmann::json& j) {
  GroundTruth gt;
  try {
    gt.mix_speaker = j.at("mix_speaker").get<std::vector<std::vector<double>>>();
    gt.mix_env = j.at("mix_env").get<std::vector<std::vector<double>>>();
    gt.speakers = j.at("speakers").get<std::map<std::string, std::vector<double>>>();
    for (const auto& [id, s] : j.at("sessions").items()) {
      gt.sessions[id] = {s.at("speaker_id").get<std::string>(),
                         s.at("augmentation_tag").get<std::string>(),
                         s.at("factor").get<std::vector<double>>(),
                         s.at("perturbation").get<std::vector<double>>()};
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("ground truth: ") + e.what());
  }
  return gt;
}

}  // namespace disn
