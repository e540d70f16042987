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

// Utterance metadata and triplet construction. A triplet is three utterances
// of one speaker: u1 and u2 from the same session with the same augmentation
// tag, u3 from another session with a different tag.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "disn/embedding_io.hpp"
#include "disn/error.hpp"
#include "disn/framework.hpp"
#include "disn/rng.hpp"

namespace disn {

struct UtteranceMeta {
  std::string utt_id;
  std::string speaker_id;
  std::string session_id;
  std::string augmentation_tag;

  friend bool operator==(const UtteranceMeta&, const UtteranceMeta&) = default;
};

/// Indices into a metadata list.
struct TripletIndex {
  std::size_t u1 = 0, u2 = 0, u3 = 0;
  friend bool operator==(const TripletIndex&, const TripletIndex&) = default;
};

struct TripletSet {
  std::vector<TripletIndex> triplets;
  std::vector<std::string> skipped_speakers;  // fewer than 2 sessions
  std::vector<std::string> skipped_sessions;  // no same-tag pair or no valid third
};

/// Throws if a session id appears under more than one speaker.
inline void validate_sessions(std::span<const UtteranceMeta> meta) {
  std::map<std::string, std::string> owner;
  for (const auto& m : meta) {
    auto [it, fresh] = owner.emplace(m.session_id, m.speaker_id);
    if (!fresh && it->second != m.speaker_id) {
      throw DatasetError("session '" + m.session_id + "' belongs to both speaker '" +
                         it->second + "' and '" + m.speaker_id + "'");
    }
  }
}

/// True when the triplet satisfies every structural constraint.
inline bool triplet_is_valid(std::span<const UtteranceMeta> meta, const TripletIndex& t) {
  const auto &a = meta[t.u1], &b = meta[t.u2], &c = meta[t.u3];
  return t.u1 != t.u2 && a.speaker_id == b.speaker_id && a.speaker_id == c.speaker_id &&
         a.session_id == b.session_id && a.session_id != c.session_id &&
         a.augmentation_tag == b.augmentation_tag &&
         a.augmentation_tag != c.augmentation_tag;
}

/// One triplet per eligible (speaker, session), in shuffled order.
inline TripletSet build_triplets(std::span<const UtteranceMeta> meta, Rng& rng) {
  validate_sessions(meta);
  // speaker -> session -> tag -> utterance indices (ordered for determinism)
  std::map<std::string, std::map<std::string, std::map<std::string, std::vector<std::size_t>>>>
      tree;
  for (std::size_t i = 0; i < meta.size(); ++i) {
    tree[meta[i].speaker_id][meta[i].session_id][meta[i].augmentation_tag].push_back(i);
  }

  TripletSet out;
  for (const auto& [speaker, sessions] : tree) {
    if (sessions.size() < 2) {
      out.skipped_speakers.push_back(speaker);
      continue;
    }
    for (const auto& [session, tags] : sessions) {
      // A tag qualifies when it has a same-session pair and some other
      // session of the speaker offers a differently tagged third.
      using TagEntry = std::pair<const std::string, std::vector<std::size_t>>;
      std::vector<std::pair<const TagEntry*, std::vector<std::size_t>>> pairable;
      for (const auto& kv : tags) {
        if (kv.second.size() < 2) continue;
        std::vector<std::size_t> thirds;
        for (const auto& [other, other_tags] : sessions) {
          if (other == session) continue;
          for (const auto& [otag, ous] : other_tags) {
            if (otag != kv.first) thirds.insert(thirds.end(), ous.begin(), ous.end());
          }
        }
        if (!thirds.empty()) pairable.emplace_back(&kv, std::move(thirds));
      }
      if (pairable.empty()) {
        out.skipped_sessions.push_back(session);
        continue;
      }
      const auto& [entry, thirds] = pairable[uniform_index(rng, pairable.size())];
      const auto& utts = entry->second;
      const std::size_t i1 = uniform_index(rng, utts.size());
      std::size_t i2 = uniform_index(rng, utts.size() - 1);
      if (i2 >= i1) ++i2;
      out.triplets.push_back({utts[i1], utts[i2], thirds[uniform_index(rng, thirds.size())]});
    }
  }
  if (out.triplets.empty()) {
    throw EmptyDatasetError("no eligible speakers: every speaker needs two sessions, a "
                            "same-tag utterance pair and a differently tagged third");
  }
  std::shuffle(out.triplets.begin(), out.triplets.end(), rng);
  return out;
}

/// Sorted unique speaker ids; the position is the class index.
inline std::vector<std::string> speaker_classes(std::span<const UtteranceMeta> meta) {
  std::vector<std::string> ids;
  for (const auto& m : meta) ids.push_back(m.speaker_id);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

/// Embeddings plus their metadata, aligned by utterance id.
struct Dataset {
  EmbeddingStore embeddings;
  std::vector<UtteranceMeta> meta;

  void validate() const {
    if (meta.empty()) throw EmptyDatasetError("dataset has no utterances");
    for (const auto& m : meta) {
      if (!embeddings.contains(m.utt_id)) {
        throw DatasetError("metadata utterance '" + m.utt_id + "' has no embedding");
      }
    }
    validate_sessions(meta);
  }
};

/// Assembles the row batch for a group of triplets (rows u1, u2, u3 per triplet).
template <typename Real>
Batch<Real> make_batch(const Dataset& ds, std::span<const TripletIndex> triplets,
                       const std::vector<std::string>& classes) {
  const std::size_t dim = ds.embeddings.dim();
  Batch<Real> b{Tensor<Real>(3 * triplets.size(), dim), {}};
  b.labels.reserve(triplets.size());
  std::size_t row = 0;
  for (const auto& t : triplets) {
    for (std::size_t u : {t.u1, t.u2, t.u3}) {
      auto v = ds.embeddings.get(ds.meta[u].utt_id);
      auto dst = b.e.row(row++);
      for (std::size_t k = 0; k < dim; ++k) dst[k] = static_cast<Real>(v[k]);
    }
    auto it = std::lower_bound(classes.begin(), classes.end(), ds.meta[t.u1].speaker_id);
    if (it == classes.end() || *it != ds.meta[t.u1].speaker_id) {
      throw DatasetError("speaker '" + ds.meta[t.u1].speaker_id + "' has no class index");
    }
    b.labels.push_back(static_cast<std::size_t>(it - classes.begin()));
  }
  return b;
}

// ---------------------------------------------------------------------------
// Metadata JSON-lines
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const UtteranceMeta& m) {
  return {{"utt_id", m.utt_id},
          {"speaker_id", m.speaker_id},
          {"session_id", m.session_id},
          {"augmentation_tag", m.augmentation_tag}};
}

inline std::string serialize_metadata(std::span<const UtteranceMeta> meta) {
  std::string out;
  for (const auto& m : meta) {
    out += to_json(m).dump();
    out += '\n';
  }
  return out;
}

inline std::vector<UtteranceMeta> parse_metadata(const std::string& text) {
  std::vector<UtteranceMeta> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      out.push_back({j.at("utt_id").get<std::string>(), j.at("speaker_id").get<std::string>(),
                     j.at("session_id").get<std::string>(),
                     j.at("augmentation_tag").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("metadata line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline void save_metadata(const std::filesystem::path& path, std::span<const UtteranceMeta> meta) {
  detail::write_file_atomic(path, serialize_metadata(meta));
}

inline std::vector<UtteranceMeta> load_metadata(const std::filesystem::path& path) {
  return parse_metadata(detail::read_file(path));
}

}  // namespace disn
