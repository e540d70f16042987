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

// Checkpoint container:
//
//   "DISN" | u32 version | u32 header_len | JSON header | tensor blocks
//
// The header holds the model and train configs, epoch, optimizer counters,
// sampler state and a manifest of {name, rows, cols, offset, hash} for each
// tensor. Blocks are little-endian f32, offsets are bytes from the first
// block. Each parameter contributes its value, "<name>.m1" and "<name>.m2";
// BN running statistics are stored as buffers.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "disn/config.hpp"
#include "disn/embedding_io.hpp"
#include "disn/error.hpp"
#include "disn/rng.hpp"
#include "disn/trainer.hpp"

namespace disn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct StoredTensor {
  std::size_t rows = 0, cols = 0;
  std::vector<float> data;
};

/// Decoded checkpoint contents, independent of the training precision.
struct CheckpointData {
  ModelConfig model;
  nlohmann::json train;  // informational copy of the training config
  std::size_t epoch = 0;
  AdamState main_opt, adv_opt;
  std::string sampler_state;
  std::map<std::string, StoredTensor> tensors;
};

namespace detail {

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline nlohmann::json to_json(const AdamState& s) {
  return {{"beta1", s.beta1}, {"beta2", s.beta2}, {"eps", s.eps}, {"step", s.step}};
}

inline AdamState adam_from_json(const nlohmann::json& j) {
  AdamState s;
  s.beta1 = j.at("beta1").get<double>();
  s.beta2 = j.at("beta2").get<double>();
  s.eps = j.at("eps").get<double>();
  s.step = j.at("step").get<std::uint64_t>();
  return s;
}

template <typename Real>
StoredTensor store(const Tensor<Real>& t) {
  StoredTensor s{t.rows(), t.cols(), std::vector<float>(t.flat().size())};
  for (std::size_t i = 0; i < s.data.size(); ++i) s.data[i] = static_cast<float>(t.flat()[i]);
  return s;
}

template <typename Real>
void restore(Tensor<Real>& t, const StoredTensor& s, const std::string& name) {
  if (s.rows != t.rows() || s.cols != t.cols()) {
    throw ConfigMismatchError("tensor '" + name + "' is " + std::to_string(s.rows) + "x" +
                              std::to_string(s.cols) + " in the checkpoint, model expects " +
                              t.shape_string());
  }
  for (std::size_t i = 0; i < s.data.size(); ++i) t.flat()[i] = static_cast<Real>(s.data[i]);
}

}  // namespace detail

template <typename Real>
CheckpointData capture(TrainerState<Real>& st, const nlohmann::json& train_cfg = {}) {
  CheckpointData cd;
  cd.model = st.model.cfg;
  cd.train = train_cfg;
  cd.epoch = st.epoch;
  cd.main_opt = st.main_opt;
  cd.adv_opt = st.adv_opt;
  cd.sampler_state = rng_state(st.sampler_rng);
  st.model.visit_params([&](const std::string& name, Param<Real>& p) {
    cd.tensors[name] = detail::store(p.value);
    cd.tensors[name + ".m1"] = detail::store(p.m1);
    cd.tensors[name + ".m2"] = detail::store(p.m2);
  });
  st.model.visit_buffers([&](const std::string& name, Tensor<Real>& t) {
    cd.tensors[name] = detail::store(t);
  });
  return cd;
}

/// Rebuilds trainer state; every tensor the model owns must be present.
template <typename Real>
TrainerState<Real> restore_trainer(const CheckpointData& cd) {
  TrainerState<Real> st{Framework<Real>(cd.model), cd.main_opt, cd.adv_opt, cd.epoch,
                        rng_from_state(cd.sampler_state)};
  auto pick = [&](const std::string& name) -> const StoredTensor& {
    auto it = cd.tensors.find(name);
    if (it == cd.tensors.end()) throw MissingTensorError("checkpoint lacks tensor '" + name + "'");
    return it->second;
  };
  st.model.visit_params([&](const std::string& name, Param<Real>& p) {
    detail::restore(p.value, pick(name), name);
    detail::restore(p.m1, pick(name + ".m1"), name + ".m1");
    detail::restore(p.m2, pick(name + ".m2"), name + ".m2");
  });
  st.model.visit_buffers([&](const std::string& name, Tensor<Real>& t) {
    detail::restore(t, pick(name), name);
  });
  return st;
}

inline std::string serialize_checkpoint(const CheckpointData& cd) {
  std::string blocks;
  nlohmann::json manifest = nlohmann::json::array();
  for (const auto& [name, t] : cd.tensors) {
    const std::size_t offset = blocks.size();
    for (float v : t.data) detail::put(blocks, v);
    const std::string_view bytes(blocks.data() + offset, blocks.size() - offset);
    manifest.push_back({{"name", name},
                        {"rows", t.rows},
                        {"cols", t.cols},
                        {"offset", offset},
                        {"hash", detail::hex64(fnv1a64(bytes))}});
  }
  nlohmann::json header = {{"model", to_json(cd.model)},
                           {"train", cd.train},
                           {"epoch", cd.epoch},
                           {"adam_main", detail::to_json(cd.main_opt)},
                           {"adam_adversary", detail::to_json(cd.adv_opt)},
                           {"sampler_state", cd.sampler_state},
                           {"tensors", manifest}};
  const std::string hdr = header.dump();
  std::string out = "DISN";
  detail::put(out, kCheckpointVersion);
  detail::put(out, static_cast<std::uint32_t>(hdr.size()));
  out += hdr;
  out += blocks;
  return out;
}

/// Parses a checkpoint image. When `expected` is given, the stored model
/// configuration must equal it.
inline CheckpointData parse_checkpoint(const std::string& buf,
                                       const std::optional<ModelConfig>& expected = std::nullopt) {
  if (buf.size() < 12 || buf.compare(0, 4, "DISN") != 0) {
    throw HeaderError("not a checkpoint file (bad magic)");
  }
  detail::Reader r{buf, 4};
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                       std::to_string(kCheckpointVersion) + ")");
  }
  const auto hlen = r.get<std::uint32_t>();
  if (!r.has(hlen)) throw TruncatedError("checkpoint header is truncated", 0);
  const auto header = nlohmann::json::parse(buf.substr(r.pos, hlen), nullptr, false);
  if (header.is_discarded()) throw HeaderError("checkpoint header is not valid JSON");
  const std::size_t base = r.pos + hlen;

  CheckpointData cd;
  try {
    cd.model = model_config_from_json(header.at("model"));
    cd.train = header.at("train");
    cd.epoch = header.at("epoch").get<std::size_t>();
    cd.main_opt = detail::adam_from_json(header.at("adam_main"));
    cd.adv_opt = detail::adam_from_json(header.at("adam_adversary"));
    cd.sampler_state = header.at("sampler_state").get<std::string>();
    if (expected && !(cd.model == *expected)) {
      throw ConfigMismatchError("checkpoint model config " + to_json(cd.model).dump() +
                                " does not match the configured " + to_json(*expected).dump());
    }
    std::size_t index = 0;
    for (const auto& m : header.at("tensors")) {
      const auto name = m.at("name").get<std::string>();
      StoredTensor t{m.at("rows").get<std::size_t>(), m.at("cols").get<std::size_t>(), {}};
      const auto offset = m.at("offset").get<std::size_t>();
      const std::size_t nbytes = t.rows * t.cols * sizeof(float);
      if (base + offset + nbytes > buf.size()) {
        throw TruncatedError("tensor block '" + name + "' extends past end of file", index);
      }
      const std::string_view bytes(buf.data() + base + offset, nbytes);
      if (detail::hex64(fnv1a64(bytes)) != m.at("hash").get<std::string>()) {
        throw CorruptTensorError("tensor block '" + name + "' fails its checksum");
      }
      detail::Reader tr{buf, base + offset};
      t.data.resize(t.rows * t.cols);
      for (auto& v : t.data) v = tr.get<float>();
      cd.tensors.emplace(name, std::move(t));
      ++index;
    }
  } catch (const nlohmann::json::exception& e) {
    throw HeaderError(std::string("checkpoint header: ") + e.what());
  }
  return cd;
}

inline void save_checkpoint(const std::filesystem::path& path, const CheckpointData& cd) {
  detail::write_file_atomic(path, serialize_checkpoint(cd));
}

inline CheckpointData load_checkpoint(const std::filesystem::path& path,
                                      const std::optional<ModelConfig>& expected = std::nullopt) {
  return parse_checkpoint(detail::read_file(path), expected);
}

}  // namespace disn
