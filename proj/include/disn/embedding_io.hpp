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

// Embedding store and its on-disk container.
//
//   "EMB1" | u32 dim | u32 count | count x (u16 id_len | id bytes | dim x f32)
//
// All integers and floats little-endian.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "disn/error.hpp"

namespace disn {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

class EmbeddingStore {
 public:
  EmbeddingStore() = default;
  explicit EmbeddingStore(std::size_t dim) : dim_(dim) {
    if (dim == 0) throw ShapeError("embedding dimension must be positive");
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return ids_.size(); }
  const std::vector<std::string>& ids() const noexcept { return ids_; }

  void add(const std::string& id, std::span<const float> v) {
    if (v.size() != dim_) {
      throw ShapeError("embedding '" + id + "' has " + std::to_string(v.size()) +
                       " dims, store holds " + std::to_string(dim_));
    }
    if (id.size() > 0xFFFF) throw ValidationError("utterance id longer than 65535 bytes");
    if (!index_.emplace(id, ids_.size()).second) {
      throw DatasetError("duplicate utterance id '" + id + "'");
    }
    ids_.push_back(id);
    data_.insert(data_.end(), v.begin(), v.end());
  }

  bool contains(const std::string& id) const { return index_.count(id) != 0; }

  std::size_t index_of(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw DatasetError("unknown utterance id '" + id + "'");
    return it->second;
  }

  std::span<const float> at(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }
  std::span<const float> get(const std::string& id) const { return at(index_of(id)); }

  friend bool operator==(const EmbeddingStore& a, const EmbeddingStore& b) {
    return a.dim_ == b.dim_ && a.ids_ == b.ids_ && a.data_ == b.data_;
  }

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<float> data_;
  std::unordered_map<std::string, std::size_t> index_;
};

namespace detail {

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

// Cursor over an in-memory file image.
struct Reader {
  const std::string& buf;
  std::size_t pos = 0;

  bool has(std::size_t n) const { return pos + n <= buf.size(); }

  template <typename T>
  T get() {
    T v;
    std::memcpy(&v, buf.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return std::string(std::istreambuf_iterator<char>(in), {});
}

/// Writes to a sibling temp file then renames over the target.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename '" + tmp.string() + "': " + ec.message());
}

}  // namespace detail

inline std::string serialize_embeddings(const EmbeddingStore& store) {
  std::string out = "EMB1";
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(store.dim()));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(store.size()));
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& id = store.ids()[i];
    detail::put<std::uint16_t>(out, static_cast<std::uint16_t>(id.size()));
    out += id;
    for (float v : store.at(i)) detail::put<float>(out, v);
  }
  return out;
}

/// Parses an EMB1 image. When `expected_dim` is given the header must match.
inline EmbeddingStore parse_embeddings(const std::string& buf,
                                       std::optional<std::size_t> expected_dim = {}) {
  detail::Reader rd{buf};
  if (!rd.has(12) || buf.compare(0, 4, "EMB1") != 0) {
    throw HeaderError("embedding file: missing EMB1 magic or short header");
  }
  rd.pos = 4;
  const auto dim = rd.get<std::uint32_t>();
  const auto count = rd.get<std::uint32_t>();
  if (dim == 0) throw HeaderError("embedding file: header declares dimension 0");
  if (expected_dim && *expected_dim != dim) {
    throw DimensionMismatchError("embedding file declares D = " + std::to_string(dim) +
                                 " but configuration expects " +
                                 std::to_string(*expected_dim));
  }
  EmbeddingStore store(dim);
  std::vector<float> v(dim);
  for (std::uint32_t r = 0; r < count; ++r) {
    auto truncated = [&] {
      return TruncatedError("embedding file truncated in record " + std::to_string(r), r);
    };
    if (!rd.has(2)) throw truncated();
    const auto len = rd.get<std::uint16_t>();
    if (!rd.has(len)) throw truncated();
    std::string id = buf.substr(rd.pos, len);
    rd.pos += len;
    if (!rd.has(sizeof(float) * dim)) throw truncated();
    for (std::uint32_t k = 0; k < dim; ++k) v[k] = rd.get<float>();
    store.add(id, v);
  }
  if (rd.pos != buf.size()) {
    throw HeaderError("embedding file: " + std::to_string(buf.size() - rd.pos) +
                      " trailing bytes after " + std::to_string(count) + " records");
  }
  return store;
}

inline void save_embeddings(const std::filesystem::path& path, const EmbeddingStore& store) {
  detail::write_file_atomic(path, serialize_embeddings(store));
}

inline EmbeddingStore load_embeddings(const std::filesystem::path& path,
                                      std::optional<std::size_t> expected_dim = {}) {
  return parse_embeddings(detail::read_file(path), expected_dim);
}

}  // namespace disn
