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

// Auto-encoder disentangler: BN -> FC encoder into a bottleneck code, split
// into L1-normalized speaker/environment halves, speaker-code swap inside
// each triplet, BN -> FC decoder and L1 reconstruction loss.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "disn/layers.hpp"

namespace disn {

struct DisentanglerConfig {
  std::size_t input_dim = 64;
  std::size_t code_dim = 32;

  std::size_t spk_dim() const noexcept { return code_dim / 2; }
  std::size_t env_dim() const noexcept { return code_dim - spk_dim(); }

  void validate() const {
    if (input_dim < 1) throw ConfigError("input_dim must be positive");
    if (code_dim < 2 || code_dim % 2 != 0) {
      throw ConfigError("code_dim must be a positive even number, got " +
                        std::to_string(code_dim));
    }
  }

  /// Non-fatal configuration remarks.
  std::vector<std::string> warnings() const {
    std::vector<std::string> w;
    if (input_dim < code_dim) {
      w.push_back("code_dim " + std::to_string(code_dim) + " exceeds input_dim " +
                  std::to_string(input_dim) + "; the bottleneck does not compress");
    }
    return w;
  }

  friend bool operator==(const DisentanglerConfig&, const DisentanglerConfig&) = default;
};

template <typename Real>
struct AutoEncoder {
  BnLayer<Real> enc_bn;
  FcLayer<Real> enc_fc;
  BnLayer<Real> dec_bn;
  FcLayer<Real> dec_fc;

  AutoEncoder() = default;

  explicit AutoEncoder(const DisentanglerConfig& cfg)
      : enc_bn(cfg.input_dim),
        enc_fc(cfg.input_dim, cfg.code_dim),
        dec_bn(cfg.code_dim),
        dec_fc(cfg.code_dim, cfg.input_dim) {
    cfg.validate();
  }

  template <typename Rng>
  void init(Rng& rng) {
    enc_fc.init_uniform(rng);
    dec_fc.init_uniform(rng);
  }

  std::size_t input_dim() const noexcept { return enc_fc.in_dim(); }
  std::size_t code_dim() const noexcept { return enc_fc.out_dim(); }

  std::vector<Param<Real>*> params() {
    return {&enc_bn.gamma, &enc_bn.beta, &enc_fc.weight, &enc_fc.bias,
            &dec_bn.gamma, &dec_bn.beta, &dec_fc.weight, &dec_fc.bias};
  }
};

/// Speaker and environment halves of the code, each row L1-normalized.
template <typename Real>
struct CodeBatch {
  Tensor<Real> spk;
  Tensor<Real> env;

  std::size_t rows() const noexcept { return spk.rows(); }
};

// ---------------------------------------------------------------------------

template <typename Real>
struct EncodeCache {
  BnCache<Real> bn;
  FcCache<Real> fc;
};

template <typename Real>
std::pair<Tensor<Real>, EncodeCache<Real>> encode(AutoEncoder<Real>& ae,
                                                  const Tensor<Real>& e, Mode mode) {
  if (e.cols() != ae.input_dim()) {
    throw ShapeError("encode: embedding has " + std::to_string(e.cols()) +
                     " dims, model expects " + std::to_string(ae.input_dim()));
  }
  auto [h, bn_cache] = ae.enc_bn.forward(e, mode);
  auto [z, fc_cache] = ae.enc_fc.forward(h);
  return {std::move(z), EncodeCache<Real>{std::move(bn_cache), std::move(fc_cache)}};
}

template <typename Real>
Tensor<Real> encode_backward(AutoEncoder<Real>& ae, const EncodeCache<Real>& cache,
                             const Tensor<Real>& dz) {
  return ae.enc_bn.backward(cache.bn, ae.enc_fc.backward(cache.fc, dz));
}

template <typename Real>
struct SplitCache {
  L1NormCache<Real> spk;
  L1NormCache<Real> env;
};

/// First half of the columns becomes the speaker code, the rest the
/// environment code; each half is L1-normalized on its own.
template <typename Real>
std::pair<CodeBatch<Real>, SplitCache<Real>> split_codes(const Tensor<Real>& z) {
  if (z.cols() < 2 || z.cols() % 2 != 0) {
    throw ConfigError("split_codes: code width must be even, got " +
                      std::to_string(z.cols()));
  }
  const std::size_t d = z.cols() / 2;
  auto [spk, spk_cache] = l1_normalize_forward(column_slice(z, 0, d));
  auto [env, env_cache] = l1_normalize_forward(column_slice(z, d, z.cols() - d));
  return {CodeBatch<Real>{std::move(spk), std::move(env)},
          SplitCache<Real>{std::move(spk_cache), std::move(env_cache)}};
}

template <typename Real>
Tensor<Real> split_codes_backward(const SplitCache<Real>& cache, const Tensor<Real>& dspk,
                                  const Tensor<Real>& denv) {
  return concat_columns(l1_normalize_backward(cache.spk, dspk),
                        l1_normalize_backward(cache.env, denv));
}

inline void require_triplet_rows(std::size_t rows, const char* where) {
  if (rows == 0 || rows % 3 != 0) {
    throw BatchStructureError(std::string(where) + ": row count " + std::to_string(rows) +
                              " is not a positive multiple of 3");
  }
}

/// Exchanges rows 3i+1 and 3i+2 for every triplet i. Self-inverse, so it is
/// also its own backward.
template <typename Real>
Tensor<Real> swap_triplet_rows(const Tensor<Real>& x) {
  require_triplet_rows(x.rows(), "swap_speaker_codes");
  Tensor<Real> out = x;
  for (std::size_t t = 0; t < x.rows() / 3; ++t) {
    auto a = out.row(3 * t + 1);
    auto b = out.row(3 * t + 2);
    std::swap_ranges(a.begin(), a.end(), b.begin());
  }
  return out;
}

template <typename Real>
CodeBatch<Real> swap_speaker_codes(const CodeBatch<Real>& codes) {
  if (codes.spk.rows() != codes.env.rows()) {
    throw ShapeError("swap_speaker_codes: spk/env row counts differ");
  }
  return CodeBatch<Real>{swap_triplet_rows(codes.spk), codes.env};
}

template <typename Real>
struct DecodeCache {
  std::size_t spk_cols = 0;
  BnCache<Real> bn;
  FcCache<Real> fc;
};

template <typename Real>
std::pair<Tensor<Real>, DecodeCache<Real>> decode(AutoEncoder<Real>& ae,
                                                  const CodeBatch<Real>& codes, Mode mode) {
  if (codes.spk.cols() + codes.env.cols() != ae.code_dim()) {
    throw ShapeError("decode: code halves sum to " +
                     std::to_string(codes.spk.cols() + codes.env.cols()) +
                     ", model expects " + std::to_string(ae.code_dim()));
  }
  auto [h, bn_cache] = ae.dec_bn.forward(concat_columns(codes.spk, codes.env), mode);
  auto [out, fc_cache] = ae.dec_fc.forward(h);
  return {std::move(out),
          DecodeCache<Real>{codes.spk.cols(), std::move(bn_cache), std::move(fc_cache)}};
}

/// Returns gradients for the (spk, env) halves that were fed to decode.
template <typename Real>
std::pair<Tensor<Real>, Tensor<Real>> decode_backward(AutoEncoder<Real>& ae,
                                                      const DecodeCache<Real>& cache,
                                                      const Tensor<Real>& dout) {
  Tensor<Real> dcat = ae.dec_bn.backward(cache.bn, ae.dec_fc.backward(cache.fc, dout));
  return {column_slice(dcat, 0, cache.spk_cols),
          column_slice(dcat, cache.spk_cols, dcat.cols() - cache.spk_cols)};
}

/// Per-triplet sum of |e - e_hat| over members, averaged over triplets.
template <typename Real>
Real recons_loss(const Tensor<Real>& e, const Tensor<Real>& e_hat) {
  e.require_shape(e_hat, "recons_loss");
  require_triplet_rows(e.rows(), "recons_loss");
  Real s = 0;
  for (std::size_t i = 0; i < e.size(); ++i) s += std::abs(e[i] - e_hat[i]);
  return s / static_cast<Real>(e.rows() / 3);
}

/// Gradient of recons_loss with respect to e_hat, scaled by `seed`. The
/// subgradient at zero difference is 0.
template <typename Real>
Tensor<Real> recons_loss_backward(const Tensor<Real>& e, const Tensor<Real>& e_hat,
                                  Real seed = Real(1)) {
  e.require_shape(e_hat, "recons_loss_backward");
  require_triplet_rows(e.rows(), "recons_loss_backward");
  const Real k = seed / static_cast<Real>(e.rows() / 3);
  Tensor<Real> g(e.rows(), e.cols());
  for (std::size_t i = 0; i < e.size(); ++i) {
    const Real d = e_hat[i] - e[i];
    g[i] = d > Real(0) ? k : (d < Real(0) ? -k : Real(0));
  }
  return g;
}

}  // namespace disn
