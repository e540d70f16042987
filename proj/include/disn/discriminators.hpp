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

// Speaker discriminator (softmax + angular prototypical), environment
// discriminators with the triplet margin loss, and the MAPC correlation
// penalty. All inputs are triplet-contiguous row batches: rows 3i, 3i+1,
// 3i+2 are members j = 1, 2, 3 of triplet i.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "disn/disentangler.hpp"
#include "disn/layers.hpp"

namespace disn {

struct LossWeights {
  double spk = 1.0;
  double recons = 1.0;
  double env = 1.0;
  double adv = 0.5;
  double corr = 1.0;
  double margin = 1.0;

  void validate() const {
    for (double v : {spk, recons, env, adv, corr, margin}) {
      if (!(v >= 0.0) || !std::isfinite(v)) {
        throw ConfigError("loss weights and margin must be finite and non-negative");
      }
    }
  }

  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

inline constexpr double kApScaleMin = 1e-6;
inline constexpr double kCosineNormEps = 1e-8;

namespace detail {

// Numerically stable log-softmax cross-entropy of one row; writes the
// softmax into `prob`.
template <typename Real>
Real softmax_xent(std::span<const Real> logits, std::size_t target, std::span<Real> prob) {
  Real mx = logits[0];
  for (Real v : logits) mx = std::max(mx, v);
  Real z = 0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    prob[k] = std::exp(logits[k] - mx);
    z += prob[k];
  }
  for (auto& p : prob) p /= z;
  return std::log(z) + mx - logits[target];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Speaker discriminator
// ---------------------------------------------------------------------------

template <typename Real>
struct SpeakerDisc {
  FcLayer<Real> f;           // spk_dim -> n_speakers
  Param<Real> ap_scale;      // w, 1x1, kept > 0
  Param<Real> ap_offset;     // b, 1x1

  SpeakerDisc() = default;

  SpeakerDisc(std::size_t spk_dim, std::size_t n_speakers)
      : f(spk_dim, n_speakers),
        ap_scale(Tensor<Real>(1, 1, Real(10))),
        ap_offset(Tensor<Real>(1, 1, Real(-5))) {}

  template <typename Rng>
  void init(Rng& rng) {
    f.init_uniform(rng);
  }

  std::size_t n_classes() const noexcept { return f.out_dim(); }

  void clamp_scale() {
    ap_scale.value[0] = std::max(ap_scale.value[0], static_cast<Real>(kApScaleMin));
  }

  std::vector<Param<Real>*> params() {
    return {&f.weight, &f.bias, &ap_scale, &ap_offset};
  }
};

template <typename Real>
struct SpeakerLossCache {
  FcCache<Real> fc;
  Tensor<Real> ce_prob;            // 3B x K softmax
  std::vector<std::size_t> row_labels;
  Tensor<Real> query;              // B x d
  Tensor<Real> proto;              // B x d
  std::vector<Real> q_norm, c_norm;
  std::vector<bool> q_clamped, c_clamped;
  Tensor<Real> cos;                // B x B
  Tensor<Real> ap_prob;            // B x B softmax
};

struct SpeakerLossValue {
  double total = 0;  // ce + ap
  double ce = 0;
  double ap = 0;
};

/// Softmax cross-entropy on all 3B rows through f plus the angular
/// prototypical term (query j=1 against prototypes mean(j=2, j=3)).
template <typename Real>
std::pair<SpeakerLossValue, SpeakerLossCache<Real>> speaker_loss(
    const SpeakerDisc<Real>& disc, const Tensor<Real>& spk,
    const std::vector<std::size_t>& triplet_labels) {
  require_triplet_rows(spk.rows(), "speaker_loss");
  const std::size_t batch = spk.rows() / 3;
  const std::size_t d = spk.cols();
  if (triplet_labels.size() != batch) {
    throw ShapeError("speaker_loss: expected " + std::to_string(batch) +
                     " labels, got " + std::to_string(triplet_labels.size()));
  }
  if (batch < 2) {
    throw DegenerateBatchError("speaker_loss: angular prototypical term needs >= 2 "
                               "triplets, got " + std::to_string(batch));
  }
  for (auto l : triplet_labels) {
    if (l >= disc.n_classes()) {
      throw ShapeError("speaker_loss: label " + std::to_string(l) + " out of range");
    }
  }

  SpeakerLossCache<Real> cache;
  SpeakerLossValue val;

  auto [logits, fc_cache] = disc.f.forward(spk);
  cache.fc = std::move(fc_cache);
  cache.ce_prob = Tensor<Real>(spk.rows(), disc.n_classes());
  cache.row_labels.resize(spk.rows());
  Real ce = 0;
  for (std::size_t r = 0; r < spk.rows(); ++r) {
    cache.row_labels[r] = triplet_labels[r / 3];
    ce += detail::softmax_xent<Real>(logits.row(r), cache.row_labels[r],
                                     cache.ce_prob.row(r));
  }
  ce /= static_cast<Real>(spk.rows());

  cache.query = Tensor<Real>(batch, d);
  cache.proto = Tensor<Real>(batch, d);
  cache.q_norm.resize(batch);
  cache.c_norm.resize(batch);
  cache.q_clamped.resize(batch);
  cache.c_clamped.resize(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    Real qq = 0, cc = 0;
    for (std::size_t k = 0; k < d; ++k) {
      const Real q = spk(3 * i, k);
      const Real c = (spk(3 * i + 1, k) + spk(3 * i + 2, k)) / Real(2);
      cache.query(i, k) = q;
      cache.proto(i, k) = c;
      qq += q * q;
      cc += c * c;
    }
    const Real qn = std::sqrt(qq), cn = std::sqrt(cc);
    const Real floor = static_cast<Real>(kCosineNormEps);
    cache.q_clamped[i] = qn < floor;
    cache.c_clamped[i] = cn < floor;
    cache.q_norm[i] = std::max(qn, floor);
    cache.c_norm[i] = std::max(cn, floor);
  }

  const Real w = disc.ap_scale.value[0];
  const Real b = disc.ap_offset.value[0];
  cache.cos = Tensor<Real>(batch, batch);
  cache.ap_prob = Tensor<Real>(batch, batch);
  Tensor<Real> ap_logits(batch, batch);
  for (std::size_t i = 0; i < batch; ++i) {
    for (std::size_t k = 0; k < batch; ++k) {
      Real dot = 0;
      for (std::size_t c = 0; c < d; ++c) dot += cache.query(i, c) * cache.proto(k, c);
      const Real cs = dot / (cache.q_norm[i] * cache.c_norm[k]);
      cache.cos(i, k) = cs;
      ap_logits(i, k) = w * cs + b;
    }
  }
  Real ap = 0;
  for (std::size_t i = 0; i < batch; ++i) {
    ap += detail::softmax_xent<Real>(ap_logits.row(i), i, cache.ap_prob.row(i));
  }
  ap /= static_cast<Real>(batch);

  val.ce = static_cast<double>(ce);
  val.ap = static_cast<double>(ap);
  val.total = static_cast<double>(ce + ap);
  return {val, std::move(cache)};
}

/// Accumulates seed * dL_spk into the discriminator and returns dL/dspk.
template <typename Real>
Tensor<Real> speaker_loss_backward(SpeakerDisc<Real>& disc, const SpeakerLossCache<Real>& cache,
                                   Real seed = Real(1)) {
  const std::size_t n = cache.ce_prob.rows();
  const std::size_t batch = n / 3;
  const std::size_t d = cache.query.cols();

  Tensor<Real> dlogits = cache.ce_prob;
  const Real kce = seed / static_cast<Real>(n);
  for (std::size_t r = 0; r < n; ++r) {
    dlogits(r, cache.row_labels[r]) -= Real(1);
    for (auto& v : dlogits.row(r)) v *= kce;
  }
  Tensor<Real> dspk = disc.f.backward(cache.fc, dlogits);

  const Real w = disc.ap_scale.value[0];
  const Real kap = seed / static_cast<Real>(batch);
  Tensor<Real> dcos(batch, batch);
  Real dw = 0, db = 0;
  for (std::size_t i = 0; i < batch; ++i) {
    for (std::size_t k = 0; k < batch; ++k) {
      const Real ds = kap * (cache.ap_prob(i, k) - (i == k ? Real(1) : Real(0)));
      dw += ds * cache.cos(i, k);
      db += ds;
      dcos(i, k) = w * ds;
    }
  }
  disc.ap_scale.grad[0] += dw;
  disc.ap_offset.grad[0] += db;

  Tensor<Real> dq(batch, d), dc(batch, d);
  for (std::size_t i = 0; i < batch; ++i) {
    for (std::size_t k = 0; k < batch; ++k) {
      const Real g = dcos(i, k);
      if (g == Real(0)) continue;
      const Real cs = cache.cos(i, k);
      const Real inv = Real(1) / (cache.q_norm[i] * cache.c_norm[k]);
      const Real qscale = cache.q_clamped[i] ? Real(0) : cs / (cache.q_norm[i] * cache.q_norm[i]);
      const Real cscale = cache.c_clamped[k] ? Real(0) : cs / (cache.c_norm[k] * cache.c_norm[k]);
      for (std::size_t c = 0; c < d; ++c) {
        dq(i, c) += g * (cache.proto(k, c) * inv - qscale * cache.query(i, c));
        dc(k, c) += g * (cache.query(i, c) * inv - cscale * cache.proto(k, c));
      }
    }
  }
  for (std::size_t i = 0; i < batch; ++i) {
    for (std::size_t c = 0; c < d; ++c) {
      dspk(3 * i, c) += dq(i, c);
      dspk(3 * i + 1, c) += dc(i, c) / Real(2);
      dspk(3 * i + 2, c) += dc(i, c) / Real(2);
    }
  }
  return dspk;
}

// ---------------------------------------------------------------------------
// Environment discriminator
// ---------------------------------------------------------------------------

/// g: two blocks of BN -> ELU -> FC.
template <typename Real>
struct EnvDisc {
  BnLayer<Real> bn1;
  FcLayer<Real> fc1;
  BnLayer<Real> bn2;
  FcLayer<Real> fc2;

  EnvDisc() = default;

  EnvDisc(std::size_t in_dim, std::size_t hidden_dim, std::size_t out_dim)
      : bn1(in_dim), fc1(in_dim, hidden_dim), bn2(hidden_dim), fc2(hidden_dim, out_dim) {}

  template <typename Rng>
  void init(Rng& rng) {
    fc1.init_uniform(rng);
    fc2.init_uniform(rng);
  }

  std::size_t in_dim() const noexcept { return fc1.in_dim(); }

  std::vector<Param<Real>*> params() {
    return {&bn1.gamma, &bn1.beta, &fc1.weight, &fc1.bias,
            &bn2.gamma, &bn2.beta, &fc2.weight, &fc2.bias};
  }
};

template <typename Real>
struct EnvDiscCache {
  BnCache<Real> bn1;
  EluCache<Real> elu1;
  FcCache<Real> fc1;
  BnCache<Real> bn2;
  EluCache<Real> elu2;
  FcCache<Real> fc2;
};

template <typename Real>
std::pair<Tensor<Real>, EnvDiscCache<Real>> env_disc_forward(EnvDisc<Real>& g,
                                                             const Tensor<Real>& x, Mode mode) {
  EnvDiscCache<Real> c;
  auto [h1, bc1] = g.bn1.forward(x, mode);
  auto [a1, ec1] = elu_forward(h1);
  auto [o1, fc1] = g.fc1.forward(a1);
  auto [h2, bc2] = g.bn2.forward(o1, mode);
  auto [a2, ec2] = elu_forward(h2);
  auto [y, fc2] = g.fc2.forward(a2);
  c.bn1 = std::move(bc1);
  c.elu1 = std::move(ec1);
  c.fc1 = std::move(fc1);
  c.bn2 = std::move(bc2);
  c.elu2 = std::move(ec2);
  c.fc2 = std::move(fc2);
  return {std::move(y), std::move(c)};
}

template <typename Real>
Tensor<Real> env_disc_backward(EnvDisc<Real>& g, const EnvDiscCache<Real>& c,
                               const Tensor<Real>& dy) {
  Tensor<Real> t = g.fc2.backward(c.fc2, dy);
  t = elu_backward(c.elu2, t);
  t = g.bn2.backward(c.bn2, t);
  t = g.fc1.backward(c.fc1, t);
  t = elu_backward(c.elu1, t);
  return g.bn1.backward(c.bn1, t);
}

/// Batch mean of max(0, m + |y1 - y2|^2 - |y1 - y3|^2) over triplets, with its
/// gradient with respect to y (seed 1).
template <typename Real>
std::pair<Real, Tensor<Real>> triplet_margin_loss(const Tensor<Real>& y, Real margin) {
  require_triplet_rows(y.rows(), "env_triplet_loss");
  const std::size_t batch = y.rows() / 3;
  Tensor<Real> dy(y.rows(), y.cols());
  Real total = 0;
  const Real k = Real(1) / static_cast<Real>(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    auto a = y.row(3 * i), p = y.row(3 * i + 1), n = y.row(3 * i + 2);
    Real pos = 0, neg = 0;
    for (std::size_t c = 0; c < y.cols(); ++c) {
      pos += (a[c] - p[c]) * (a[c] - p[c]);
      neg += (a[c] - n[c]) * (a[c] - n[c]);
    }
    const Real h = margin + pos - neg;
    if (!(h <= Real(0))) {  // NaN falls through so it reaches the loss check
      total += h;
      for (std::size_t c = 0; c < y.cols(); ++c) {
        dy(3 * i, c) = k * Real(2) * (n[c] - p[c]);
        dy(3 * i + 1, c) = -k * Real(2) * (a[c] - p[c]);
        dy(3 * i + 2, c) = k * Real(2) * (a[c] - n[c]);
      }
    }
  }
  return {total * k, std::move(dy)};
}

template <typename Real>
struct EnvLossCache {
  EnvDiscCache<Real> disc;
  Tensor<Real> dy;  // dL/dg(x), seed 1
};

template <typename Real>
std::pair<Real, EnvLossCache<Real>> env_triplet_loss(EnvDisc<Real>& g, const Tensor<Real>& x,
                                                     Real margin, Mode mode) {
  require_triplet_rows(x.rows(), "env_triplet_loss");
  auto [y, dc] = env_disc_forward(g, x, mode);
  auto [loss, dy] = triplet_margin_loss(y, margin);
  return {loss, EnvLossCache<Real>{std::move(dc), std::move(dy)}};
}

/// Accumulates seed * dL into g's parameters and returns seed * dL/dx.
template <typename Real>
Tensor<Real> env_triplet_loss_backward(EnvDisc<Real>& g, const EnvLossCache<Real>& cache,
                                       Real seed = Real(1)) {
  Tensor<Real> dy = cache.dy;
  dy *= seed;
  return env_disc_backward(g, cache.disc, dy);
}

// ---------------------------------------------------------------------------
// Mean absolute Pearson correlation
// ---------------------------------------------------------------------------

template <typename Real>
struct MapcCache {
  Tensor<Real> a_std;  // standardized spk columns (0 for degenerate columns)
  Tensor<Real> b_std;  // standardized env columns
  std::vector<Real> a_sigma, b_sigma;
  std::vector<bool> a_dead, b_dead;
  Tensor<Real> corr;   // d_spk x d_env
};

namespace detail {

// Column is treated as constant when its spread is negligible against its
// magnitude; such columns contribute zero correlation.
template <typename Real>
void standardize_columns(const Tensor<Real>& x, Tensor<Real>& out, std::vector<Real>& sigma,
                         std::vector<bool>& dead) {
  const std::size_t n = x.rows(), d = x.cols();
  out = Tensor<Real>(n, d);
  sigma.assign(d, Real(0));
  dead.assign(d, false);
  for (std::size_t c = 0; c < d; ++c) {
    Real mean = 0, mag = 0;
    for (std::size_t r = 0; r < n; ++r) {
      mean += x(r, c);
      mag = std::max(mag, std::abs(x(r, c)));
    }
    mean /= static_cast<Real>(n);
    Real var = 0;
    for (std::size_t r = 0; r < n; ++r) var += (x(r, c) - mean) * (x(r, c) - mean);
    var /= static_cast<Real>(n);
    const Real s = std::sqrt(var);
    const Real tol = static_cast<Real>(std::is_same_v<Real, float> ? 1e-6 : 1e-12);
    if (!(s > tol * mag) || s == Real(0)) {
      dead[c] = true;
      sigma[c] = Real(1);
      continue;
    }
    sigma[c] = s;
    for (std::size_t r = 0; r < n; ++r) out(r, c) = (x(r, c) - mean) / s;
  }
}

}  // namespace detail

/// Mean over all (spk dim, env dim) pairs of |Pearson r| across the batch.
template <typename Real>
std::pair<Real, MapcCache<Real>> mapc_loss(const Tensor<Real>& spk, const Tensor<Real>& env) {
  if (spk.rows() != env.rows()) throw ShapeError("mapc_loss: row counts differ");
  if (spk.rows() < 2) {
    throw DegenerateBatchError("mapc_loss needs at least 2 rows, got " +
                               std::to_string(spk.rows()));
  }
  MapcCache<Real> c;
  detail::standardize_columns(spk, c.a_std, c.a_sigma, c.a_dead);
  detail::standardize_columns(env, c.b_std, c.b_sigma, c.b_dead);
  const std::size_t n = spk.rows(), dp = spk.cols(), dq = env.cols();
  c.corr = Tensor<Real>(dp, dq);
  Real total = 0;
  for (std::size_t p = 0; p < dp; ++p) {
    for (std::size_t q = 0; q < dq; ++q) {
      if (c.a_dead[p] || c.b_dead[q]) continue;
      Real s = 0;
      for (std::size_t r = 0; r < n; ++r) s += c.a_std(r, p) * c.b_std(r, q);
      s /= static_cast<Real>(n);
      s = std::clamp(s, Real(-1), Real(1));
      c.corr(p, q) = s;
      total += std::abs(s);
    }
  }
  return {total / static_cast<Real>(dp * dq), std::move(c)};
}

/// Returns (seed * dL/dspk, seed * dL/denv).
template <typename Real>
std::pair<Tensor<Real>, Tensor<Real>> mapc_loss_backward(const MapcCache<Real>& c,
                                                         Real seed = Real(1)) {
  const std::size_t n = c.a_std.rows(), dp = c.a_std.cols(), dq = c.b_std.cols();
  Tensor<Real> da(n, dp), db(n, dq);
  const Real k = seed / static_cast<Real>(dp * dq) / static_cast<Real>(n);
  // dr/dx_p = (b~_q - r * a~_p) / (N sigma_p), symmetric for env columns.
  for (std::size_t p = 0; p < dp; ++p) {
    if (c.a_dead[p]) continue;
    for (std::size_t q = 0; q < dq; ++q) {
      if (c.b_dead[q]) continue;
      const Real r = c.corr(p, q);
      const Real sg = r > Real(0) ? Real(1) : (r < Real(0) ? Real(-1) : Real(0));
      if (sg == Real(0)) continue;
      const Real ka = k * sg / c.a_sigma[p];
      const Real kb = k * sg / c.b_sigma[q];
      for (std::size_t i = 0; i < n; ++i) {
        const Real a = c.a_std(i, p), b = c.b_std(i, q);
        da(i, p) += ka * (b - r * a);
        db(i, q) += kb * (a - r * b);
      }
    }
  }
  return {std::move(da), std::move(db)};
}

}  // namespace disn
