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

// The fixed set of differentiable ops used by the disentangler and its
// discriminators. Every forward returns its output plus a cache; the matching
// backward consumes the cache, returns the input gradient and accumulates
// parameter gradients additively.

#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "disn/tensor.hpp"

namespace disn {

enum class Mode {
  train,        // batch statistics, running statistics updated
  batch_stats,  // batch statistics, running statistics left untouched
  eval,         // running statistics only
};

inline constexpr double kL1NormEps = 1e-12;

namespace detail {

template <typename Real>
void require_grad_shape(std::size_t rows, std::size_t cols, const Tensor<Real>& g,
                        const char* op) {
  if (g.rows() != rows || g.cols() != cols) {
    throw ShapeError(std::string(op) + " backward: grad_out " + g.shape_string() +
                     " does not match forward output " + std::to_string(rows) + "x" +
                     std::to_string(cols));
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Fully-connected
// ---------------------------------------------------------------------------

template <typename Real>
struct FcCache {
  Tensor<Real> x;
};

template <typename Real>
class FcLayer {
 public:
  Param<Real> weight;  // in_dim x out_dim
  Param<Real> bias;    // 1 x out_dim

  FcLayer() = default;

  FcLayer(std::size_t in_dim, std::size_t out_dim)
      : weight(Tensor<Real>(in_dim, out_dim)), bias(Tensor<Real>(1, out_dim)) {}

  FcLayer(Tensor<Real> w, Tensor<Real> b) : weight(std::move(w)), bias(std::move(b)) {
    if (bias.value.rows() != 1 || bias.value.cols() != weight.value.cols()) {
      throw ShapeError("fc bias must be 1x" + std::to_string(weight.value.cols()));
    }
  }

  /// Uniform in +-1/sqrt(in_dim) for both weight and bias.
  template <typename Rng>
  void init_uniform(Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : weight.value.flat()) v = static_cast<Real>(dist(rng));
    for (auto& v : bias.value.flat()) v = static_cast<Real>(dist(rng));
  }

  std::size_t in_dim() const noexcept { return weight.value.rows(); }
  std::size_t out_dim() const noexcept { return weight.value.cols(); }

  std::pair<Tensor<Real>, FcCache<Real>> forward(const Tensor<Real>& x) const {
    if (x.cols() != in_dim()) {
      throw ShapeError("fc forward: input has " + std::to_string(x.cols()) +
                       " columns, layer expects " + std::to_string(in_dim()));
    }
    const std::size_t n = x.rows(), in = in_dim(), out = out_dim();
    Tensor<Real> y(n, out);
    const auto& w = weight.value;
    for (std::size_t r = 0; r < n; ++r) {
      auto yr = y.row(r);
      for (std::size_t o = 0; o < out; ++o) yr[o] = bias.value[o];
      for (std::size_t i = 0; i < in; ++i) {
        const Real xi = x(r, i);
        const Real* wi = w.raw() + i * out;
        for (std::size_t o = 0; o < out; ++o) yr[o] += xi * wi[o];
      }
    }
    return {std::move(y), FcCache<Real>{x}};
  }

  Tensor<Real> backward(const FcCache<Real>& cache, const Tensor<Real>& g) {
    const auto& x = cache.x;
    detail::require_grad_shape(x.rows(), out_dim(), g, "fc");
    const std::size_t n = x.rows(), in = in_dim(), out = out_dim();
    Tensor<Real> dx(n, in);
    auto& dw = weight.grad;
    const auto& w = weight.value;
    for (std::size_t r = 0; r < n; ++r) {
      auto gr = g.row(r);
      for (std::size_t o = 0; o < out; ++o) bias.grad[o] += gr[o];
      for (std::size_t i = 0; i < in; ++i) {
        const Real xi = x(r, i);
        Real* dwi = dw.raw() + i * out;
        const Real* wi = w.raw() + i * out;
        Real acc = 0;
        for (std::size_t o = 0; o < out; ++o) {
          dwi[o] += xi * gr[o];
          acc += gr[o] * wi[o];
        }
        dx(r, i) = acc;
      }
    }
    return dx;
  }

  std::vector<Param<Real>*> params() { return {&weight, &bias}; }
};

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

template <typename Real>
struct BnCache {
  Mode mode = Mode::train;
  Tensor<Real> xhat;
  std::vector<Real> inv_std;
};

template <typename Real>
class BnLayer {
 public:
  Param<Real> gamma;  // 1 x dim
  Param<Real> beta;   // 1 x dim
  Tensor<Real> running_mean;
  Tensor<Real> running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  BnLayer() = default;

  explicit BnLayer(std::size_t dim)
      : gamma(Tensor<Real>(1, dim, Real(1))),
        beta(Tensor<Real>(1, dim)),
        running_mean(1, dim),
        running_var(1, dim, Real(1)) {}

  std::size_t dim() const noexcept { return gamma.value.cols(); }

  std::pair<Tensor<Real>, BnCache<Real>> forward(const Tensor<Real>& x, Mode mode) {
    if (x.cols() != dim()) {
      throw ShapeError("bn forward: input has " + std::to_string(x.cols()) +
                       " columns, layer expects " + std::to_string(dim()));
    }
    const std::size_t n = x.rows(), d = dim();
    BnCache<Real> cache;
    cache.mode = mode;
    cache.inv_std.assign(d, Real(0));
    cache.xhat = Tensor<Real>(n, d);
    Tensor<Real> y(n, d);

    if (mode == Mode::eval) {
      for (std::size_t c = 0; c < d; ++c) {
        cache.inv_std[c] =
            static_cast<Real>(1.0 / std::sqrt(static_cast<double>(running_var[c]) + eps));
      }
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < d; ++c) {
          const Real xh = (x(r, c) - running_mean[c]) * cache.inv_std[c];
          cache.xhat(r, c) = xh;
          y(r, c) = gamma.value[c] * xh + beta.value[c];
        }
      }
      return {std::move(y), std::move(cache)};
    }

    if (n < 2) {
      throw DegenerateBatchError("bn forward in train mode needs at least 2 rows, got " +
                                 std::to_string(n));
    }
    for (std::size_t c = 0; c < d; ++c) {
      Real mean = 0;
      for (std::size_t r = 0; r < n; ++r) mean += x(r, c);
      mean /= static_cast<Real>(n);
      Real var = 0;
      for (std::size_t r = 0; r < n; ++r) {
        const Real dv = x(r, c) - mean;
        var += dv * dv;
      }
      var /= static_cast<Real>(n);
      const Real inv = static_cast<Real>(1.0 / std::sqrt(static_cast<double>(var) + eps));
      cache.inv_std[c] = inv;
      for (std::size_t r = 0; r < n; ++r) {
        const Real xh = (x(r, c) - mean) * inv;
        cache.xhat(r, c) = xh;
        y(r, c) = gamma.value[c] * xh + beta.value[c];
      }
      if (mode == Mode::train) {
        const Real mom = static_cast<Real>(momentum);
        const Real unbiased = var * static_cast<Real>(n) / static_cast<Real>(n - 1);
        running_mean[c] = (Real(1) - mom) * running_mean[c] + mom * mean;
        running_var[c] = (Real(1) - mom) * running_var[c] + mom * unbiased;
      }
    }
    return {std::move(y), std::move(cache)};
  }

  Tensor<Real> backward(const BnCache<Real>& cache, const Tensor<Real>& g) {
    const auto& xhat = cache.xhat;
    detail::require_grad_shape(xhat.rows(), xhat.cols(), g, "bn");
    const std::size_t n = xhat.rows(), d = dim();
    Tensor<Real> dx(n, d);
    for (std::size_t c = 0; c < d; ++c) {
      Real sum_g = 0, sum_gx = 0;
      for (std::size_t r = 0; r < n; ++r) {
        sum_g += g(r, c);
        sum_gx += g(r, c) * xhat(r, c);
      }
      gamma.grad[c] += sum_gx;
      beta.grad[c] += sum_g;
      const Real gam = gamma.value[c];
      const Real inv = cache.inv_std[c];
      if (cache.mode == Mode::eval) {
        for (std::size_t r = 0; r < n; ++r) dx(r, c) = g(r, c) * gam * inv;
      } else {
        // dx = inv/N * (N*dxhat - sum(dxhat) - xhat*sum(dxhat*xhat)), dxhat = g*gamma
        const Real nn = static_cast<Real>(n);
        for (std::size_t r = 0; r < n; ++r) {
          dx(r, c) = gam * inv / nn * (nn * g(r, c) - sum_g - xhat(r, c) * sum_gx);
        }
      }
    }
    return dx;
  }

  std::vector<Param<Real>*> params() { return {&gamma, &beta}; }
};

// ---------------------------------------------------------------------------
// Parameter-free ops
// ---------------------------------------------------------------------------

template <typename Real>
struct EluCache {
  Tensor<Real> x;
};

template <typename Real>
std::pair<Tensor<Real>, EluCache<Real>> elu_forward(const Tensor<Real>& x) {
  Tensor<Real> y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = x[i] > Real(0) ? x[i] : std::expm1(x[i]);
  }
  return {std::move(y), EluCache<Real>{x}};
}

template <typename Real>
Tensor<Real> elu_backward(const EluCache<Real>& cache, const Tensor<Real>& g) {
  detail::require_grad_shape(cache.x.rows(), cache.x.cols(), g, "elu");
  Tensor<Real> dx(g.rows(), g.cols());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Real x = cache.x[i];
    dx[i] = x > Real(0) ? g[i] : g[i] * std::exp(x);
  }
  return dx;
}

template <typename Real>
struct L1NormCache {
  Tensor<Real> x;
  std::vector<Real> denom;  // ||x_r||_1 + eps per row
};

/// Per-row y = x / (||x||_1 + eps).
template <typename Real>
std::pair<Tensor<Real>, L1NormCache<Real>> l1_normalize_forward(const Tensor<Real>& x) {
  L1NormCache<Real> cache{x, std::vector<Real>(x.rows())};
  Tensor<Real> y(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    Real s = 0;
    for (Real v : x.row(r)) s += std::abs(v);
    const Real denom = s + static_cast<Real>(kL1NormEps);
    cache.denom[r] = denom;
    auto yr = y.row(r);
    auto xr = x.row(r);
    for (std::size_t c = 0; c < x.cols(); ++c) yr[c] = xr[c] / denom;
  }
  return {std::move(y), std::move(cache)};
}

template <typename Real>
Tensor<Real> l1_normalize_backward(const L1NormCache<Real>& cache, const Tensor<Real>& g) {
  const auto& x = cache.x;
  detail::require_grad_shape(x.rows(), x.cols(), g, "l1_normalize");
  Tensor<Real> dx(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const Real denom = cache.denom[r];
    Real gx = 0;
    for (std::size_t c = 0; c < x.cols(); ++c) gx += g(r, c) * x(r, c);
    const Real k = gx / (denom * denom);
    for (std::size_t c = 0; c < x.cols(); ++c) {
      const Real xv = x(r, c);
      const Real sign = xv > Real(0) ? Real(1) : (xv < Real(0) ? Real(-1) : Real(0));
      dx(r, c) = g(r, c) / denom - sign * k;
    }
  }
  return dx;
}

}  // namespace disn
