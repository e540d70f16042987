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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "disn/error.hpp"

namespace disn {

/// Dense row-major matrix. Rows are batch items, columns are features.
template <typename Real>
class Tensor {
 public:
  using value_type = Real;

  Tensor() = default;

  Tensor(std::size_t rows, std::size_t cols, Real fill = Real(0))
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {
    check_shape();
  }

  Tensor(std::size_t rows, std::size_t cols, std::vector<Real> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    check_shape();
    if (data_.size() != rows_ * cols_) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " != " + std::to_string(rows_) + "x" +
                       std::to_string(cols_));
    }
    require_finite("tensor construction");
  }

  static Tensor from_rows(std::initializer_list<std::initializer_list<Real>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<Real> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw ShapeError("ragged rows in from_rows");
      data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor(r, c, std::move(data));
  }

  static Tensor identity(std::size_t n) {
    Tensor t(n, n);
    for (std::size_t i = 0; i < n; ++i) t(i, i) = Real(1);
    return t;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  Real& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  Real operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  Real& operator[](std::size_t i) { return data_[i]; }
  Real operator[](std::size_t i) const { return data_[i]; }

  std::span<Real> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const Real> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<Real> flat() { return data_; }
  std::span<const Real> flat() const { return data_; }
  const std::vector<Real>& data() const noexcept { return data_; }
  Real* raw() noexcept { return data_.data(); }
  const Real* raw() const noexcept { return data_.data(); }

  bool same_shape(const Tensor& o) const noexcept {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  void fill(Real v) { std::fill(data_.begin(), data_.end(), v); }

  void require_finite(const char* where) const {
    for (Real v : data_) {
      if (!std::isfinite(v)) {
        throw NumericError(std::string("non-finite value in ") + where);
      }
    }
  }

  Tensor& operator+=(const Tensor& o) {
    require_shape(o, "operator+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }

  Tensor& operator*=(Real s) {
    for (auto& v : data_) v *= s;
    return *this;
  }

  void require_shape(const Tensor& o, const char* where) const {
    if (!same_shape(o)) {
      throw ShapeError(std::string(where) + ": shape " + shape_string() +
                       " vs " + o.shape_string());
    }
  }

  std::string shape_string() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
  }

  template <typename Other>
  Tensor<Other> cast() const {
    Tensor<Other> out(rows_, cols_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<Other>(data_[i]);
    return out;
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  void check_shape() const {
    if (rows_ < 1 || cols_ < 1) {
      throw ShapeError("tensor must be at least 1x1, got " + shape_string());
    }
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Real> data_;
};

/// Selects columns [first, first + count) of every row.
template <typename Real>
Tensor<Real> column_slice(const Tensor<Real>& x, std::size_t first, std::size_t count) {
  if (first + count > x.cols()) throw ShapeError("column slice out of range");
  Tensor<Real> out(x.rows(), count);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto src = x.row(r);
    std::copy(src.begin() + first, src.begin() + first + count, out.row(r).begin());
  }
  return out;
}

template <typename Real>
Tensor<Real> concat_columns(const Tensor<Real>& a, const Tensor<Real>& b) {
  if (a.rows() != b.rows()) throw ShapeError("concat_columns: row counts differ");
  Tensor<Real> out(a.rows(), a.cols() + b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto dst = out.row(r);
    std::copy(a.row(r).begin(), a.row(r).end(), dst.begin());
    std::copy(b.row(r).begin(), b.row(r).end(), dst.begin() + a.cols());
  }
  return out;
}

/// Trainable tensor with gradient and Adam moment slots of identical shape.
template <typename Real>
struct Param {
  Tensor<Real> value;
  Tensor<Real> grad;
  Tensor<Real> m1;
  Tensor<Real> m2;

  Param() = default;
  explicit Param(Tensor<Real> v)
      : value(std::move(v)),
        grad(value.rows(), value.cols()),
        m1(value.rows(), value.cols()),
        m2(value.rows(), value.cols()) {}

  void zero_grad() { grad.fill(Real(0)); }
};

}  // namespace disn
