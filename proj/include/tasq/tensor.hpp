// Copyright 2026 The tasq Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef TASQ_TENSOR_HPP_
#define TASQ_TENSOR_HPP_

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace tasq {

using Shape = std::vector<std::size_t>;

std::size_t shape_volume(const Shape& shape) noexcept;
std::string shape_to_string(const Shape& shape);

// Dense row-major array of doubles. Every dimension is positive and
// volume(shape) == data.size().
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor identity(std::size_t n);
  static Tensor diag(std::span<const double> values);
  static Tensor vector(std::vector<double> values);
  // Builds a 2-D tensor from nested rows; rows must have equal length.
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t dim(std::size_t axis) const;
  bool empty() const noexcept { return data_.empty(); }

  // 2-D accessors; rows()/cols() throw ShapeError on non-matrices.
  std::size_t rows() const;
  std::size_t cols() const;
  double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * shape_.back() + j]; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * shape_.back() + j]; }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  std::span<const double> row(std::size_t i) const;
  std::vector<double> column(std::size_t j) const;

  // Same data, new shape of equal volume.
  Tensor reshaped(Shape shape) const&;
  Tensor reshaped(Shape shape) &&;

  bool all_finite() const noexcept;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Standard product of an m×k and a k×n matrix.
Tensor matmul(const Tensor& a, const Tensor& b);
// a·bᵀ for a (m×k) and b (n×k); the linear-layer product X·Wᵀ.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor subtract(const Tensor& a, const Tensor& b);
Tensor scaled(const Tensor& a, double factor);
// Adds `bias` to every row of a matrix whose column count matches.
Tensor add_row_vector(const Tensor& a, std::span<const double> bias);

double frobenius_norm(const Tensor& a);
double squared_frobenius_norm(const Tensor& a);
double max_abs(const Tensor& a) noexcept;

// Multiplies column j (resp. row i) by s[j] (resp. s[i]). For tensors of
// rank > 2, scale_columns acts on the last axis.
Tensor scale_columns(const Tensor& a, std::span<const double> s);
Tensor scale_rows(const Tensor& a, std::span<const double> s);

// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
// Eigenvalues are sorted non-increasing; eigenvectors are the columns of
// `vectors` in matching order.
struct SymmetricEigen {
  std::vector<double> values;
  Tensor vectors;
};
SymmetricEigen symmetric_eigen(const Tensor& a);

struct SvdResult {
  Tensor u;                             // m×k, orthonormal columns
  std::vector<double> singular_values;  // length k, non-increasing, >= 0
  Tensor v;                             // n×k, orthonormal columns

  std::size_t k() const noexcept { return singular_values.size(); }
  // u·diag(σ)·vᵀ.
  Tensor reconstruct() const;
};

// Rank-k truncated SVD with k = min(m, n, rank), computed from the Gram
// matrix of the smaller dimension. The largest-magnitude entry of every v
// column is positive. Null directions are completed by Gram-Schmidt.
SvdResult truncated_svd(const Tensor& a, std::size_t rank);

}  // namespace tasq

#endif  // TASQ_TENSOR_HPP_
