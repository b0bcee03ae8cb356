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

#include "tasq/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "tasq/errors.hpp"

namespace tasq {
namespace {

void require_matrix(const Tensor& a, const char* what) {
  if (a.rank() != 2) {
    throw ShapeError(std::string(what) + ": expected a 2-D tensor, got " + shape_to_string(a.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
}

double dot(std::span<const double> x, std::span<const double> y) noexcept {
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
  return acc;
}

double norm2(std::span<const double> x) noexcept { return std::sqrt(dot(x, x)); }

// Orthogonalizes `x` against the first `count` columns stored in `basis`
// (each of length x.size()), twice for numerical safety. Returns the
// remaining norm.
double orthogonalize(std::vector<double>& x, const std::vector<std::vector<double>>& basis, std::size_t count) {
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t j = 0; j < count; ++j) {
      const double proj = dot(x, basis[j]);
      for (std::size_t i = 0; i < x.size(); ++i) x[i] -= proj * basis[j][i];
    }
  }
  return norm2(x);
}

}  // namespace

std::size_t shape_volume(const Shape& shape) noexcept {
  if (shape.empty()) return 0;
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  for (std::size_t d : shape_) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive: " + shape_to_string(shape_));
  }
  data_.assign(shape_volume(shape_), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  for (std::size_t d : shape_) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive: " + shape_to_string(shape_));
  }
  if (shape_volume(shape_) != data_.size()) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_to_string(shape_));
  }
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

Tensor Tensor::diag(std::span<const double> values) {
  Tensor t({values.size(), values.size()});
  for (std::size_t i = 0; i < values.size(); ++i) t(i, i) = values[i];
  return t;
}

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  if (rows.size() == 0) throw ShapeError("from_rows: no rows");
  const std::size_t cols = rows.begin()->size();
  std::vector<double> data;
  data.reserve(rows.size() * cols);
  for (const auto& r : rows) {
    if (r.size() != cols) throw ShapeError("from_rows: ragged rows");
    data.insert(data.end(), r.begin(), r.end());
  }
  return Tensor({rows.size(), cols}, std::move(data));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) throw ShapeError("axis out of range for shape " + shape_to_string(shape_));
  return shape_[axis];
}

std::size_t Tensor::rows() const {
  require_matrix(*this, "rows");
  return shape_[0];
}

std::size_t Tensor::cols() const {
  require_matrix(*this, "cols");
  return shape_[1];
}

std::span<const double> Tensor::row(std::size_t i) const {
  const std::size_t c = cols();
  return std::span<const double>(data_).subspan(i * c, c);
}

std::vector<double> Tensor::column(std::size_t j) const {
  const std::size_t r = rows();
  const std::size_t c = cols();
  std::vector<double> out(r);
  for (std::size_t i = 0; i < r; ++i) out[i] = data_[i * c + j];
  return out;
}

Tensor Tensor::reshaped(Shape shape) const& { return Tensor(std::move(shape), data_); }

Tensor Tensor::reshaped(Shape shape) && { return Tensor(std::move(shape), std::move(data_)); }

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul: inner dimensions differ " + shape_to_string(a.shape()) + " · " +
                     shape_to_string(b.shape()));
  }
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double* dst = &out(i, 0);
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a(i, p);
      const double* src = b.values().data() + p * n;
      for (std::size_t j = 0; j < n; ++j) dst[j] += aip * src[j];
    }
  }
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k) {
    throw ShapeError("matmul_nt: inner dimensions differ " + shape_to_string(a.shape()) + " · " +
                     shape_to_string(b.shape()) + "ᵀ");
  }
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const auto ai = a.row(i);
    for (std::size_t j = 0; j < n; ++j) out(i, j) = dot(ai, b.row(j));
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  Tensor out({a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

Tensor subtract(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "subtract");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

Tensor scaled(const Tensor& a, double factor) {
  Tensor out = a;
  for (double& v : out.values()) v *= factor;
  return out;
}

Tensor add_row_vector(const Tensor& a, std::span<const double> bias) {
  require_matrix(a, "add_row_vector");
  if (bias.size() != a.cols()) {
    throw ShapeError("add_row_vector: bias length " + std::to_string(bias.size()) + " vs " +
                     std::to_string(a.cols()) + " columns");
  }
  Tensor out = a;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += bias[j];
  return out;
}

double squared_frobenius_norm(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.values()) acc += v * v;
  return acc;
}

double frobenius_norm(const Tensor& a) {
  // Rescale by the largest magnitude so squares neither overflow nor underflow.
  const double scale = max_abs(a);
  if (scale == 0.0) return 0.0;
  double acc = 0.0;
  for (double v : a.values()) {
    const double r = v / scale;
    acc += r * r;
  }
  return scale * std::sqrt(acc);
}

double max_abs(const Tensor& a) noexcept {
  double m = 0.0;
  for (double v : a.values()) m = std::max(m, std::fabs(v));
  return m;
}

Tensor scale_columns(const Tensor& a, std::span<const double> s) {
  if (a.rank() == 0 || s.size() != a.shape().back()) {
    throw ShapeError("scale_columns: factor length " + std::to_string(s.size()) + " does not match shape " +
                     shape_to_string(a.shape()));
  }
  Tensor out = a;
  auto values = out.values();
  const std::size_t c = s.size();
  for (std::size_t i = 0; i < values.size(); ++i) values[i] *= s[i % c];
  return out;
}

Tensor scale_rows(const Tensor& a, std::span<const double> s) {
  require_matrix(a, "scale_rows");
  if (s.size() != a.rows()) {
    throw ShapeError("scale_rows: factor length " + std::to_string(s.size()) + " does not match " +
                     std::to_string(a.rows()) + " rows");
  }
  Tensor out = a;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) *= s[i];
  return out;
}

SymmetricEigen symmetric_eigen(const Tensor& input) {
  require_matrix(input, "symmetric_eigen");
  const std::size_t n = input.rows();
  if (input.cols() != n) throw ShapeError("symmetric_eigen: matrix is not square");

  Tensor a = input;
  Tensor v = Tensor::identity(n);
  const double total = squared_frobenius_norm(a);

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off == 0.0 || off <= 1e-34 * total) break;

    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

  SymmetricEigen out{std::vector<double>(n), Tensor({n, n})};
  for (std::size_t col = 0; col < n; ++col) {
    out.values[col] = a(order[col], order[col]);
    for (std::size_t k = 0; k < n; ++k) out.vectors(k, col) = v(k, order[col]);
  }
  return out;
}

Tensor SvdResult::reconstruct() const { return matmul_nt(scale_columns(u, singular_values), v); }

SvdResult truncated_svd(const Tensor& a, std::size_t rank) {
  require_matrix(a, "truncated_svd");
  if (rank < 1) throw ArgumentError("truncated_svd: rank must be >= 1");

  // Work on the orientation with at least as many rows as columns so the
  // Gram matrix is built over the smaller dimension.
  const bool flipped = a.rows() < a.cols();
  const Tensor work = flipped ? transpose(a) : a;
  const std::size_t p = work.rows();
  const std::size_t q = work.cols();
  const std::size_t k = std::min(q, rank);

  const Tensor gram = matmul(transpose(work), work);
  const SymmetricEigen eig = symmetric_eigen(gram);

  // σ_i = ‖work·v_i‖ is more accurate than sqrt(λ_i) for small σ.
  std::vector<std::vector<double>> image(q, std::vector<double>(p));
  std::vector<double> sigma(q);
  for (std::size_t i = 0; i < q; ++i) {
    for (std::size_t r = 0; r < p; ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < q; ++c) acc += work(r, c) * eig.vectors(c, i);
      image[i][r] = acc;
    }
    sigma[i] = norm2(image[i]);
  }
  std::vector<std::size_t> order(q);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return sigma[i] > sigma[j]; });

  const double sigma_max = sigma[order[0]];
  const double zero_tol = static_cast<double>(std::max(p, q)) * std::numeric_limits<double>::epsilon() * sigma_max;

  // Left vectors (length p) and right vectors (length q) of `work`.
  std::vector<std::vector<double>> left(k), right(k);
  std::vector<double> values(k);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t src = order[i];
    right[i] = eig.vectors.column(src);
    values[i] = sigma[src] > zero_tol ? sigma[src] : 0.0;
    left[i] = image[src];
    double norm = 0.0;
    if (values[i] > 0.0) {
      for (double& x : left[i]) x /= values[i];
      norm = orthogonalize(left[i], left, i);
    }
    if (values[i] == 0.0 || norm < 0.5) {
      // Null direction: complete the basis from the standard unit vectors.
      for (std::size_t e = 0; e < p; ++e) {
        std::vector<double> cand(p, 0.0);
        cand[e] = 1.0;
        norm = orthogonalize(cand, left, i);
        if (norm > 0.5) {
          left[i] = std::move(cand);
          break;
        }
      }
    }
    for (double& x : left[i]) x /= norm;
  }

  // Original right singular vectors are `right` unless flipped.
  auto& a_right = flipped ? left : right;
  auto& a_left = flipped ? right : left;
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t arg = 0;
    for (std::size_t r = 1; r < a_right[i].size(); ++r) {
      if (std::fabs(a_right[i][r]) > std::fabs(a_right[i][arg])) arg = r;
    }
    if (a_right[i][arg] < 0.0) {
      for (double& x : a_right[i]) x = -x;
      for (double& x : a_left[i]) x = -x;
    }
  }

  SvdResult out{Tensor({a.rows(), k}), std::move(values), Tensor({a.cols(), k})};
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t r = 0; r < a.rows(); ++r) out.u(r, i) = a_left[i][r];
    for (std::size_t c = 0; c < a.cols(); ++c) out.v(c, i) = a_right[i][c];
  }
  return out;
}

}  // namespace tasq
