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

#include <gtest/gtest.h>

#include "tasq/errors.hpp"
#include "tasq/tensor.hpp"
#include "test_support.hpp"

namespace tasq {
namespace {

using testing::from_eigen;
using testing::random_tensor;
using testing::to_eigen;

TEST(Tensor, ConstructionValidatesShape) {
  EXPECT_THROW(Tensor({2, 0}), ShapeError);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>(3)), ShapeError);
  const Tensor t({2, 3});
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(shape_to_string(t.shape()), "[2x3]");
  for (double v : t.values()) EXPECT_EQ(v, 0.0);
}

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  const Tensor a = Tensor::from_rows({{1, 2}, {3, 4}});
  EXPECT_EQ(matmul(Tensor::identity(2), a), a);
}

TEST(Matmul, Projector) {
  const Tensor p = Tensor::from_rows({{1, 0}, {0, 0}});
  const Tensor x = Tensor::from_rows({{5}, {7}});
  EXPECT_EQ(matmul(p, x), Tensor::from_rows({{5}, {0}}));
}

TEST(Matmul, MatchesTripleLoop) {
  std::mt19937_64 rng(11);
  const Tensor a = random_tensor(rng, {5, 4});
  const Tensor b = random_tensor(rng, {4, 3});
  const Tensor got = matmul(a, b);
  const Tensor expect = testing::naive_matmul_nt(a, transpose(b));
  EXPECT_LT(testing::max_abs_diff(got, expect), 1e-12);
  EXPECT_LT(testing::max_abs_diff(matmul_nt(a, transpose(b)), expect), 1e-12);
}

TEST(Matmul, ShapeMismatchThrows) {
  EXPECT_THROW(matmul(Tensor({2, 3}), Tensor({2, 3})), ShapeError);
  EXPECT_THROW(matmul_nt(Tensor({2, 3}), Tensor({2, 4})), ShapeError);
  EXPECT_THROW(add(Tensor({2, 3}), Tensor({3, 2})), ShapeError);
}

TEST(Matmul, IdentityExactOnIntegerInputs) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> d(-50, 50);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor a({6, 4});
    for (double& v : a.values()) v = d(rng);
    EXPECT_EQ(matmul(Tensor::identity(6), a), a);
  }
}

TEST(Frobenius, Examples) {
  EXPECT_EQ(frobenius_norm(Tensor({3, 3})), 0.0);
  EXPECT_DOUBLE_EQ(frobenius_norm(Tensor::from_rows({{3, 4}})), 5.0);
}

TEST(Frobenius, MatchesElementwiseSum) {
  std::mt19937_64 rng(5);
  const Tensor a = random_tensor(rng, {6, 6});
  const double expect = std::sqrt(testing::naive_sq_frobenius(a));
  EXPECT_NEAR(frobenius_norm(a) / expect, 1.0, 1e-12);
}

TEST(Frobenius, Homogeneous) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor a = random_tensor(rng, {4, 5});
    const double c = std::uniform_real_distribution<double>(-100, 100)(rng);
    EXPECT_NEAR(frobenius_norm(scaled(a, c)), std::fabs(c) * frobenius_norm(a), 1e-12 * std::fabs(c) * frobenius_norm(a));
  }
}

TEST(Scale, ColumnsAndRows) {
  EXPECT_EQ(scale_columns(Tensor::identity(2), std::vector<double>{2, 3}), Tensor::diag(std::vector<double>{2, 3}));
  std::mt19937_64 rng(7);
  const Tensor a = random_tensor(rng, {4, 3});
  const std::vector<double> s = testing::random_positive(rng, 4);
  std::vector<double> inv(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) inv[i] = 1.0 / s[i];
  EXPECT_LT(testing::max_abs_diff(scale_rows(scale_rows(a, s), inv), a), 1e-12);
  EXPECT_THROW(scale_columns(a, s), ShapeError);
  EXPECT_THROW(scale_rows(a, std::vector<double>{1, 2}), ShapeError);
}

TEST(Scale, SmoothingIdentityHolds) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor x = random_tensor(rng, {7, 5});
    const Tensor w = random_tensor(rng, {5, 3});  // k×n
    const std::vector<double> s = testing::random_positive(rng, 5, 1e-2, 1e2);
    std::vector<double> inv(5);
    for (std::size_t i = 0; i < 5; ++i) inv[i] = 1.0 / s[i];
    const Tensor lhs = matmul(scale_columns(x, inv), scale_rows(w, s));
    EXPECT_LT(testing::rel_frobenius_diff(lhs, matmul(x, w)), 1e-9);
  }
}

TEST(SymmetricEigen, MatchesEigenOracle) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor g = random_tensor(rng, {6, 6});
    const Tensor a = matmul_nt(g, g);
    const SymmetricEigen mine = symmetric_eigen(a);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> oracle(to_eigen(a));
    const auto& ev = oracle.eigenvalues();  // ascending
    for (int i = 0; i < 6; ++i) EXPECT_NEAR(mine.values[i], ev(5 - i), 1e-10 * ev(5));
    // A·v = λ·v for every returned pair.
    const Tensor av = matmul(a, mine.vectors);
    for (std::size_t j = 0; j < 6; ++j) {
      for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(av(i, j), mine.values[j] * mine.vectors(i, j), 1e-9 * ev(5));
    }
  }
}

TEST(Svd, RankBelowOneThrows) { EXPECT_THROW(truncated_svd(Tensor::identity(3), 0), ArgumentError); }

TEST(Svd, DiagonalCase) {
  const SvdResult r = truncated_svd(Tensor::diag(std::vector<double>{3, 2, 1}), 2);
  ASSERT_EQ(r.k(), 2u);
  EXPECT_NEAR(r.singular_values[0], 3.0, 1e-12);
  EXPECT_NEAR(r.singular_values[1], 2.0, 1e-12);
  EXPECT_LT(testing::max_abs_diff(r.reconstruct(), Tensor::diag(std::vector<double>{3, 2, 0})), 1e-12);
}

TEST(Svd, RankOneOuterProduct) {
  const std::vector<double> u{1, -2, 3}, v{0.5, 4, -1};
  Tensor a({3, 3});
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) a(i, j) = u[i] * v[j];
  }
  const SvdResult r = truncated_svd(a, 3);
  const double expect = std::sqrt(14.0) * std::sqrt(17.25);
  ASSERT_EQ(r.k(), 3u);
  EXPECT_NEAR(r.singular_values[0], expect, 1e-10);
  EXPECT_NEAR(r.singular_values[1], 0.0, 1e-10);
  EXPECT_NEAR(r.singular_values[2], 0.0, 1e-10);
}

void expect_orthonormal_columns(const Tensor& q, double tol) {
  const Tensor g = matmul(transpose(q), q);
  for (std::size_t i = 0; i < g.rows(); ++i) {
    for (std::size_t j = 0; j < g.cols(); ++j) EXPECT_NEAR(g(i, j), i == j ? 1.0 : 0.0, tol);
  }
}

TEST(Svd, InvariantsOnRandomAndDeficientMatrices) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t m = 3 + trial % 5, n = 2 + (trial * 7) % 6;
    Tensor a = random_tensor(rng, {m, n});
    if (trial % 3 == 0) a = matmul(random_tensor(rng, {m, 1}), random_tensor(rng, {1, n}));  // rank 1
    const SvdResult r = truncated_svd(a, std::min(m, n));
    for (std::size_t i = 0; i < r.k(); ++i) {
      EXPECT_GE(r.singular_values[i], 0.0);
      if (i > 0) {
        EXPECT_LE(r.singular_values[i], r.singular_values[i - 1]);
      }
    }
    expect_orthonormal_columns(r.u, 1e-9);
    expect_orthonormal_columns(r.v, 1e-9);
    EXPECT_LT(testing::max_abs_diff(r.reconstruct(), a), 1e-9 * std::max(1.0, max_abs(a)));
    for (std::size_t j = 0; j < r.k(); ++j) {
      // Sign convention: the largest-magnitude entry of each v column is positive.
      double best = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (std::fabs(r.v(i, j)) > std::fabs(best)) best = r.v(i, j);
      }
      EXPECT_GT(best, 0.0);
    }
  }
}

TEST(Svd, WideAndTallAgreeWithEigenOracle) {
  std::mt19937_64 rng(12);
  for (const auto& [m, n] : {std::pair<std::size_t, std::size_t>{5, 9}, {9, 5}, {8, 8}}) {
    const Tensor a = random_tensor(rng, {m, n});
    for (int r : {1, 2, 4}) {
      const Tensor best = from_eigen(testing::eigen_rank_r(to_eigen(a), r));
      EXPECT_LT(testing::max_abs_diff(truncated_svd(a, r).reconstruct(), best), 1e-8);
    }
  }
}

TEST(Svd, RankIsClampedToMatrixSize) {
  std::mt19937_64 rng(13);
  const Tensor a = random_tensor(rng, {3, 5});
  const SvdResult r = truncated_svd(a, 32);
  EXPECT_EQ(r.k(), 3u);
  EXPECT_EQ(r.u.shape(), (Shape{3, 3}));
  EXPECT_EQ(r.v.shape(), (Shape{5, 3}));
}

TEST(Svd, Deterministic) {
  std::mt19937_64 rng(14);
  const Tensor a = random_tensor(rng, {10, 7});
  const SvdResult x = truncated_svd(a, 4), y = truncated_svd(a, 4);
  EXPECT_EQ(x.u, y.u);
  EXPECT_EQ(x.v, y.v);
  EXPECT_EQ(x.singular_values, y.singular_values);
}

TEST(Tensor, FiniteInputsStayFinite) {
  std::mt19937_64 rng(15);
  const Tensor a = random_tensor(rng, {6, 4}, 1e3);
  EXPECT_TRUE(matmul_nt(a, a).all_finite());
  EXPECT_TRUE(truncated_svd(a, 3).reconstruct().all_finite());
  EXPECT_TRUE(truncated_svd(Tensor({4, 4}), 2).reconstruct().all_finite());
}

}  // namespace
}  // namespace tasq
