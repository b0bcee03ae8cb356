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
#include "tasq/smoothing.hpp"
#include "test_support.hpp"

namespace tasq {
namespace {

using testing::random_tensor;

// Four nested loops over B, T, L, C with explicit indexing.
std::vector<double> loop_absmax(const Tensor& x) {
  const auto& sh = x.shape();
  std::vector<double> a(sh[3], 0.0);
  for (std::size_t b = 0; b < sh[0]; ++b) {
    for (std::size_t t = 0; t < sh[1]; ++t) {
      for (std::size_t l = 0; l < sh[2]; ++l) {
        for (std::size_t c = 0; c < sh[3]; ++c) {
          const double v = x[((b * sh[1] + t) * sh[2] + l) * sh[3] + c];
          if (std::fabs(v) > a[c]) a[c] = std::fabs(v);
        }
      }
    }
  }
  return a;
}

TEST(Absmax, AggregatesOverTimesteps) {
  // Channel 0 sees 2 and -8 at t = 0 and 1 at t = 1; channel 1 is silent.
  Tensor x({1, 2, 2, 2});
  x[0] = 2;
  x[2] = -8;
  x[4] = 1;
  const ActivationTrace trace(x, "fc");
  EXPECT_EQ(trace.absmax(), (std::vector<double>{8, 0}));
}

TEST(Absmax, MatchesLoopOracle) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = random_tensor(rng, {3, 5, 4, 7}, 2.0);
    EXPECT_EQ(collect_absmax(x), loop_absmax(x));
  }
}

TEST(Absmax, WeightColumns) {
  EXPECT_EQ(weight_absmax(Tensor::from_rows({{1, -5}, {-3, 2}})), (std::vector<double>{3, 5}));
  EXPECT_THROW(weight_absmax(Tensor({2, 2, 2})), ShapeError);
}

TEST(Absmax, ShardMergeEqualsWhole) {
  std::mt19937_64 rng(32);
  const Tensor x = random_tensor(rng, {4, 3, 2, 5});
  const Tensor lo = slice_timestep(x, 0), hi = slice_timestep(x, 2);
  const std::vector<double> merged = merge_absmax(collect_absmax(lo), collect_absmax(hi));
  const std::vector<double> whole = merge_absmax(merged, collect_absmax(slice_timestep(x, 1)));
  EXPECT_EQ(whole, collect_absmax(x));
  EXPECT_THROW(merge_absmax(std::vector<double>{1}, std::vector<double>{1, 2}), ShapeError);
}

TEST(Absmax, FullTraceDominatesEverySlice) {
  std::mt19937_64 rng(33);
  const Tensor x = random_tensor(rng, {2, 6, 3, 4});
  const std::vector<double> all = collect_absmax(x);
  for (std::size_t t = 0; t < 6; ++t) {
    const std::vector<double> one = collect_absmax(slice_timestep(x, t));
    for (std::size_t c = 0; c < 4; ++c) EXPECT_GE(all[c], one[c]);
  }
}

TEST(Trace, RejectsBadShapes) {
  EXPECT_THROW(ActivationTrace(Tensor({2, 3}), "x"), ShapeError);
  EXPECT_THROW(slice_timestep(Tensor({1, 2, 1, 1}), 2), ShapeError);
}

TEST(Trace, TimestepSliceIsBatchMajor) {
  Tensor x({2, 3, 1, 1});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i);
  // element (b, t) sits at index b·3 + t
  EXPECT_EQ(slice_timestep(x, 1), Tensor::from_rows({{1}, {4}}));
}

TEST(TasFactor, Examples) {
  const std::vector<double> a{4, 9, 0.25}, b{1, 3, 2};
  EXPECT_DOUBLE_EQ(compute_tas_factor(a, b, 0.5).s[0], 2.0);
  const SmoothingFactor one = compute_tas_factor(a, b, 1.0);
  const SmoothingFactor zero = compute_tas_factor(a, b, 0.0);
  for (std::size_t c = 0; c < a.size(); ++c) {
    EXPECT_DOUBLE_EQ(one.s[c], a[c]);
    EXPECT_DOUBLE_EQ(zero.s[c], 1.0 / b[c]);
  }
  EXPECT_EQ(*one.alpha, 1.0);
}

TEST(TasFactor, FloorsZeroChannels) {
  const SmoothingFactor f = compute_tas_factor(std::vector<double>{0.0}, std::vector<double>{0.0}, 0.3);
  EXPECT_NEAR(f.s[0], std::pow(1e-8, 0.3) / std::pow(1e-8, 0.7), 1e-12);
  EXPECT_TRUE(std::isfinite(f.s[0]));
}

TEST(TasFactor, ScaleCovariant) {
  std::mt19937_64 rng(34);
  for (int trial = 0; trial < 50; ++trial) {
    const std::vector<double> a = testing::random_positive(rng, 6), b = testing::random_positive(rng, 6);
    const double k = testing::random_positive(rng, 1, 0.01, 100)[0];
    const double alpha = std::uniform_real_distribution<double>(0, 1)(rng);
    std::vector<double> ka(a);
    for (double& v : ka) v *= k;
    const SmoothingFactor base = compute_tas_factor(a, b, alpha), scaled = compute_tas_factor(ka, b, alpha);
    for (std::size_t c = 0; c < 6; ++c) EXPECT_NEAR(scaled.s[c] / base.s[c], std::pow(k, alpha), 1e-12 * std::pow(k, alpha));
  }
}

TEST(TasFactor, Errors) {
  EXPECT_THROW(compute_tas_factor(std::vector<double>{1, 2}, std::vector<double>{1}, 0.5), ShapeError);
  EXPECT_THROW(compute_tas_factor(std::vector<double>{1}, std::vector<double>{1}, 1.5), ArgumentError);
  EXPECT_THROW(compute_tas_factor(std::vector<double>{1}, std::vector<double>{1}, -0.1), ArgumentError);
  EXPECT_THROW(compute_tas_factor(std::vector<double>{1}, std::vector<double>{1}, std::nan("")), ArgumentError);
}

TEST(ApplySmoothing, OnesIsIdentity) {
  std::mt19937_64 rng(35);
  const Tensor x = random_tensor(rng, {5, 4}), w = random_tensor(rng, {3, 4});
  const SmoothedPair p = apply_smoothing(x, w, SmoothingFactor::ones(4));
  EXPECT_EQ(p.x, x);
  EXPECT_EQ(p.w, w);
}

TEST(ApplySmoothing, FullPrecisionProductInvariant) {
  std::mt19937_64 rng(36);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor x = random_tensor(rng, {9, 6}), w = random_tensor(rng, {4, 6});
    const SmoothingFactor s{testing::random_positive(rng, 6, 1e-3, 1e3), std::nullopt};
    const SmoothedPair p = apply_smoothing(x, w, s);
    EXPECT_LT(testing::rel_frobenius_diff(testing::naive_matmul_nt(p.x, p.w), testing::naive_matmul_nt(x, w)), 1e-9);
  }
}

TEST(ApplySmoothing, OutlierChannelIsCompressedToItsSquareRoot) {
  // Channel 1 peaks at 100, the rest at 1; weights are all ones.
  Tensor x({1, 2, 3, 4});
  std::mt19937_64 rng(37);
  std::uniform_real_distribution<double> u(-1, 1);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = u(rng);
  x[0] = 1; x[1] = -100; x[2] = 1; x[3] = -1;
  const ActivationTrace trace(x, "fc");
  const Tensor w({3, 4}, std::vector<double>(12, 1.0));
  const SmoothingFactor s = compute_tas_factor(trace.absmax(), weight_absmax(w), 0.5);
  const std::vector<double> after = collect_absmax(smooth_input(x, s));
  for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(after[c], std::sqrt(trace.absmax()[c]), 1e-12);
  EXPECT_NEAR(after[1], 10.0, 1e-12);
  EXPECT_NEAR(after[1] / after[0], 10.0, 1e-12);
}

TEST(ApplySmoothing, ShapeMismatch) {
  EXPECT_THROW(apply_smoothing(Tensor({2, 3}), Tensor({2, 4}), SmoothingFactor::ones(4)), ShapeError);
  EXPECT_THROW(apply_smoothing(Tensor({2, 4}), Tensor({2, 4}), SmoothingFactor::ones(3)), ShapeError);
  EXPECT_THROW(smooth_input(Tensor({2, 3}), SmoothingFactor::ones(2)), ShapeError);
}

TEST(Fold, IdentityProducer) {
  const FoldResult r = fold_smoothing(Tensor::identity(2), SmoothingFactor{{2, 4}, std::nullopt});
  ASSERT_FALSE(r.on_the_fly());
  EXPECT_EQ(*r.producer, Tensor::diag(std::vector<double>{0.5, 0.25}));
}

TEST(Fold, NoProducerMeansOnTheFly) { EXPECT_TRUE(fold_smoothing(std::nullopt, SmoothingFactor::ones(3)).on_the_fly()); }

TEST(Fold, CompositionMatchesOriginalChain) {
  std::mt19937_64 rng(38);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor x = random_tensor(rng, {7, 5});
    const Tensor p = random_tensor(rng, {6, 5});  // producer 5 → 6
    const Tensor w = random_tensor(rng, {3, 6});  // consumer 6 → 3
    const Tensor pb_t = random_tensor(rng, {6});
    const std::vector<double> pb(pb_t.values().begin(), pb_t.values().end());
    const SmoothingFactor s{testing::random_positive(rng, 6, 1e-2, 1e2), std::nullopt};
    const FoldResult folded = fold_smoothing(p, s);
    const std::vector<double> fb = fold_bias(pb, s);
    Tensor h = testing::naive_matmul_nt(x, *folded.producer);
    Tensor h_ref = testing::naive_matmul_nt(x, p);
    for (std::size_t r = 0; r < 7; ++r) {
      for (std::size_t c = 0; c < 6; ++c) {
        h(r, c) += fb[c];
        h_ref(r, c) += pb[c];
      }
    }
    const Tensor y = testing::naive_matmul_nt(h, scale_columns(w, s.s));
    EXPECT_LT(testing::rel_frobenius_diff(y, testing::naive_matmul_nt(h_ref, w)), 1e-9);
  }
}

TEST(Fold, Errors) {
  EXPECT_THROW(fold_smoothing(Tensor({3, 2}), SmoothingFactor::ones(2)), ShapeError);
  EXPECT_THROW(fold_bias(std::vector<double>{1, 2}, SmoothingFactor::ones(3)), ShapeError);
}

TEST(Absmax, EmptyTraceRejected) { EXPECT_THROW(collect_absmax(Tensor()), ArgumentError); }

}  // namespace
}  // namespace tasq
