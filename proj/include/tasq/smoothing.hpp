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

// Temporal-aggregated activation smoothing.
//
// A linear layer Y = X·Wᵀ (W is N×C) is rewritten as
//   Y = (X·diag(s)⁻¹)·(W·diag(s))ᵀ
// with s_c = max(a_c, ε)^α / max(b_c, ε)^(1−α), where a_c is the absolute
// maximum of input channel c over every calibration sample, timestep and
// token, and b_c the absolute maximum of weight column c. The rewrite is
// exact in full precision; it only changes how hard each side is to
// quantize.

#ifndef TASQ_SMOOTHING_HPP_
#define TASQ_SMOOTHING_HPP_

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tasq/tensor.hpp"

namespace tasq {

inline constexpr double kSmoothingFloor = 1e-8;

// Rows of a B×T×L×C tensor at timestep t as a (B·L)×C matrix, batch-major.
Tensor slice_timestep(const Tensor& x, std::size_t t);

// Recorded inputs of one linear layer, shaped B×T×L×C.
class ActivationTrace {
 public:
  ActivationTrace() = default;
  // Throws ShapeError unless `x` is 4-D.
  ActivationTrace(Tensor x, std::string layer_id);

  const Tensor& x() const noexcept { return x_; }
  const std::string& layer_id() const noexcept { return layer_id_; }
  const std::vector<double>& absmax() const noexcept { return absmax_; }

  std::size_t batch() const noexcept { return x_.shape()[0]; }
  std::size_t timesteps() const noexcept { return x_.shape()[1]; }
  std::size_t tokens() const noexcept { return x_.shape()[2]; }
  std::size_t channels() const noexcept { return x_.shape()[3]; }

  // Inputs at timestep t as a (B·L)×C matrix, batch-major.
  Tensor timestep_slice(std::size_t t) const;

 private:
  Tensor x_;
  std::string layer_id_;
  std::vector<double> absmax_;
};

// a_c = max |x[..., c]| over every leading index. Throws ArgumentError on
// an empty tensor.
std::vector<double> collect_absmax(const Tensor& x);
inline std::vector<double> collect_absmax(const ActivationTrace& trace) { return collect_absmax(trace.x()); }
// Element-wise max; combines statistics gathered over disjoint shards.
std::vector<double> merge_absmax(std::span<const double> a, std::span<const double> b);

// b_c = max_n |W[n, c]|.
std::vector<double> weight_absmax(const Tensor& w);

struct SmoothingFactor {
  std::vector<double> s;
  // Exponent that produced `s`; empty for hand-made factors such as ones.
  std::optional<double> alpha;

  static SmoothingFactor ones(std::size_t channels) { return {std::vector<double>(channels, 1.0), std::nullopt}; }
  std::vector<double> reciprocal() const;
};

SmoothingFactor compute_tas_factor(std::span<const double> a, std::span<const double> b, double alpha);

struct SmoothedPair {
  Tensor x;  // input with channel c divided by s_c
  Tensor w;  // weight with column c multiplied by s_c
};
SmoothedPair apply_smoothing(const Tensor& x, const Tensor& w, const SmoothingFactor& s);
// X·diag(s)⁻¹ for an input whose last axis is the channel axis.
Tensor smooth_input(const Tensor& x, const SmoothingFactor& s);

// Result of moving diag(s)⁻¹ out of the consumer. With a producer the
// division is baked into its output rows; otherwise the consumer divides
// its input on every forward call.
struct FoldResult {
  std::optional<Tensor> producer;
  bool on_the_fly() const noexcept { return !producer.has_value(); }
};
FoldResult fold_smoothing(const std::optional<Tensor>& producer_w, const SmoothingFactor& s);
// Producer bias must be divided alongside its rows.
std::vector<double> fold_bias(std::span<const double> bias, const SmoothingFactor& s);

}  // namespace tasq

#endif  // TASQ_SMOOTHING_HPP_
