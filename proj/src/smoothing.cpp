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

#include "tasq/smoothing.hpp"

#include <algorithm>
#include <cmath>

#include "tasq/errors.hpp"

namespace tasq {

ActivationTrace::ActivationTrace(Tensor x, std::string layer_id) : x_(std::move(x)), layer_id_(std::move(layer_id)) {
  if (x_.rank() != 4) {
    throw ShapeError("activation trace for '" + layer_id_ + "' must be B×T×L×C, got " + shape_to_string(x_.shape()));
  }
  absmax_ = collect_absmax(x_);
}

Tensor slice_timestep(const Tensor& x, std::size_t t) {
  if (x.rank() != 4) throw ShapeError("slice_timestep: expected a B×T×L×C tensor, got " + shape_to_string(x.shape()));
  const auto& sh = x.shape();
  const std::size_t b_count = sh[0], t_count = sh[1], l_count = sh[2], c = sh[3];
  if (t >= t_count) throw ShapeError("timestep " + std::to_string(t) + " out of range");
  Tensor out({b_count * l_count, c});
  auto dst = out.values();
  const auto src = x.values();
  const std::size_t block = l_count * c;
  for (std::size_t b = 0; b < b_count; ++b) {
    const auto from = src.subspan((b * t_count + t) * block, block);
    std::copy(from.begin(), from.end(), dst.begin() + static_cast<std::ptrdiff_t>(b * block));
  }
  return out;
}

Tensor ActivationTrace::timestep_slice(std::size_t t) const { return slice_timestep(x_, t); }

std::vector<double> collect_absmax(const Tensor& x) {
  if (x.empty()) throw ArgumentError("collect_absmax: empty trace");
  const std::size_t c = x.shape().back();
  std::vector<double> a(c, 0.0);
  const auto values = x.values();
  for (std::size_t i = 0; i < values.size(); ++i) a[i % c] = std::max(a[i % c], std::fabs(values[i]));
  return a;
}

std::vector<double> merge_absmax(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("merge_absmax: channel counts differ");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::max(a[i], b[i]);
  return out;
}

std::vector<double> weight_absmax(const Tensor& w) {
  if (w.rank() != 2) throw ShapeError("weight_absmax: expected an N×C matrix, got " + shape_to_string(w.shape()));
  return collect_absmax(w);
}

std::vector<double> SmoothingFactor::reciprocal() const {
  std::vector<double> out(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) out[i] = 1.0 / s[i];
  return out;
}

SmoothingFactor compute_tas_factor(std::span<const double> a, std::span<const double> b, double alpha) {
  if (a.size() != b.size()) {
    throw ShapeError("compute_tas_factor: " + std::to_string(a.size()) + " activation channels vs " +
                     std::to_string(b.size()) + " weight channels");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ArgumentError("compute_tas_factor: alpha must lie in [0, 1]");
  SmoothingFactor f{std::vector<double>(a.size()), alpha};
  for (std::size_t c = 0; c < a.size(); ++c) {
    f.s[c] = std::pow(std::max(a[c], kSmoothingFloor), alpha) / std::pow(std::max(b[c], kSmoothingFloor), 1.0 - alpha);
  }
  return f;
}

SmoothedPair apply_smoothing(const Tensor& x, const Tensor& w, const SmoothingFactor& s) {
  if (w.rank() != 2 || x.rank() == 0 || x.shape().back() != w.cols() || s.s.size() != w.cols()) {
    throw ShapeError("apply_smoothing: channel counts disagree (x " + shape_to_string(x.shape()) + ", w " +
                     shape_to_string(w.shape()) + ", s " + std::to_string(s.s.size()) + ")");
  }
  return {smooth_input(x, s), scale_columns(w, s.s)};
}

Tensor smooth_input(const Tensor& x, const SmoothingFactor& s) {
  if (x.rank() == 0 || x.shape().back() != s.s.size()) {
    throw ShapeError("smooth_input: " + shape_to_string(x.shape()) + " does not end in " +
                     std::to_string(s.s.size()) + " channels");
  }
  Tensor out = x;
  auto values = out.values();
  const std::size_t c = s.s.size();
  for (std::size_t i = 0; i < values.size(); ++i) values[i] /= s.s[i % c];
  return out;
}

FoldResult fold_smoothing(const std::optional<Tensor>& producer_w, const SmoothingFactor& s) {
  if (!producer_w) return {};
  if (producer_w->rank() != 2 || producer_w->rows() != s.s.size()) {
    throw ShapeError("fold_smoothing: producer " + shape_to_string(producer_w->shape()) + " has no " +
                     std::to_string(s.s.size()) + " output rows");
  }
  return {scale_rows(*producer_w, s.reciprocal())};
}

std::vector<double> fold_bias(std::span<const double> bias, const SmoothingFactor& s) {
  if (bias.size() != s.s.size()) throw ShapeError("fold_bias: bias length does not match smoothing factor");
  std::vector<double> out(bias.size());
  for (std::size_t i = 0; i < bias.size(); ++i) out[i] = bias[i] / s.s[i];
  return out;
}

}  // namespace tasq
