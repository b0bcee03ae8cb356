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

// Training-free low-rank compensation of weight quantization error.
//
// For a smoothed weight W (N×C) the optimizer alternates
//   q      ← Q(W − B·Aᵀ)              per-input-channel quantization
//   R      ← W − dequant(q)
//   (A, B) ← rank-r truncated SVD of R, A = V·diag(σ) (C×r), B = U (N×r)
// starting from A = B = 0, and keeps the iterate with the smallest
// ‖W − dequant(q) − B·Aᵀ‖_F.

#ifndef TASQ_LOWRANK_HPP_
#define TASQ_LOWRANK_HPP_

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tasq/quantizer.hpp"
#include "tasq/smoothing.hpp"
#include "tasq/tensor.hpp"

namespace tasq {

struct CompensationConfig {
  std::size_t rank = 32;
  std::size_t iterations = 10;
  int weight_bits = 4;
  // Stop once consecutive residuals differ by at most this fraction.
  double early_stop_rel = 1e-10;

  void validate() const;
};

struct CompensatedWeight {
  // Empty when the weight bitwidth is the pass-through value.
  std::optional<QuantizedTensor> q_w;
  Tensor dequantized;  // N×C
  Tensor a;            // C×r, singular values absorbed
  Tensor b;            // N×r
  std::vector<double> residual_history;
  std::size_t best_iteration = 0;  // index into residual_history
  // ‖W − dequant(Q(W))‖_F, the uncompensated residual.
  double quantization_residual = 0.0;
  // Factor already applied to the weight handed to the optimizer.
  SmoothingFactor smoothing;
  std::vector<std::string> warnings;

  std::size_t rank() const noexcept { return a.rank() == 2 ? a.cols() : 0; }
  double best_residual() const { return residual_history.at(best_iteration); }
  // B·Aᵀ, laid out like the weight (N×C).
  Tensor low_rank() const { return matmul_nt(b, a); }
  Tensor reconstruct() const { return add(dequantized, low_rank()); }
};

CompensatedWeight alternating_optimize(const Tensor& w_s, const CompensationConfig& cfg,
                                       SmoothingFactor smoothing = {});

// Deployed output for raw inputs x (rows×C):
//   Q(x·diag(s)⁻¹)·dequant(q)ᵀ + (Q(x·diag(s)⁻¹)·A)·Bᵀ + bias.
// `a` and `b` come from the smoothed weight, so the diag(s) of the weight
// path is already inside them. An empty bias span means no bias.
Tensor compensated_forward(const Tensor& x, const CompensatedWeight& cw, int act_bits,
                           std::span<const double> bias = {});

}  // namespace tasq

#endif  // TASQ_LOWRANK_HPP_
