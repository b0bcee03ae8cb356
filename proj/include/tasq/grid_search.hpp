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

// Layer-wise search of the smoothing exponent.
//
// For every α on a uniform grid over [0, 1] the layer loss
//   L(α) = Σ_t ‖Q(X_t·diag(s)⁻¹)·Q(W·diag(s))ᵀ + bias − (X_t·Wᵀ + bias)‖²_F
// is evaluated with s = s(α) from the smoothing statistics, and the
// smallest α attaining the minimum is kept.

#ifndef TASQ_GRID_SEARCH_HPP_
#define TASQ_GRID_SEARCH_HPP_

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tasq/lowrank.hpp"
#include "tasq/quantizer.hpp"
#include "tasq/smoothing.hpp"
#include "tasq/tensor.hpp"

namespace tasq {

struct GridSearchConfig {
  std::size_t grid_points = 21;
  int weight_bits = 4;
  int act_bits = 8;
  // Evaluate the weight path with low-rank compensation (ablation mode).
  bool use_compensation = false;
  WeightGranularity weight_granularity = WeightGranularity::kPerInputChannel;
  // Used only when use_compensation is set; its weight_bits is overridden.
  CompensationConfig compensation;
  // Threads for grid points (0 = hardware concurrency).
  std::size_t workers = 1;

  void validate() const;
  // α_m = m · (1 / (grid_points − 1)), so 21 points give 0.05·m exactly.
  std::vector<double> alphas() const;
};

struct GridSearchResult {
  std::string layer_id;
  double best_alpha = 0.0;
  double best_loss = 0.0;
  SmoothingFactor best_factor;
  std::vector<std::pair<double, double>> loss_curve;  // (α, loss)
  // Loss with s = 1 (no smoothing), reported alongside the grid.
  double baseline_loss = 0.0;
};

// Outputs of a layer recorded next to its inputs, shaped B×T×L×N.
// When supplied they replace the recomputed reference X_t·Wᵀ + bias.
struct ReferenceOutputs {
  const Tensor* y = nullptr;
};

double layer_loss(const ActivationTrace& trace, const Tensor& w, std::span<const double> bias,
                  const SmoothingFactor& s, const GridSearchConfig& cfg, ReferenceOutputs reference = {});

GridSearchResult grid_search_layer(const ActivationTrace& trace, const Tensor& w, std::span<const double> bias,
                                   const GridSearchConfig& cfg);

struct LayerCalibration {
  const ActivationTrace* trace = nullptr;
  const Tensor* weight = nullptr;
  std::span<const double> bias;
};

// Independent per-layer searches, results in input order. Failures are
// rethrown as LayerError carrying the trace's layer id.
std::vector<GridSearchResult> grid_search_model(std::span<const LayerCalibration> layers, const GridSearchConfig& cfg);

}  // namespace tasq

#endif  // TASQ_GRID_SEARCH_HPP_
