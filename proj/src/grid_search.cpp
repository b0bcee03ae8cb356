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

#include "tasq/grid_search.hpp"

#include "tasq/errors.hpp"
#include "tasq/parallel.hpp"

namespace tasq {

void GridSearchConfig::validate() const {
  if (grid_points < 2) throw ArgumentError("grid_points must be >= 2");
  validate_bits(weight_bits, /*allow_pass_through=*/true);
  validate_bits(act_bits, /*allow_pass_through=*/true);
  if (use_compensation) compensation.validate();
}

std::vector<double> GridSearchConfig::alphas() const {
  const double step = 1.0 / static_cast<double>(grid_points - 1);
  std::vector<double> out(grid_points);
  for (std::size_t m = 0; m < grid_points; ++m) out[m] = static_cast<double>(m) * step;
  out.back() = 1.0;
  return out;
}

double layer_loss(const ActivationTrace& trace, const Tensor& w, std::span<const double> bias,
                  const SmoothingFactor& s, const GridSearchConfig& cfg, ReferenceOutputs reference) {
  cfg.validate();
  if (w.rank() != 2 || w.cols() != trace.channels()) {
    throw ShapeError("layer_loss: weight " + shape_to_string(w.shape()) + " does not consume " +
                     std::to_string(trace.channels()) + " channels");
  }
  if (!bias.empty() && bias.size() != w.rows()) throw ShapeError("layer_loss: bias length does not match weight rows");
  if (s.s.size() != trace.channels()) throw ShapeError("layer_loss: smoothing factor length mismatch");
  if (reference.y) {
    const Shape expected{trace.batch(), trace.timesteps(), trace.tokens(), w.rows()};
    if (reference.y->shape() != expected) {
      throw ShapeError("layer_loss: stored outputs " + shape_to_string(reference.y->shape()) + ", expected " +
                       shape_to_string(expected));
    }
  }

  const Tensor w_s = scale_columns(w, s.s);
  Tensor w_q;
  if (cfg.use_compensation) {
    CompensationConfig comp = cfg.compensation;
    comp.weight_bits = cfg.weight_bits;
    w_q = alternating_optimize(w_s, comp).reconstruct();
  } else {
    w_q = fake_quant_weight(w_s, cfg.weight_bits, cfg.weight_granularity);
  }

  double loss = 0.0;
  for (std::size_t t = 0; t < trace.timesteps(); ++t) {
    const Tensor x = trace.timestep_slice(t);
    Tensor y_ref = reference.y ? slice_timestep(*reference.y, t) : matmul_nt(x, w);
    Tensor y_q = matmul_nt(fake_quant_activation(smooth_input(x, s), cfg.act_bits), w_q);
    if (!bias.empty()) {
      if (!reference.y) y_ref = add_row_vector(y_ref, bias);
      y_q = add_row_vector(y_q, bias);
    }
    loss += squared_frobenius_norm(subtract(y_q, y_ref));
  }
  return loss;
}

GridSearchResult grid_search_layer(const ActivationTrace& trace, const Tensor& w, std::span<const double> bias,
                                   const GridSearchConfig& cfg) {
  cfg.validate();
  if (w.rank() != 2 || w.cols() != trace.channels()) {
    throw ShapeError("grid_search_layer: weight " + shape_to_string(w.shape()) + " vs trace with " +
                     std::to_string(trace.channels()) + " channels");
  }
  const std::vector<double> act_max = trace.absmax();
  const std::vector<double> w_max = weight_absmax(w);
  const std::vector<double> alphas = cfg.alphas();

  GridSearchConfig inner = cfg;
  inner.workers = 1;
  std::vector<SmoothingFactor> factors(alphas.size());
  std::vector<double> losses(alphas.size());
  parallel_for(alphas.size(), cfg.workers, [&](std::size_t m) {
    factors[m] = compute_tas_factor(act_max, w_max, alphas[m]);
    losses[m] = layer_loss(trace, w, bias, factors[m], inner);
  });

  GridSearchResult result;
  result.layer_id = trace.layer_id();
  std::size_t best = 0;
  for (std::size_t m = 0; m < alphas.size(); ++m) {
    result.loss_curve.emplace_back(alphas[m], losses[m]);
    if (losses[m] < losses[best]) best = m;  // strict: ties keep the smaller α
  }
  result.best_alpha = alphas[best];
  result.best_loss = losses[best];
  result.best_factor = factors[best];
  result.baseline_loss = layer_loss(trace, w, bias, SmoothingFactor::ones(trace.channels()), inner);
  return result;
}

std::vector<GridSearchResult> grid_search_model(std::span<const LayerCalibration> layers, const GridSearchConfig& cfg) {
  if (layers.empty()) throw ArgumentError("grid_search_model: no layers");
  std::vector<GridSearchResult> results;
  results.reserve(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerCalibration& layer = layers[i];
    const std::string id = layer.trace ? layer.trace->layer_id() : "#" + std::to_string(i);
    try {
      if (!layer.trace || !layer.weight) throw ArgumentError("missing trace or weight");
      results.push_back(grid_search_layer(*layer.trace, *layer.weight, layer.bias, cfg));
    } catch (const std::exception& e) {
      throw LayerError(id, e.what());
    }
  }
  return results;
}

}  // namespace tasq
