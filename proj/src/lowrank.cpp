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

#include "tasq/lowrank.hpp"

#include <algorithm>
#include <cmath>

#include "tasq/errors.hpp"

namespace tasq {

void CompensationConfig::validate() const {
  if (rank < 1) throw ArgumentError("compensation rank must be >= 1");
  if (iterations < 1) throw ArgumentError("compensation iterations must be >= 1");
  validate_bits(weight_bits, /*allow_pass_through=*/true);
  if (!(early_stop_rel >= 0.0)) throw ArgumentError("early_stop_rel must be non-negative");
}

CompensatedWeight alternating_optimize(const Tensor& w_s, const CompensationConfig& cfg, SmoothingFactor smoothing) {
  cfg.validate();
  if (w_s.rank() != 2) throw ShapeError("alternating_optimize: expected an N×C weight, got " + shape_to_string(w_s.shape()));
  if (!w_s.all_finite()) throw ArgumentError("alternating_optimize: weight has non-finite entries");
  const std::size_t n = w_s.rows(), c = w_s.cols();

  CompensatedWeight out;
  out.smoothing = std::move(smoothing);
  const std::size_t rank = std::min({cfg.rank, n, c});
  if (rank < cfg.rank) {
    out.warnings.push_back("rank " + std::to_string(cfg.rank) + " clamped to " + std::to_string(rank));
  }

  if (is_pass_through(cfg.weight_bits)) {
    out.dequantized = w_s;
    out.a = Tensor({c, rank});
    out.b = Tensor({n, rank});
    out.residual_history = {0.0};
    return out;
  }

  Tensor low_rank({n, c});
  double best = 0.0;
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    QuantizedTensor q = quantize_weight_per_input_channel(subtract(w_s, low_rank), cfg.weight_bits);
    Tensor deq = dequantize(q);
    const Tensor residual = subtract(w_s, deq);
    if (it == 0) out.quantization_residual = frobenius_norm(residual);

    SvdResult svd = truncated_svd(residual, rank);
    Tensor a = scale_columns(svd.v, svd.singular_values);
    low_rank = matmul_nt(svd.u, a);
    const double res = frobenius_norm(subtract(residual, low_rank));
    out.residual_history.push_back(res);

    if (it == 0 || res < best) {
      best = res;
      out.best_iteration = it;
      out.q_w = std::move(q);
      out.dequantized = std::move(deq);
      out.a = std::move(a);
      out.b = std::move(svd.u);
    }
    if (res == 0.0) break;
    if (it > 0) {
      const double prev = out.residual_history[it - 1];
      if (std::fabs(prev - res) <= cfg.early_stop_rel * prev) break;
    }
  }
  return out;
}

Tensor compensated_forward(const Tensor& x, const CompensatedWeight& cw, int act_bits, std::span<const double> bias) {
  if (x.rank() != 2 || x.cols() != cw.dequantized.cols()) {
    throw ShapeError("compensated_forward: input " + shape_to_string(x.shape()) + " does not match weight " +
                     shape_to_string(cw.dequantized.shape()));
  }
  const Tensor smoothed = cw.smoothing.s.empty() ? x : smooth_input(x, cw.smoothing);
  const Tensor xq = fake_quant_activation(smoothed, act_bits);
  Tensor y = add(matmul_nt(xq, cw.dequantized), matmul_nt(matmul(xq, cw.a), cw.b));
  return bias.empty() ? y : add_row_vector(y, bias);
}

}  // namespace tasq
