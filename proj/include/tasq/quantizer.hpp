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

#ifndef TASQ_QUANTIZER_HPP_
#define TASQ_QUANTIZER_HPP_

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "tasq/tensor.hpp"

namespace tasq {

inline constexpr int kMinBits = 2;
inline constexpr int kMaxBits = 8;
// Bitwidth that disables quantization altogether (full-precision path).
inline constexpr int kPassThroughBits = 32;
// Floor applied to the scale when the observed range is degenerate.
inline constexpr double kScaleFloor = 1e-8;

inline bool is_pass_through(int bits) noexcept { return bits == kPassThroughBits; }
// Throws ArgumentError unless bits is in [kMinBits, kMaxBits] (or the
// pass-through value when `allow_pass_through`).
void validate_bits(int bits, bool allow_pass_through = false);

// Round half away from zero.
inline double round_half_away(double x) noexcept { return std::round(x); }

// One affine grid: x̂ = scale · (code − zero_point), code ∈ [0, 2^bits − 1].
struct QuantParams {
  double scale = 1.0;
  std::int32_t zero_point = 0;
  int bits = 8;

  std::int32_t max_code() const noexcept { return (std::int32_t{1} << bits) - 1; }
  // Real interval [scale·(0 − z), scale·(max_code − z)] reachable on the grid.
  double range_min() const noexcept { return scale * (0.0 - zero_point); }
  double range_max() const noexcept { return scale * static_cast<double>(max_code() - zero_point); }
  void validate() const;

  friend bool operator==(const QuantParams&, const QuantParams&) = default;
};

struct ChannelQuantParams {
  std::vector<QuantParams> per_channel;
  friend bool operator==(const ChannelQuantParams&, const ChannelQuantParams&) = default;
};

// Integer codes plus the grid(s) they live on. `axis` names the dimension
// indexed by per-channel params and is empty for per-tensor params.
struct QuantizedTensor {
  Shape shape;
  std::vector<std::uint8_t> codes;
  std::variant<QuantParams, ChannelQuantParams> params;
  std::optional<std::size_t> axis;

  int bits() const;
};

enum class WeightGranularity { kPerTensor, kPerInputChannel };

// Significant bits kept in a scale. With at most 8 code bits every product
// scale·(code − z) is exact, so re-quantizing a dequantized tensor with
// params recomputed from it reproduces it bit for bit.
inline constexpr int kScaleMantissaBits = 40;

// Rounds a positive scale down to kScaleMantissaBits significant bits.
double snap_scale(double scale) noexcept;

// Scale and zero-point from the range [min, max] of `values` extended to
// contain zero:
//   s = snap(max((max − min) / (2^b − 1), kScaleFloor)),
// lowered by one unit of its last kept bit if the maximum would otherwise
// miss code 2^b − 1,
//   z = clamp(round(−min / s), 0, 2^b − 1).
QuantParams compute_params(std::span<const double> values, int bits);

std::int32_t quantize_value(double x, const QuantParams& p) noexcept;
inline double dequantize_value(std::int32_t code, const QuantParams& p) noexcept {
  return p.scale * static_cast<double>(code - p.zero_point);
}
// Q(x) = dequantize(quantize(x)).
inline double fake_quant_value(double x, const QuantParams& p) noexcept {
  return dequantize_value(quantize_value(x, p), p);
}

QuantizedTensor quantize(const Tensor& x, const QuantParams& p);
Tensor dequantize(const QuantizedTensor& q);

// Column c of the N×C matrix gets params computed from column c alone.
QuantizedTensor quantize_weight_per_input_channel(const Tensor& w, int bits);
QuantizedTensor quantize_weight_per_tensor(const Tensor& w, int bits);

// Dynamic per-tensor quantize-dequantize with params taken from `x`.
Tensor fake_quant_activation(const Tensor& x, int bits);
// Quantize-dequantize of a weight matrix at the given granularity.
Tensor fake_quant_weight(const Tensor& w, int bits, WeightGranularity granularity);

const char* to_string(WeightGranularity g) noexcept;
WeightGranularity parse_granularity(std::string_view name);

}  // namespace tasq

#endif  // TASQ_QUANTIZER_HPP_
