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

#include "tasq/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tasq/errors.hpp"

namespace tasq {

void validate_bits(int bits, bool allow_pass_through) {
  if (allow_pass_through && is_pass_through(bits)) return;
  if (bits < kMinBits || bits > kMaxBits) {
    throw ArgumentError("bitwidth " + std::to_string(bits) + " outside [" + std::to_string(kMinBits) + ", " +
                        std::to_string(kMaxBits) + "]" + (allow_pass_through ? " and not 32" : ""));
  }
}

void QuantParams::validate() const {
  validate_bits(bits);
  if (!(scale > 0.0) || !std::isfinite(scale)) throw ArgumentError("quantization scale must be positive and finite");
  if (zero_point < 0 || zero_point > max_code()) {
    throw ArgumentError("zero-point " + std::to_string(zero_point) + " outside code range");
  }
}

int QuantizedTensor::bits() const {
  if (const auto* p = std::get_if<QuantParams>(&params)) return p->bits;
  const auto& channels = std::get<ChannelQuantParams>(params).per_channel;
  return channels.empty() ? 0 : channels.front().bits;
}

double snap_scale(double scale) noexcept {
  int exponent = 0;
  const double mantissa = std::frexp(scale, &exponent);
  return std::ldexp(std::floor(std::ldexp(mantissa, kScaleMantissaBits)), exponent - kScaleMantissaBits);
}

namespace {

// Next smaller value with kScaleMantissaBits significant bits.
double step_down(double snapped) noexcept {
  int exponent = 0;
  const double mantissa = std::frexp(snapped, &exponent);
  return std::ldexp(std::ldexp(mantissa, kScaleMantissaBits) - 1.0, exponent - kScaleMantissaBits);
}

}  // namespace

QuantParams compute_params(std::span<const double> values, int bits) {
  validate_bits(bits);
  if (values.empty()) throw ArgumentError("compute_params: empty input");
  if (!std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); })) {
    throw ArgumentError("compute_params: non-finite input");
  }
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = std::min(*lo_it, 0.0);
  const double hi = std::max(*hi_it, 0.0);

  const double levels = static_cast<double>((1 << bits) - 1);
  const double raw = (hi - lo) / levels;
  double scale = snap_scale(std::max(raw, kScaleFloor));
  auto zero_point = [&](double s) { return std::clamp(round_half_away(-lo / s), 0.0, levels); };
  double z = zero_point(scale);
  // The minimum always lands on code 0. Rounding in `raw` can leave the
  // maximum one code short of the top, which would shrink the range of the
  // dequantized tensor; a slightly smaller scale fixes that.
  if (raw >= kScaleFloor) {
    for (int guard = 0; guard < 8 && round_half_away(hi / scale) + z < levels; ++guard) {
      scale = step_down(scale);
      z = zero_point(scale);
    }
  }
  return QuantParams{scale, static_cast<std::int32_t>(z), bits};
}

std::int32_t quantize_value(double x, const QuantParams& p) noexcept {
  const double code = round_half_away(x / p.scale) + static_cast<double>(p.zero_point);
  return static_cast<std::int32_t>(std::clamp(code, 0.0, static_cast<double>(p.max_code())));
}

QuantizedTensor quantize(const Tensor& x, const QuantParams& p) {
  p.validate();
  QuantizedTensor q{x.shape(), std::vector<std::uint8_t>(x.size()), p, std::nullopt};
  for (std::size_t i = 0; i < x.size(); ++i) q.codes[i] = static_cast<std::uint8_t>(quantize_value(x[i], p));
  return q;
}

Tensor dequantize(const QuantizedTensor& q) {
  Tensor out(q.shape);
  if (q.codes.size() != out.size()) throw ShapeError("dequantize: code count does not match shape");
  if (const auto* p = std::get_if<QuantParams>(&q.params)) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = dequantize_value(q.codes[i], *p);
    return out;
  }
  const auto& channels = std::get<ChannelQuantParams>(q.params).per_channel;
  if (q.shape.size() != 2 || q.axis != std::size_t{1} || channels.size() != q.shape[1]) {
    throw ShapeError("dequantize: per-channel params must index axis 1 of a matrix");
  }
  const std::size_t cols = q.shape[1];
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = dequantize_value(q.codes[i], channels[i % cols]);
  return out;
}

QuantizedTensor quantize_weight_per_input_channel(const Tensor& w, int bits) {
  if (w.rank() != 2) throw ShapeError("per-input-channel quantization needs an N×C matrix, got " + shape_to_string(w.shape()));
  const std::size_t n = w.rows(), c = w.cols();
  ChannelQuantParams channels;
  channels.per_channel.reserve(c);
  for (std::size_t j = 0; j < c; ++j) channels.per_channel.push_back(compute_params(w.column(j), bits));

  QuantizedTensor q{w.shape(), std::vector<std::uint8_t>(w.size()), ChannelQuantParams{}, std::size_t{1}};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      q.codes[i * c + j] = static_cast<std::uint8_t>(quantize_value(w(i, j), channels.per_channel[j]));
    }
  }
  q.params = std::move(channels);
  return q;
}

QuantizedTensor quantize_weight_per_tensor(const Tensor& w, int bits) {
  if (w.rank() != 2) throw ShapeError("weight quantization needs an N×C matrix, got " + shape_to_string(w.shape()));
  return quantize(w, compute_params(w.values(), bits));
}

Tensor fake_quant_activation(const Tensor& x, int bits) {
  validate_bits(bits, /*allow_pass_through=*/true);
  if (is_pass_through(bits)) return x;
  const QuantParams p = compute_params(x.values(), bits);
  Tensor out = x;
  for (double& v : out.values()) v = fake_quant_value(v, p);
  return out;
}

Tensor fake_quant_weight(const Tensor& w, int bits, WeightGranularity granularity) {
  validate_bits(bits, /*allow_pass_through=*/true);
  if (is_pass_through(bits)) return w;
  return dequantize(granularity == WeightGranularity::kPerTensor ? quantize_weight_per_tensor(w, bits)
                                                                 : quantize_weight_per_input_channel(w, bits));
}

const char* to_string(WeightGranularity g) noexcept {
  return g == WeightGranularity::kPerTensor ? "per_tensor" : "per_input_channel";
}

WeightGranularity parse_granularity(std::string_view name) {
  if (name == "per_tensor") return WeightGranularity::kPerTensor;
  if (name == "per_input_channel") return WeightGranularity::kPerInputChannel;
  throw ArgumentError("unknown weight granularity '" + std::string(name) + "'");
}

}  // namespace tasq
