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

// End-to-end harness on a synthetic chain of linear layers.
//
// Inputs follow a diffusion forward process: for each calibration sample a
// clean signal x_0 ~ N(0, I) is drawn, outlier channels of the first layer
// are amplified, and every timestep sees
//   x_t = sqrt(ᾱ_t)·x_0 + sqrt(1 − ᾱ_t)·ε_t,   ε_t ~ N(0, I).
// Deeper layers get their outliers from a per-channel input gain, the way
// normalization affines produce them in transformer blocks. The weight
// column that consumes an outlier channel of magnitude m is scaled by
// m^(−outlier_weight_damping).

#ifndef TASQ_PIPELINE_HPP_
#define TASQ_PIPELINE_HPP_

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tasq/grid_search.hpp"
#include "tasq/lowrank.hpp"
#include "tasq/quantizer.hpp"
#include "tasq/smoothing.hpp"
#include "tasq/tensor.hpp"

namespace tasq {

// Seed of the shipped reference configuration.
inline constexpr std::uint64_t kReferenceSeed = 20240917;
// Minimum relative end-to-end MSE reduction each ablation stage must
// deliver on the reference configuration.
inline constexpr double kAblationMinRelativeGain = 0.05;

struct LayerSpec {
  std::size_t out_channels = 0;  // N
  std::size_t in_channels = 0;   // C
  bool has_bias = true;
  // Index of the layer whose output rows can absorb this layer's smoothing.
  std::optional<std::size_t> producer;
};

struct OutlierSpec {
  std::size_t layer = 0;
  std::size_t channel = 0;
  double magnitude = 1.0;
  friend bool operator==(const OutlierSpec&, const OutlierSpec&) = default;
};

struct ToyModelSpec {
  std::vector<LayerSpec> layers;
  std::size_t tokens = 16;
  std::size_t timesteps = 50;
  std::size_t calib_batch = 12;
  std::size_t heldout_batch = 4;
  std::uint64_t seed = kReferenceSeed;
  std::vector<OutlierSpec> outliers;
  std::vector<double> noise_schedule;  // ᾱ_t, length timesteps
  double outlier_weight_damping = 0.5;

  // Throws ArgumentError / ShapeError naming the offending field.
  void validate() const;

  // Chain of `layers` square layers, each linked to its predecessor.
  static ToyModelSpec chain(std::size_t layers, std::size_t channels, std::size_t tokens, std::size_t timesteps);
  // 3 × (64→64), L = 16, T = 50, B = 12 + 4, outliers ×100 and ×10 on two
  // channels of every layer.
  static ToyModelSpec reference();
};

// ᾱ_t of the linear β schedule (1e-4 → 0.02 over 1000 steps) sampled at
// `timesteps` evenly spaced steps.
std::vector<double> linear_noise_schedule(std::size_t timesteps);

struct LinearLayer {
  std::string id;
  Tensor weight;                  // N×C
  std::vector<double> bias;       // empty or N
  std::vector<double> input_gain; // C, applied to the input before the product
  std::optional<std::size_t> producer;
};

struct ToyModel {
  std::vector<LinearLayer> layers;

  // Full-precision forward of a (rows)×C0 input. Returns every layer's
  // input followed by the final output.
  std::vector<Tensor> forward_all(const Tensor& input) const;
};

// Raw network input plus the input of every layer, all B×T×L×C.
struct TraceSet {
  Tensor input;
  std::vector<ActivationTrace> layer_inputs;
  Tensor output;  // B×T×L×N of the last layer
  std::uint64_t fingerprint = 0;  // FNV-1a of the raw input payload
};

struct GeneratedData {
  ToyModel model;
  TraceSet calibration;
  TraceSet heldout;
};

// Deterministic in spec.seed. Calibration and held-out inputs come from
// disjoint seed streams.
GeneratedData generate_traces(const ToyModelSpec& spec);
// Seeds of the calibration and held-out input streams derived from
// spec.seed. They differ for every seed.
std::uint64_t calibration_stream_seed(std::uint64_t seed) noexcept;
std::uint64_t heldout_stream_seed(std::uint64_t seed) noexcept;
// Inputs only (B×T×L×C0) for `batch` samples from the given stream.
Tensor generate_inputs(const ToyModelSpec& spec, std::size_t batch, std::uint64_t stream_seed);
// Propagates a raw input through the model in full precision.
TraceSet propagate(const ToyModel& model, Tensor input);

enum class Variant { kLinearQuant, kTas, kGridSearch, kCompensation };
inline constexpr std::array<Variant, 4> kAllVariants{Variant::kLinearQuant, Variant::kTas, Variant::kGridSearch,
                                                     Variant::kCompensation};
const char* to_string(Variant v) noexcept;

// One deployed linear layer in simulated quantization.
struct QuantizedLinear {
  std::string id;
  std::vector<double> input_gain;
  SmoothingFactor smoothing;
  // Divide the input by `smoothing` at run time (no producer absorbed it).
  bool divide_input = false;
  int act_bits = 8;
  Tensor weight;                  // dequantized N×C, acts on smoothed inputs
  std::optional<Tensor> lora_a;   // C×r
  std::optional<Tensor> lora_b;   // N×r
  std::vector<double> bias;
  // Folded consumer smoothing; outputs are divided by it. Empty if none.
  std::vector<double> output_divisor;

  // y for one timestep of inputs (rows×C), in folded (stored) space.
  Tensor forward(const Tensor& x) const;
};

struct QuantizedModel {
  std::string variant;
  std::vector<QuantizedLinear> layers;
};

// Absorbs each linked layer's smoothing into its producer: producer
// weight rows, bias and low-rank B rows are divided by the factor, and the
// consumer stops dividing its input.
void fold_model(QuantizedModel& model, const ToyModel& source);

struct PipelineConfig {
  int weight_bits = 4;
  int act_bits = 8;
  std::size_t grid_points = 21;
  // Fixed α for the searched variant; bypasses the grid.
  std::optional<double> fixed_alpha;
  double tas_alpha = 0.5;
  CompensationConfig compensation;  // weight_bits follows weight_bits
  bool compensate = true;
  bool fold = true;
  // Weight grid for the LinearQuant, +TAS and +GridSearch rows (and the
  // search loss). The compensated row always quantizes per input channel.
  WeightGranularity baseline_granularity = WeightGranularity::kPerTensor;
  std::size_t workers = 1;

  GridSearchConfig grid_config() const;
  CompensationConfig compensation_config() const;
};

struct LayerArtifacts {
  std::string id;
  std::vector<double> act_absmax;
  std::vector<double> weight_absmax;
  SmoothingFactor tas_factor;     // α = tas_alpha
  SmoothingFactor best_factor;    // searched (or fixed) α
  std::optional<GridSearchResult> search;
  std::optional<CompensatedWeight> compensated;
};

// Statistics, α search and (optionally) compensation for every layer, on
// calibration data only.
std::vector<LayerArtifacts> calibrate(const ToyModel& model, const TraceSet& calibration, const PipelineConfig& cfg);

// Deployable model of one ablation row from calibrated artifacts.
QuantizedModel build_variant(const ToyModel& model, const std::vector<LayerArtifacts>& artifacts, Variant variant,
                             const PipelineConfig& cfg);

struct VariantEval {
  std::string variant;
  bool present = true;
  std::vector<double> layer_mse;  // per layer output, vs full precision
  double end_to_end_mse = 0.0;
};

// MSE of every layer output and of the final output against the
// full-precision model on identical inputs. Activations are quantized per
// timestep slice.
VariantEval evaluate(const QuantizedModel& qmodel, const ToyModel& model, const TraceSet& heldout);

struct EvalReport {
  std::vector<std::string> layer_ids;
  std::vector<double> best_alpha;
  std::vector<std::vector<double>> residual_history;
  std::vector<VariantEval> variants;  // kAllVariants order
  std::uint64_t calibration_fingerprint = 0;
  std::uint64_t heldout_fingerprint = 0;
  int weight_bits = 0;
  int act_bits = 0;

  // Every present stage lowers end-to-end MSE by >= min_gain relative.
  bool ablation_ordering_holds(double min_gain = kAblationMinRelativeGain) const;
  const VariantEval& variant(Variant v) const;
};

struct PipelineResult {
  std::vector<LayerArtifacts> artifacts;
  QuantizedModel model;  // final row (compensated when enabled)
  EvalReport report;
};

PipelineResult run_pipeline(const GeneratedData& data, const PipelineConfig& cfg);

// Report rows for the given variant models, evaluated in parallel.
EvalReport make_report(const ToyModel& model, const TraceSet& heldout, std::uint64_t calibration_fingerprint,
                       const std::vector<LayerArtifacts>& artifacts,
                       const std::vector<std::optional<QuantizedModel>>& variant_models, const PipelineConfig& cfg);

}  // namespace tasq

#endif  // TASQ_PIPELINE_HPP_
