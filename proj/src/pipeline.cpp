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

#include "tasq/pipeline.hpp"

#include <cmath>
#include <random>

#include "tasq/errors.hpp"
#include "tasq/parallel.hpp"
#include "tasq/tensor_file.hpp"

namespace tasq {
namespace {

constexpr std::size_t kScheduleSteps = 1000;
constexpr double kBetaStart = 1e-4;
constexpr double kBetaEnd = 0.02;

// Stream tags; calibration and held-out never share a generator.
constexpr std::uint64_t kWeightStream = 1;
constexpr std::uint64_t kCalibrationStream = 2;
constexpr std::uint64_t kHeldoutStream = 3;

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t tag) noexcept { return splitmix64(splitmix64(seed) ^ tag); }

std::string layer_name(std::size_t i) { return "layer" + std::to_string(i); }

bool both_pass_through(const PipelineConfig& cfg) {
  return is_pass_through(cfg.weight_bits) && is_pass_through(cfg.act_bits);
}

}  // namespace

void ToyModelSpec::validate() const {
  if (layers.empty()) throw ArgumentError("model spec: layers must not be empty");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    const std::string where = "model spec: " + layer_name(i);
    if (l.out_channels == 0 || l.in_channels == 0) throw ShapeError(where + ": channel counts must be positive");
    if (i > 0 && l.in_channels != layers[i - 1].out_channels) {
      throw ShapeError(where + ": consumes " + std::to_string(l.in_channels) + " channels but " + layer_name(i - 1) +
                       " produces " + std::to_string(layers[i - 1].out_channels));
    }
    if (l.producer && *l.producer + 1 != i) {
      throw ArgumentError(where + ": producer must be the preceding layer in the chain");
    }
  }
  if (tokens == 0) throw ArgumentError("model spec: tokens must be positive");
  if (timesteps == 0) throw ArgumentError("model spec: timesteps must be positive");
  if (calib_batch == 0) throw ArgumentError("model spec: calib_batch must be positive");
  if (heldout_batch == 0) throw ArgumentError("model spec: heldout_batch must be positive");
  if (noise_schedule.size() != timesteps) {
    throw ArgumentError("model spec: noise_schedule has " + std::to_string(noise_schedule.size()) +
                        " entries for " + std::to_string(timesteps) + " timesteps");
  }
  for (std::size_t t = 0; t < noise_schedule.size(); ++t) {
    const double a = noise_schedule[t];
    if (!(a > 0.0 && a <= 1.0)) throw ArgumentError("model spec: noise_schedule[" + std::to_string(t) + "] outside (0, 1]");
    if (t > 0 && a > noise_schedule[t - 1]) {
      throw ArgumentError("model spec: noise_schedule increases at index " + std::to_string(t));
    }
  }
  for (const OutlierSpec& o : outliers) {
    if (o.layer >= layers.size()) throw ArgumentError("model spec: outlier layer " + std::to_string(o.layer) + " out of range");
    if (o.channel >= layers[o.layer].in_channels) {
      throw ArgumentError("model spec: outlier channel " + std::to_string(o.channel) + " out of range for " +
                          layer_name(o.layer));
    }
    if (!(std::isfinite(o.magnitude) && o.magnitude > 0.0)) {
      throw ArgumentError("model spec: outlier magnitude must be positive and finite");
    }
  }
  if (!(std::isfinite(outlier_weight_damping) && outlier_weight_damping >= 0.0)) {
    throw ArgumentError("model spec: outlier_weight_damping must be finite and >= 0");
  }
}

ToyModelSpec ToyModelSpec::chain(std::size_t layers, std::size_t channels, std::size_t tokens, std::size_t timesteps) {
  ToyModelSpec spec;
  for (std::size_t i = 0; i < layers; ++i) {
    LayerSpec l{channels, channels, true, std::nullopt};
    if (i > 0) l.producer = i - 1;
    spec.layers.push_back(l);
  }
  spec.tokens = tokens;
  spec.timesteps = timesteps;
  spec.noise_schedule = linear_noise_schedule(timesteps);
  return spec;
}

ToyModelSpec ToyModelSpec::reference() {
  ToyModelSpec spec = chain(3, 64, 16, 50);
  spec.outliers = {{0, 3, 100.0}, {0, 17, 10.0}, {1, 5, 100.0}, {1, 40, 10.0}, {2, 9, 100.0}, {2, 33, 10.0}};
  return spec;
}

std::vector<double> linear_noise_schedule(std::size_t timesteps) {
  if (timesteps == 0) throw ArgumentError("linear_noise_schedule: timesteps must be positive");
  std::vector<double> alpha_bar(kScheduleSteps);
  double prod = 1.0;
  for (std::size_t k = 0; k < kScheduleSteps; ++k) {
    const double beta = kBetaStart + (kBetaEnd - kBetaStart) * static_cast<double>(k) / (kScheduleSteps - 1);
    prod *= 1.0 - beta;
    alpha_bar[k] = prod;
  }
  std::vector<double> out(timesteps);
  for (std::size_t i = 0; i < timesteps; ++i) {
    const std::size_t k =
        timesteps == 1 ? 0
                       : static_cast<std::size_t>(std::llround(static_cast<double>(i) * (kScheduleSteps - 1) /
                                                               static_cast<double>(timesteps - 1)));
    out[i] = alpha_bar[k];
  }
  return out;
}

std::vector<Tensor> ToyModel::forward_all(const Tensor& input) const {
  if (layers.empty()) throw ArgumentError("forward_all: empty model");
  std::vector<Tensor> out;
  out.reserve(layers.size() + 1);
  Tensor h = input;
  for (const LinearLayer& l : layers) {
    if (h.rank() != 2 || h.cols() != l.weight.cols()) {
      throw ShapeError(l.id + ": input " + shape_to_string(h.shape()) + " does not match weight " +
                       shape_to_string(l.weight.shape()));
    }
    Tensor x = scale_columns(h, l.input_gain);
    h = matmul_nt(x, l.weight);
    if (!l.bias.empty()) h = add_row_vector(h, l.bias);
    out.push_back(std::move(x));
  }
  out.push_back(std::move(h));
  return out;
}

std::uint64_t calibration_stream_seed(std::uint64_t seed) noexcept { return sub_seed(seed, kCalibrationStream); }
std::uint64_t heldout_stream_seed(std::uint64_t seed) noexcept { return sub_seed(seed, kHeldoutStream); }

Tensor generate_inputs(const ToyModelSpec& spec, std::size_t batch, std::uint64_t stream_seed) {
  spec.validate();
  if (batch == 0) throw ArgumentError("generate_inputs: batch must be positive");
  const std::size_t c0 = spec.layers.front().in_channels;
  const std::size_t L = spec.tokens;
  const std::size_t T = spec.timesteps;

  std::vector<double> gain(c0, 1.0);
  for (const OutlierSpec& o : spec.outliers) {
    if (o.layer == 0) gain[o.channel] *= o.magnitude;
  }

  Tensor x = Tensor::zeros({batch, T, L, c0});
  std::span<double> data = x.values();
  for (std::size_t b = 0; b < batch; ++b) {
    // Per-sample generator so samples can be produced independently.
    std::mt19937_64 rng(sub_seed(stream_seed, b));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> x0(L * c0);
    for (std::size_t i = 0; i < x0.size(); ++i) x0[i] = normal(rng) * gain[i % c0];
    for (std::size_t t = 0; t < T; ++t) {
      const double keep = std::sqrt(spec.noise_schedule[t]);
      const double noise = std::sqrt(1.0 - spec.noise_schedule[t]);
      double* dst = data.data() + (b * T + t) * L * c0;
      for (std::size_t i = 0; i < x0.size(); ++i) dst[i] = keep * x0[i] + noise * normal(rng);
    }
  }
  return x;
}

TraceSet propagate(const ToyModel& model, Tensor input) {
  if (input.rank() != 4) throw ShapeError("propagate: input must be B×T×L×C, got " + shape_to_string(input.shape()));
  const std::size_t B = input.dim(0), T = input.dim(1), L = input.dim(2);
  const std::vector<Tensor> acts = model.forward_all(input.reshaped({B * T * L, input.dim(3)}));

  TraceSet set;
  set.fingerprint = tensor_fingerprint(input);
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    set.layer_inputs.emplace_back(acts[i].reshaped({B, T, L, acts[i].cols()}), model.layers[i].id);
  }
  set.output = acts.back().reshaped({B, T, L, acts.back().cols()});
  set.input = std::move(input);
  return set;
}

GeneratedData generate_traces(const ToyModelSpec& spec) {
  spec.validate();
  GeneratedData data;

  std::mt19937_64 rng(sub_seed(spec.seed, kWeightStream));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& ls = spec.layers[i];
    LinearLayer layer;
    layer.id = layer_name(i);
    layer.producer = ls.producer;
    layer.weight = Tensor::zeros({ls.out_channels, ls.in_channels});
    const double inv_sqrt_c = 1.0 / std::sqrt(static_cast<double>(ls.in_channels));
    for (double& w : layer.weight.values()) w = normal(rng) * inv_sqrt_c;
    if (ls.has_bias) {
      layer.bias.resize(ls.out_channels);
      for (double& b : layer.bias) b = 0.1 * normal(rng);
    }
    layer.input_gain.assign(ls.in_channels, 1.0);
    std::vector<double> column_scale(ls.in_channels, 1.0);
    for (const OutlierSpec& o : spec.outliers) {
      if (o.layer != i) continue;
      if (i > 0) layer.input_gain[o.channel] *= o.magnitude;
      column_scale[o.channel] *= std::pow(o.magnitude, -spec.outlier_weight_damping);
    }
    layer.weight = scale_columns(layer.weight, column_scale);
    data.model.layers.push_back(std::move(layer));
  }

  data.calibration =
      propagate(data.model, generate_inputs(spec, spec.calib_batch, calibration_stream_seed(spec.seed)));
  data.heldout = propagate(data.model, generate_inputs(spec, spec.heldout_batch, heldout_stream_seed(spec.seed)));
  return data;
}

const char* to_string(Variant v) noexcept {
  switch (v) {
    case Variant::kLinearQuant:
      return "LinearQuant";
    case Variant::kTas:
      return "+TAS";
    case Variant::kGridSearch:
      return "+GridSearch";
    case Variant::kCompensation:
      return "+Compensation";
  }
  return "?";
}

Tensor QuantizedLinear::forward(const Tensor& x) const {
  if (x.rank() != 2 || x.cols() != weight.cols()) {
    throw ShapeError(id + ": input " + shape_to_string(x.shape()) + " does not match weight " +
                     shape_to_string(weight.shape()));
  }
  Tensor h = input_gain.empty() ? x : scale_columns(x, input_gain);
  if (divide_input) h = smooth_input(h, smoothing);
  const Tensor xq = fake_quant_activation(h, act_bits);
  Tensor y = matmul_nt(xq, weight);
  if (lora_a && lora_b) y = add(y, matmul_nt(matmul(xq, *lora_a), *lora_b));
  if (!bias.empty()) y = add_row_vector(y, bias);
  return y;
}

void fold_model(QuantizedModel& model, const ToyModel& source) {
  if (model.layers.size() != source.layers.size()) throw ShapeError("fold_model: layer count mismatch");
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    QuantizedLinear& consumer = model.layers[i];
    const auto& link = source.layers[i].producer;
    if (!link || !consumer.divide_input) continue;
    QuantizedLinear& producer = model.layers.at(*link);
    if (!producer.output_divisor.empty()) throw ArgumentError(producer.id + ": already absorbs a smoothing factor");
    const std::vector<double> inv = consumer.smoothing.reciprocal();
    producer.weight = *fold_smoothing(producer.weight, consumer.smoothing).producer;
    if (!producer.bias.empty()) producer.bias = fold_bias(producer.bias, consumer.smoothing);
    if (producer.lora_b) producer.lora_b = scale_rows(*producer.lora_b, inv);
    producer.output_divisor = consumer.smoothing.s;
    consumer.divide_input = false;
  }
}

GridSearchConfig PipelineConfig::grid_config() const {
  GridSearchConfig g;
  g.grid_points = grid_points;
  g.weight_bits = weight_bits;
  g.act_bits = act_bits;
  g.weight_granularity = baseline_granularity;
  g.compensation = compensation_config();
  g.workers = 1;
  return g;
}

CompensationConfig PipelineConfig::compensation_config() const {
  CompensationConfig c = compensation;
  c.weight_bits = weight_bits;
  return c;
}

std::vector<LayerArtifacts> calibrate(const ToyModel& model, const TraceSet& calibration, const PipelineConfig& cfg) {
  if (calibration.layer_inputs.size() != model.layers.size()) {
    throw ShapeError("calibrate: " + std::to_string(calibration.layer_inputs.size()) + " traces for " +
                     std::to_string(model.layers.size()) + " layers");
  }
  if (cfg.fixed_alpha && !(*cfg.fixed_alpha >= 0.0 && *cfg.fixed_alpha <= 1.0)) {
    throw ArgumentError("alpha must be in [0, 1]");
  }
  const GridSearchConfig grid = cfg.grid_config();
  grid.validate();
  if (cfg.compensate) cfg.compensation_config().validate();

  std::vector<LayerArtifacts> out(model.layers.size());
  parallel_for(model.layers.size(), cfg.workers, [&](std::size_t i) {
    const LinearLayer& layer = model.layers[i];
    const ActivationTrace& trace = calibration.layer_inputs[i];
    try {
      LayerArtifacts art;
      art.id = layer.id;
      art.act_absmax = trace.absmax();
      art.weight_absmax = weight_absmax(layer.weight);
      art.tas_factor = compute_tas_factor(art.act_absmax, art.weight_absmax, cfg.tas_alpha);
      if (cfg.fixed_alpha) {
        art.best_factor = compute_tas_factor(art.act_absmax, art.weight_absmax, *cfg.fixed_alpha);
      } else {
        art.search = grid_search_layer(trace, layer.weight, layer.bias, grid);
        art.best_factor = art.search->best_factor;
      }
      if (cfg.compensate) {
        art.compensated = alternating_optimize(scale_columns(layer.weight, art.best_factor.s),
                                               cfg.compensation_config(), art.best_factor);
      }
      out[i] = std::move(art);
    } catch (const LayerError&) {
      throw;
    } catch (const std::exception& e) {
      throw LayerError(layer.id, e.what());
    }
  });
  return out;
}

QuantizedModel build_variant(const ToyModel& model, const std::vector<LayerArtifacts>& artifacts, Variant variant,
                             const PipelineConfig& cfg) {
  if (artifacts.size() != model.layers.size()) throw ShapeError("build_variant: artifact count mismatch");
  QuantizedModel qm;
  qm.variant = to_string(variant);
  // Smoothing only matters when something is quantized; skipping it keeps
  // the unquantized path bit-identical to the reference forward.
  const bool identity = both_pass_through(cfg);

  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const LinearLayer& layer = model.layers[i];
    const LayerArtifacts& art = artifacts[i];
    QuantizedLinear ql;
    ql.id = layer.id;
    ql.input_gain = layer.input_gain;
    ql.act_bits = cfg.act_bits;
    ql.bias = layer.bias;
    ql.divide_input = true;
    try {
      switch (variant) {
        case Variant::kLinearQuant:
          ql.smoothing = SmoothingFactor::ones(layer.weight.cols());
          break;
        case Variant::kTas:
          ql.smoothing = art.tas_factor;
          break;
        case Variant::kGridSearch:
        case Variant::kCompensation:
          ql.smoothing = art.best_factor;
          break;
      }
      if (identity) ql.smoothing = SmoothingFactor::ones(layer.weight.cols());
      if (variant == Variant::kLinearQuant || identity) ql.divide_input = false;

      if (variant == Variant::kCompensation) {
        if (!art.compensated) throw ArgumentError("compensation was not run");
        if (identity) {
          ql.weight = layer.weight;
        } else {
          ql.weight = art.compensated->dequantized;
          ql.lora_a = art.compensated->a;
          ql.lora_b = art.compensated->b;
        }
      } else {
        ql.weight = fake_quant_weight(scale_columns(layer.weight, ql.smoothing.s), cfg.weight_bits,
                                      cfg.baseline_granularity);
      }
    } catch (const std::exception& e) {
      throw LayerError(layer.id, e.what());
    }
    qm.layers.push_back(std::move(ql));
  }
  if (cfg.fold) fold_model(qm, model);
  return qm;
}

VariantEval evaluate(const QuantizedModel& qmodel, const ToyModel& model, const TraceSet& heldout) {
  if (qmodel.layers.size() != model.layers.size()) throw ShapeError("evaluate: layer count mismatch");
  const Tensor& input = heldout.input;
  if (input.rank() != 4 || input.dim(3) != model.layers.front().weight.cols()) {
    throw ShapeError("evaluate: held-out input " + shape_to_string(input.shape()) + " does not match the model");
  }
  const std::size_t n_layers = model.layers.size();
  std::vector<double> sse(n_layers, 0.0);
  std::vector<std::size_t> count(n_layers, 0);

  for (std::size_t t = 0; t < input.dim(1); ++t) {
    const Tensor x = slice_timestep(input, t);
    const std::vector<Tensor> fp = model.forward_all(x);
    Tensor h = x;
    for (std::size_t i = 0; i < n_layers; ++i) {
      const QuantizedLinear& ql = qmodel.layers[i];
      h = ql.forward(h);
      // Same operation sequence as forward_all, so the last reference is
      // bit-identical to its final output.
      Tensor ref = matmul_nt(fp[i], model.layers[i].weight);
      if (!model.layers[i].bias.empty()) ref = add_row_vector(ref, model.layers[i].bias);
      // Compare in unfolded space.
      const Tensor y = ql.output_divisor.empty() ? h : scale_columns(h, ql.output_divisor);
      sse[i] += squared_frobenius_norm(subtract(y, ref));
      count[i] += y.size();
    }
  }

  VariantEval ev;
  ev.variant = qmodel.variant;
  ev.layer_mse.resize(n_layers);
  for (std::size_t i = 0; i < n_layers; ++i) ev.layer_mse[i] = sse[i] / static_cast<double>(count[i]);
  ev.end_to_end_mse = ev.layer_mse.back();
  return ev;
}

bool EvalReport::ablation_ordering_holds(double min_gain) const {
  const VariantEval* prev = nullptr;
  std::size_t present = 0;
  for (const VariantEval& v : variants) {
    if (!v.present) continue;
    ++present;
    if (prev) {
      if (!(v.end_to_end_mse < prev->end_to_end_mse)) return false;
      if (prev->end_to_end_mse - v.end_to_end_mse < min_gain * prev->end_to_end_mse) return false;
    }
    prev = &v;
  }
  return present >= 2;
}

const VariantEval& EvalReport::variant(Variant v) const {
  for (std::size_t i = 0; i < kAllVariants.size(); ++i) {
    if (kAllVariants[i] == v) return variants.at(i);
  }
  throw ArgumentError("unknown variant");
}

EvalReport make_report(const ToyModel& model, const TraceSet& heldout, std::uint64_t calibration_fingerprint,
                       const std::vector<LayerArtifacts>& artifacts,
                       const std::vector<std::optional<QuantizedModel>>& variant_models, const PipelineConfig& cfg) {
  if (variant_models.size() != kAllVariants.size()) throw ArgumentError("make_report: one slot per variant expected");
  EvalReport report;
  report.weight_bits = cfg.weight_bits;
  report.act_bits = cfg.act_bits;
  report.calibration_fingerprint = calibration_fingerprint;
  report.heldout_fingerprint = heldout.fingerprint;
  for (const LayerArtifacts& art : artifacts) {
    report.layer_ids.push_back(art.id);
    report.best_alpha.push_back(art.best_factor.alpha.value_or(std::nan("")));
    report.residual_history.push_back(art.compensated ? art.compensated->residual_history : std::vector<double>{});
  }
  report.variants.resize(kAllVariants.size());
  parallel_for(kAllVariants.size(), cfg.workers, [&](std::size_t v) {
    if (variant_models[v]) {
      report.variants[v] = evaluate(*variant_models[v], model, heldout);
    } else {
      report.variants[v].variant = to_string(kAllVariants[v]);
      report.variants[v].present = false;
    }
  });
  return report;
}

PipelineResult run_pipeline(const GeneratedData& data, const PipelineConfig& cfg) {
  PipelineResult result;
  result.artifacts = calibrate(data.model, data.calibration, cfg);
  std::vector<std::optional<QuantizedModel>> models(kAllVariants.size());
  for (std::size_t v = 0; v < kAllVariants.size(); ++v) {
    if (kAllVariants[v] == Variant::kCompensation && !cfg.compensate) continue;
    models[v] = build_variant(data.model, result.artifacts, kAllVariants[v], cfg);
  }
  result.report = make_report(data.model, data.heldout, data.calibration.fingerprint, result.artifacts, models, cfg);
  for (auto it = models.rbegin(); it != models.rend(); ++it) {
    if (*it) {
      result.model = std::move(**it);
      break;
    }
  }
  return result;
}

}  // namespace tasq
