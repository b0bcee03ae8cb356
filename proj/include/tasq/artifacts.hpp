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

// On-disk layout shared by the command-line tools. Text files are
// line-oriented with tab-separated fields; reals use "%.17g".
//
// Trace directory:
//   manifest.tsv              seeds, shapes, layer links, fingerprints
//   layer<i>.weight.dtas      N×C   f64
//   layer<i>.bias.dtas        N     f64 (layers with bias)
//   layer<i>.gain.dtas        C     f64 per-channel input gain
//   layer<i>.trace.dtas       B×T×L×C calibration inputs of the layer
//   heldout.input.dtas        H×T×L×C0 held-out network inputs
//
// Model directory:
//   model.tsv                 run settings and per-layer α
//   layer<i>.smoothing.dtas   searched (or fixed-α) factor
//   layer<i>.tas_smoothing.dtas
//   layer<i>.codes.dtas       u8 weight codes       (quantized weights)
//   layer<i>.qparams.tsv      scale and zero-point per grid
//   layer<i>.weight.dtas      f64 weight            (pass-through weights)
//   layer<i>.lora_a.dtas      C×r, layer<i>.lora_b.dtas N×r (compensated)
//   layer<i>.residuals.txt    optimizer residual per iteration
//   layer<i>.loss_curve.txt   α and loss per grid point (searched α)

#ifndef TASQ_ARTIFACTS_HPP_
#define TASQ_ARTIFACTS_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tasq/pipeline.hpp"

namespace tasq {

inline constexpr const char* kManifestFile = "manifest.tsv";
inline constexpr const char* kModelFile = "model.tsv";
inline constexpr const char* kHeldoutFile = "heldout.input.dtas";

void write_traces(const std::filesystem::path& dir, const ToyModelSpec& spec, const GeneratedData& data);

struct TraceManifest {
  std::uint64_t seed = 0;
  std::uint64_t calibration_stream = 0;
  std::uint64_t heldout_stream = 0;
  std::uint64_t calibration_fingerprint = 0;
  std::uint64_t heldout_fingerprint = 0;
  std::vector<LayerSpec> layers;
  // file name → (shape, payload fingerprint)
  std::vector<std::pair<std::string, std::pair<Shape, std::uint64_t>>> tensors;
};

TraceManifest read_manifest(const std::filesystem::path& dir);

// What to load from a trace directory. The model is always loaded.
struct TraceSelection {
  bool calibration = false;
  bool heldout = false;
};

struct LoadedTraces {
  TraceManifest manifest;
  ToyModel model;
  TraceSet calibration;  // filled when selected
  TraceSet heldout;      // filled when selected
};

// Every file read is checked against its manifest fingerprint. Missing
// files are reported together in one FormatError.
LoadedTraces read_traces(const std::filesystem::path& dir, TraceSelection selection);

void write_model(const std::filesystem::path& dir, const ToyModel& model, const std::vector<LayerArtifacts>& artifacts,
                 const PipelineConfig& cfg, std::uint64_t calibration_fingerprint);

struct LoadedModel {
  PipelineConfig cfg;
  std::vector<LayerArtifacts> artifacts;
  std::uint64_t calibration_fingerprint = 0;
};

LoadedModel read_model(const std::filesystem::path& dir, const ToyModel& model);

// Fixed-order text report ending in the ablation verdict line.
std::string format_report(const EvalReport& report);

}  // namespace tasq

#endif  // TASQ_ARTIFACTS_HPP_
