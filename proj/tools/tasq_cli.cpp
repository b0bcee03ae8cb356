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

// tasq: generate traces, quantize a model from them, evaluate it.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "tasq/artifacts.hpp"
#include "tasq/errors.hpp"
#include "tasq/run_config.hpp"
#include "tasq/tensor_file.hpp"

namespace {

using namespace tasq;

RunConfig config_from(const std::string& path) { return path.empty() ? RunConfig{} : load_run_config(path); }

void gen_traces(const std::string& config_path, const std::string& out) {
  const RunConfig cfg = config_from(config_path);
  const ToyModelSpec spec = cfg.model_spec();
  const GeneratedData data = generate_traces(spec);
  write_traces(out, spec, data);
  std::printf("wrote %zu layers to %s (calibration %s, held-out %s)\n", data.model.layers.size(), out.c_str(),
              fingerprint_hex(data.calibration.fingerprint).c_str(), fingerprint_hex(data.heldout.fingerprint).c_str());
}

void quantize(const std::string& config_path, const std::string& traces, const std::string& out,
              std::optional<double> alpha, bool no_compensation) {
  RunConfig rc = config_from(config_path);
  if (alpha) {
    if (*alpha < 0.0 || *alpha > 1.0) throw ArgumentError("--alpha: must be in [0, 1]");
    rc.alpha = alpha;
  }
  PipelineConfig cfg = rc.pipeline_config();
  cfg.compensate = !no_compensation;

  const LoadedTraces loaded = read_traces(traces, {.calibration = true, .heldout = false});
  const std::vector<LayerArtifacts> artifacts = calibrate(loaded.model, loaded.calibration, cfg);
  write_model(out, loaded.model, artifacts, cfg, loaded.calibration.fingerprint);
  for (const LayerArtifacts& art : artifacts) {
    std::printf("%s\talpha %s", art.id.c_str(), format_double(*art.best_factor.alpha).c_str());
    if (art.compensated) {
      std::printf("\tresidual %s -> %s", format_double(art.compensated->quantization_residual).c_str(),
                  format_double(art.compensated->best_residual()).c_str());
    }
    std::printf("\n");
  }
}

void eval(const std::string& model_dir, const std::string& traces, const std::string& report_path,
          std::size_t workers) {
  const LoadedTraces loaded = read_traces(traces, {.calibration = false, .heldout = true});
  LoadedModel qm = read_model(model_dir, loaded.model);
  if (qm.calibration_fingerprint != loaded.manifest.calibration_fingerprint) {
    throw FormatError(model_dir + "/" + kModelFile +
                      ": field 'calibration_fingerprint' does not match the traces' manifest");
  }
  if (qm.calibration_fingerprint == loaded.heldout.fingerprint) {
    throw FormatError(traces + "/" + kManifestFile + ": held-out input equals the calibration input");
  }
  qm.cfg.workers = workers;

  std::vector<std::optional<QuantizedModel>> models(kAllVariants.size());
  for (std::size_t v = 0; v < kAllVariants.size(); ++v) {
    if (kAllVariants[v] == Variant::kCompensation && !qm.cfg.compensate) continue;
    models[v] = build_variant(loaded.model, qm.artifacts, kAllVariants[v], qm.cfg);
  }
  const EvalReport report =
      make_report(loaded.model, loaded.heldout, qm.calibration_fingerprint, qm.artifacts, models, qm.cfg);
  const std::string text = format_report(report);
  write_text_atomic(report_path, text);
  std::fputs(text.c_str(), stdout);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Post-training quantization with activation smoothing and low-rank compensation"};
  app.require_subcommand(1);

  std::string config_path, out_dir, traces_dir, model_dir, report_path;
  std::optional<double> alpha;
  bool no_compensation = false;
  std::size_t workers = 1;

  auto* gen = app.add_subcommand("gen-traces", "Synthesize a model and its calibration and held-out traces");
  gen->add_option("--config", config_path, "Run configuration file")->check(CLI::ExistingFile);
  gen->add_option("--out", out_dir, "Output directory")->required();

  auto* quant = app.add_subcommand("quantize", "Search smoothing, quantize and compensate every layer");
  quant->add_option("--config", config_path, "Run configuration file")->check(CLI::ExistingFile);
  quant->add_option("--traces", traces_dir, "Directory written by gen-traces")->required();
  quant->add_option("--out", out_dir, "Model output directory")->required();
  quant->add_option("--alpha", alpha, "Fixed smoothing exponent; skips the search");
  quant->add_flag("--no-compensation", no_compensation, "Skip low-rank compensation");

  auto* ev = app.add_subcommand("eval", "Evaluate every ablation variant on the held-out trace");
  ev->add_option("--model", model_dir, "Directory written by quantize")->required();
  ev->add_option("--traces", traces_dir, "Directory written by gen-traces")->required();
  ev->add_option("--report", report_path, "Report file to write")->required();
  ev->add_option("--workers", workers, "Evaluation threads (0 = all cores)");

  auto* cfg = app.add_subcommand("config", "Print the resolved run configuration");
  cfg->add_option("--config", config_path, "Run configuration file")->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      gen_traces(config_path, out_dir);
    } else if (*quant) {
      quantize(config_path, traces_dir, out_dir, alpha, no_compensation);
    } else if (*ev) {
      eval(model_dir, traces_dir, report_path, workers);
    } else if (*cfg) {
      std::fputs(dump_run_config(config_from(config_path)).c_str(), stdout);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
