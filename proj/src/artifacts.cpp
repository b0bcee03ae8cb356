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

#include "tasq/artifacts.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

#include "tasq/errors.hpp"
#include "tasq/run_config.hpp"
#include "tasq/tensor_file.hpp"

namespace tasq {
namespace fs = std::filesystem;
namespace {

constexpr int kFormatVersion = 1;

std::string layer_file(std::size_t i, const char* suffix) { return "layer" + std::to_string(i) + "." + suffix; }

// One parsed line of a tab-separated file.
struct Record {
  std::size_t line = 0;
  std::vector<std::string> fields;
};

std::vector<Record> read_tsv(const fs::path& path) {
  const std::vector<std::uint8_t> bytes = read_file_bytes(path);
  std::vector<Record> out;
  std::string line;
  std::size_t line_no = 0;
  std::istringstream in(std::string(bytes.begin(), bytes.end()));
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    Record r{line_no, {}};
    std::size_t start = 0;
    while (true) {
      const std::size_t tab = line.find('\t', start);
      r.fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    out.push_back(std::move(r));
  }
  return out;
}

[[noreturn]] void bad_field(const fs::path& path, const Record& r, const std::string& what) {
  throw FormatError(path.string() + ":" + std::to_string(r.line) + ": field '" + r.fields.front() + "': " + what);
}

void expect_fields(const fs::path& path, const Record& r, std::size_t n) {
  if (r.fields.size() != n) {
    bad_field(path, r, "expected " + std::to_string(n) + " fields, got " + std::to_string(r.fields.size()));
  }
}

template <typename T>
T to_unsigned(const fs::path& path, const Record& r, const std::string& s, int base = 10) {
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v, base);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) bad_field(path, r, "bad integer '" + s + "'");
  return v;
}

double to_real(const fs::path& path, const Record& r, const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) bad_field(path, r, "bad number '" + s + "'");
  return v;
}

std::string shape_field(const Shape& shape) {
  std::string out;
  for (std::size_t d : shape) out += (out.empty() ? "" : "x") + std::to_string(d);
  return out;
}

Shape parse_shape_field(const fs::path& path, const Record& r, const std::string& s) {
  Shape shape;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t x = std::min(s.find('x', start), s.size());
    shape.push_back(to_unsigned<std::size_t>(path, r, s.substr(start, x - start)));
    start = x + 1;
  }
  return shape;
}

// Reports every absent file at once.
void require_files(const fs::path& dir, const std::vector<std::string>& names) {
  std::string missing;
  for (const std::string& n : names) {
    if (!fs::is_regular_file(dir / n)) missing += (missing.empty() ? "" : ", ") + n;
  }
  if (!missing.empty()) throw FormatError(dir.string() + ": missing " + missing);
}

std::string join_lines(const std::vector<std::string>& lines) {
  std::string out;
  for (const std::string& l : lines) out += l + '\n';
  return out;
}

std::vector<double> read_vector_file(const fs::path& path, std::size_t expected) {
  const Tensor t = read_tensor_file(path);
  if (t.rank() != 1 || t.size() != expected) {
    throw FormatError(path.string() + ": expected " + std::to_string(expected) + " values, got shape " +
                      shape_to_string(t.shape()));
  }
  return std::vector<double>(t.values().begin(), t.values().end());
}

Tensor read_matrix_file(const fs::path& path, std::size_t rows, std::optional<std::size_t> cols) {
  Tensor t = read_tensor_file(path);
  if (t.rank() != 2 || t.rows() != rows || (cols && t.cols() != *cols)) {
    throw FormatError(path.string() + ": unexpected shape " + shape_to_string(t.shape()));
  }
  return t;
}

std::string qparams_text(const QuantizedTensor& q) {
  std::vector<std::string> lines;
  const bool per_channel = std::holds_alternative<ChannelQuantParams>(q.params);
  lines.push_back(std::string("granularity\t") +
                  to_string(per_channel ? WeightGranularity::kPerInputChannel : WeightGranularity::kPerTensor));
  lines.push_back("bits\t" + std::to_string(q.bits()));
  if (per_channel) {
    const auto& pc = std::get<ChannelQuantParams>(q.params).per_channel;
    for (std::size_t c = 0; c < pc.size(); ++c) {
      lines.push_back(std::to_string(c) + '\t' + format_double(pc[c].scale) + '\t' + std::to_string(pc[c].zero_point));
    }
  } else {
    const auto& p = std::get<QuantParams>(q.params);
    lines.push_back("*\t" + format_double(p.scale) + '\t' + std::to_string(p.zero_point));
  }
  return join_lines(lines);
}

QuantizedTensor read_quantized(const fs::path& codes_path, const fs::path& params_path, std::size_t rows,
                               std::size_t cols) {
  const TensorRecord rec = decode_tensor(read_file_bytes(codes_path));
  if (rec.dtype != DType::kUint8) throw FormatError(codes_path.string() + ": codes must have dtype 1");
  if (rec.shape != Shape{rows, cols}) {
    throw FormatError(codes_path.string() + ": unexpected shape " + shape_to_string(rec.shape));
  }
  QuantizedTensor q;
  q.shape = rec.shape;
  q.codes = rec.codes;

  const std::vector<Record> recs = read_tsv(params_path);
  if (recs.size() < 3 || recs[0].fields.front() != "granularity" || recs[1].fields.front() != "bits") {
    throw FormatError(params_path.string() + ": expected granularity and bits header lines");
  }
  expect_fields(params_path, recs[0], 2);
  expect_fields(params_path, recs[1], 2);
  WeightGranularity gran;
  try {
    gran = parse_granularity(recs[0].fields[1]);
  } catch (const std::exception& e) {
    bad_field(params_path, recs[0], e.what());
  }
  const int bits = to_unsigned<int>(params_path, recs[1], recs[1].fields[1]);
  std::vector<QuantParams> params;
  for (std::size_t i = 2; i < recs.size(); ++i) {
    expect_fields(params_path, recs[i], 3);
    QuantParams p;
    p.scale = to_real(params_path, recs[i], recs[i].fields[1]);
    const std::string& zs = recs[i].fields[2];
    p.zero_point = static_cast<std::int32_t>(to_unsigned<std::uint32_t>(params_path, recs[i], zs));
    p.bits = bits;
    try {
      p.validate();
    } catch (const std::exception& e) {
      bad_field(params_path, recs[i], e.what());
    }
    params.push_back(p);
  }
  if (gran == WeightGranularity::kPerInputChannel) {
    if (params.size() != cols) throw FormatError(params_path.string() + ": expected one row per input channel");
    q.params = ChannelQuantParams{std::move(params)};
    q.axis = 1;
  } else {
    if (params.size() != 1) throw FormatError(params_path.string() + ": expected a single per-tensor row");
    q.params = params.front();
  }
  for (std::uint8_t c : q.codes) {
    if (c > (1u << bits) - 1) throw FormatError(codes_path.string() + ": code exceeds the " + std::to_string(bits) + "-bit range");
  }
  return q;
}

}  // namespace

void write_traces(const fs::path& dir, const ToyModelSpec& spec, const GeneratedData& data) {
  spec.validate();
  fs::create_directories(dir);
  std::vector<std::string> tensors;
  auto put = [&](const std::string& name, const Tensor& t) {
    const std::vector<std::uint8_t> bytes = encode_tensor(t);
    write_file_atomic(dir / name, bytes);
    tensors.push_back("tensor\t" + name + "\t" + shape_field(t.shape()) + "\t" +
                      fingerprint_hex(payload_fingerprint(bytes)));
  };

  std::vector<std::string> lines{"manifest\t" + std::to_string(kFormatVersion),
                                 "seed\t" + std::to_string(spec.seed),
                                 "calibration_stream\t" + std::to_string(calibration_stream_seed(spec.seed)),
                                 "heldout_stream\t" + std::to_string(heldout_stream_seed(spec.seed)),
                                 "calibration_fingerprint\t" + fingerprint_hex(data.calibration.fingerprint),
                                 "heldout_fingerprint\t" + fingerprint_hex(data.heldout.fingerprint)};
  for (std::size_t i = 0; i < data.model.layers.size(); ++i) {
    const LinearLayer& l = data.model.layers[i];
    lines.push_back("layer\t" + std::to_string(i) + "\t" + std::to_string(l.weight.rows()) + "\t" +
                    std::to_string(l.weight.cols()) + "\t" + (l.producer ? std::to_string(*l.producer) : "-") +
                    "\t" + (l.bias.empty() ? "0" : "1"));
    put(layer_file(i, "weight.dtas"), l.weight);
    if (!l.bias.empty()) put(layer_file(i, "bias.dtas"), Tensor::vector(l.bias));
    put(layer_file(i, "gain.dtas"), Tensor::vector(l.input_gain));
    put(layer_file(i, "trace.dtas"), data.calibration.layer_inputs[i].x());
  }
  put(kHeldoutFile, data.heldout.input);
  lines.insert(lines.end(), tensors.begin(), tensors.end());
  // Written last: a directory without a manifest is incomplete.
  write_text_atomic(dir / kManifestFile, join_lines(lines));
}

TraceManifest read_manifest(const fs::path& dir) {
  const fs::path path = dir / kManifestFile;
  require_files(dir, {kManifestFile});
  const std::vector<Record> recs = read_tsv(path);
  if (recs.empty() || recs[0].fields.size() != 2 || recs[0].fields[0] != "manifest") {
    throw FormatError(path.string() + ": missing 'manifest' header line");
  }
  if (recs[0].fields[1] != std::to_string(kFormatVersion)) bad_field(path, recs[0], "unsupported version");

  TraceManifest m;
  std::map<std::string, bool> seen;
  for (std::size_t i = 1; i < recs.size(); ++i) {
    const Record& r = recs[i];
    const std::string& key = r.fields.front();
    if (key == "layer") {
      expect_fields(path, r, 6);
      if (to_unsigned<std::size_t>(path, r, r.fields[1]) != m.layers.size()) bad_field(path, r, "layers out of order");
      LayerSpec l;
      l.out_channels = to_unsigned<std::size_t>(path, r, r.fields[2]);
      l.in_channels = to_unsigned<std::size_t>(path, r, r.fields[3]);
      if (r.fields[4] != "-") l.producer = to_unsigned<std::size_t>(path, r, r.fields[4]);
      l.has_bias = r.fields[5] == "1";
      m.layers.push_back(l);
    } else if (key == "tensor") {
      expect_fields(path, r, 4);
      m.tensors.push_back({r.fields[1],
                           {parse_shape_field(path, r, r.fields[2]), to_unsigned<std::uint64_t>(path, r, r.fields[3], 16)}});
    } else {
      expect_fields(path, r, 2);
      if (seen[key]) bad_field(path, r, "repeated");
      seen[key] = true;
      if (key == "seed") {
        m.seed = to_unsigned<std::uint64_t>(path, r, r.fields[1]);
      } else if (key == "calibration_stream") {
        m.calibration_stream = to_unsigned<std::uint64_t>(path, r, r.fields[1]);
      } else if (key == "heldout_stream") {
        m.heldout_stream = to_unsigned<std::uint64_t>(path, r, r.fields[1]);
      } else if (key == "calibration_fingerprint") {
        m.calibration_fingerprint = to_unsigned<std::uint64_t>(path, r, r.fields[1], 16);
      } else if (key == "heldout_fingerprint") {
        m.heldout_fingerprint = to_unsigned<std::uint64_t>(path, r, r.fields[1], 16);
      } else {
        bad_field(path, r, "unknown record");
      }
    }
  }
  if (m.layers.empty()) throw FormatError(path.string() + ": no layer records");
  return m;
}

LoadedTraces read_traces(const fs::path& dir, TraceSelection selection) {
  LoadedTraces out;
  out.manifest = read_manifest(dir);
  const TraceManifest& m = out.manifest;
  const fs::path manifest_path = dir / kManifestFile;

  std::vector<std::string> needed;
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    needed.push_back(layer_file(i, "weight.dtas"));
    if (m.layers[i].has_bias) needed.push_back(layer_file(i, "bias.dtas"));
    needed.push_back(layer_file(i, "gain.dtas"));
    if (selection.calibration) needed.push_back(layer_file(i, "trace.dtas"));
  }
  if (selection.heldout) needed.push_back(kHeldoutFile);
  require_files(dir, needed);

  auto load = [&](const std::string& name) {
    const auto it = std::find_if(m.tensors.begin(), m.tensors.end(), [&](const auto& t) { return t.first == name; });
    if (it == m.tensors.end()) throw FormatError(manifest_path.string() + ": no tensor record for " + name);
    const std::vector<std::uint8_t> bytes = read_file_bytes(dir / name);
    const std::uint64_t fp = payload_fingerprint(bytes);
    if (fp != it->second.second) {
      throw FormatError((dir / name).string() + ": fingerprint mismatch (manifest " + fingerprint_hex(it->second.second) +
                        ", payload " + fingerprint_hex(fp) + ")");
    }
    Tensor t = decode_tensor(bytes).to_tensor();
    if (t.shape() != it->second.first) throw FormatError((dir / name).string() + ": shape differs from manifest");
    return t;
  };

  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    const LayerSpec& ls = m.layers[i];
    LinearLayer l;
    l.id = "layer" + std::to_string(i);
    l.producer = ls.producer;
    l.weight = load(layer_file(i, "weight.dtas"));
    if (l.weight.shape() != Shape{ls.out_channels, ls.in_channels}) {
      throw FormatError((dir / layer_file(i, "weight.dtas")).string() + ": shape differs from layer record");
    }
    if (ls.has_bias) {
      const Tensor b = load(layer_file(i, "bias.dtas"));
      l.bias.assign(b.values().begin(), b.values().end());
    }
    const Tensor g = load(layer_file(i, "gain.dtas"));
    l.input_gain.assign(g.values().begin(), g.values().end());
    if (l.input_gain.size() != ls.in_channels || (!l.bias.empty() && l.bias.size() != ls.out_channels)) {
      throw FormatError(dir.string() + ": gain or bias length of " + l.id + " does not match its weight");
    }
    out.model.layers.push_back(std::move(l));
  }

  if (selection.calibration) {
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
      Tensor t = load(layer_file(i, "trace.dtas"));
      if (t.rank() != 4 || t.dim(3) != m.layers[i].in_channels) {
        throw FormatError((dir / layer_file(i, "trace.dtas")).string() + ": expected B×T×L×C trace");
      }
      out.calibration.layer_inputs.emplace_back(std::move(t), out.model.layers[i].id);
    }
    out.calibration.input = out.calibration.layer_inputs.front().x();
    out.calibration.fingerprint = m.calibration_fingerprint;
  }
  if (selection.heldout) {
    out.heldout = propagate(out.model, load(kHeldoutFile));
    if (out.heldout.fingerprint != m.heldout_fingerprint) {
      throw FormatError(manifest_path.string() + ": field 'heldout_fingerprint' does not match " + kHeldoutFile);
    }
  }
  return out;
}

void write_model(const fs::path& dir, const ToyModel& model, const std::vector<LayerArtifacts>& artifacts,
                 const PipelineConfig& cfg, std::uint64_t calibration_fingerprint) {
  if (artifacts.size() != model.layers.size()) throw ShapeError("write_model: artifact count mismatch");
  fs::create_directories(dir);
  std::vector<std::string> lines{
      "model\t" + std::to_string(kFormatVersion),
      "weight_bits\t" + std::to_string(cfg.weight_bits),
      "act_bits\t" + std::to_string(cfg.act_bits),
      "grid_points\t" + std::to_string(cfg.grid_points),
      "alpha\t" + (cfg.fixed_alpha ? format_double(*cfg.fixed_alpha) : std::string("search")),
      "tas_alpha\t" + format_double(cfg.tas_alpha),
      std::string("granularity\t") + to_string(cfg.baseline_granularity),
      "compensation\t" + std::string(cfg.compensate ? "1" : "0"),
      "rank\t" + std::to_string(cfg.compensation.rank),
      "ao_iters\t" + std::to_string(cfg.compensation.iterations),
      "fold\t" + std::string(cfg.fold ? "1" : "0"),
      "calibration_fingerprint\t" + fingerprint_hex(calibration_fingerprint)};

  for (std::size_t i = 0; i < artifacts.size(); ++i) {
    const LayerArtifacts& art = artifacts[i];
    const Tensor& w = model.layers[i].weight;
    lines.push_back("layer\t" + art.id + "\t" + format_double(art.best_factor.alpha.value_or(std::nan(""))));
    write_tensor_file(dir / layer_file(i, "smoothing.dtas"), Tensor::vector(art.best_factor.s));
    write_tensor_file(dir / layer_file(i, "tas_smoothing.dtas"), Tensor::vector(art.tas_factor.s));

    std::optional<QuantizedTensor> q;
    Tensor dense;
    if (cfg.compensate) {
      if (!art.compensated) throw ArgumentError(art.id + ": compensation enabled but not run");
      q = art.compensated->q_w;
      dense = art.compensated->dequantized;
    } else if (!is_pass_through(cfg.weight_bits)) {
      const Tensor w_s = scale_columns(w, art.best_factor.s);
      q = cfg.baseline_granularity == WeightGranularity::kPerTensor
              ? quantize_weight_per_tensor(w_s, cfg.weight_bits)
              : quantize_weight_per_input_channel(w_s, cfg.weight_bits);
    } else {
      dense = scale_columns(w, art.best_factor.s);
    }
    if (q) {
      write_file_atomic(dir / layer_file(i, "codes.dtas"), encode_codes(q->shape, q->codes));
      write_text_atomic(dir / layer_file(i, "qparams.tsv"), qparams_text(*q));
    } else {
      write_tensor_file(dir / layer_file(i, "weight.dtas"), dense);
    }

    if (cfg.compensate) {
      const CompensatedWeight& cw = *art.compensated;
      write_tensor_file(dir / layer_file(i, "lora_a.dtas"), cw.a);
      write_tensor_file(dir / layer_file(i, "lora_b.dtas"), cw.b);
      std::vector<std::string> res{"best\t" + std::to_string(cw.best_iteration)};
      for (std::size_t k = 0; k < cw.residual_history.size(); ++k) {
        res.push_back(std::to_string(k) + "\t" + format_double(cw.residual_history[k]));
      }
      write_text_atomic(dir / layer_file(i, "residuals.txt"), join_lines(res));
    }
    if (art.search) {
      std::vector<std::string> curve;
      for (const auto& [alpha, loss] : art.search->loss_curve) {
        curve.push_back(format_double(alpha) + "\t" + format_double(loss));
      }
      write_text_atomic(dir / layer_file(i, "loss_curve.txt"), join_lines(curve));
    }
  }
  write_text_atomic(dir / kModelFile, join_lines(lines));
}

LoadedModel read_model(const fs::path& dir, const ToyModel& model) {
  const fs::path path = dir / kModelFile;
  require_files(dir, {kModelFile});
  const std::vector<Record> recs = read_tsv(path);
  if (recs.empty() || recs[0].fields.size() != 2 || recs[0].fields[0] != "model") {
    throw FormatError(path.string() + ": missing 'model' header line");
  }
  if (recs[0].fields[1] != std::to_string(kFormatVersion)) bad_field(path, recs[0], "unsupported version");

  LoadedModel out;
  PipelineConfig& cfg = out.cfg;
  std::vector<std::pair<std::string, double>> layer_alpha;
  std::map<std::string, bool> seen;
  for (std::size_t i = 1; i < recs.size(); ++i) {
    const Record& r = recs[i];
    const std::string& key = r.fields.front();
    if (key == "layer") {
      expect_fields(path, r, 3);
      layer_alpha.emplace_back(r.fields[1], to_real(path, r, r.fields[2]));
      continue;
    }
    expect_fields(path, r, 2);
    if (seen[key]) bad_field(path, r, "repeated");
    seen[key] = true;
    const std::string& v = r.fields[1];
    try {
      if (key == "weight_bits") {
        cfg.weight_bits = to_unsigned<int>(path, r, v);
        validate_bits(cfg.weight_bits, true);
      } else if (key == "act_bits") {
        cfg.act_bits = to_unsigned<int>(path, r, v);
        validate_bits(cfg.act_bits, true);
      } else if (key == "grid_points") {
        cfg.grid_points = to_unsigned<std::size_t>(path, r, v);
      } else if (key == "alpha") {
        if (v != "search") cfg.fixed_alpha = to_real(path, r, v);
      } else if (key == "tas_alpha") {
        cfg.tas_alpha = to_real(path, r, v);
      } else if (key == "granularity") {
        cfg.baseline_granularity = parse_granularity(v);
      } else if (key == "compensation") {
        cfg.compensate = v == "1";
      } else if (key == "rank") {
        cfg.compensation.rank = to_unsigned<std::size_t>(path, r, v);
      } else if (key == "ao_iters") {
        cfg.compensation.iterations = to_unsigned<std::size_t>(path, r, v);
      } else if (key == "fold") {
        cfg.fold = v == "1";
      } else if (key == "calibration_fingerprint") {
        out.calibration_fingerprint = to_unsigned<std::uint64_t>(path, r, v, 16);
      } else {
        bad_field(path, r, "unknown record");
      }
    } catch (const std::invalid_argument& e) {
      bad_field(path, r, e.what());
    }
  }
  cfg.compensation.weight_bits = cfg.weight_bits;
  if (layer_alpha.size() != model.layers.size()) {
    throw FormatError(path.string() + ": " + std::to_string(layer_alpha.size()) + " layer records for a " +
                      std::to_string(model.layers.size()) + "-layer model");
  }

  // Unquantized weights are stored densely.
  const bool dense = is_pass_through(cfg.weight_bits);
  std::vector<std::string> needed;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    needed.push_back(layer_file(i, "smoothing.dtas"));
    needed.push_back(layer_file(i, "tas_smoothing.dtas"));
    if (dense) {
      needed.push_back(layer_file(i, "weight.dtas"));
    } else {
      needed.push_back(layer_file(i, "codes.dtas"));
      needed.push_back(layer_file(i, "qparams.tsv"));
    }
    if (cfg.compensate) {
      needed.push_back(layer_file(i, "lora_a.dtas"));
      needed.push_back(layer_file(i, "lora_b.dtas"));
      needed.push_back(layer_file(i, "residuals.txt"));
    }
    if (!cfg.fixed_alpha) needed.push_back(layer_file(i, "loss_curve.txt"));
  }
  require_files(dir, needed);

  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const LinearLayer& layer = model.layers[i];
    const std::size_t n = layer.weight.rows(), c = layer.weight.cols();
    if (layer_alpha[i].first != layer.id) {
      throw FormatError(path.string() + ": layer record '" + layer_alpha[i].first + "' where '" + layer.id +
                        "' was expected");
    }
    LayerArtifacts art;
    art.id = layer.id;
    art.best_factor = {read_vector_file(dir / layer_file(i, "smoothing.dtas"), c), layer_alpha[i].second};
    art.tas_factor = {read_vector_file(dir / layer_file(i, "tas_smoothing.dtas"), c), cfg.tas_alpha};

    if (cfg.compensate) {
      CompensatedWeight cw;
      cw.smoothing = art.best_factor;
      if (dense) {
        cw.dequantized = read_matrix_file(dir / layer_file(i, "weight.dtas"), n, c);
      } else {
        cw.q_w = read_quantized(dir / layer_file(i, "codes.dtas"), dir / layer_file(i, "qparams.tsv"), n, c);
        cw.dequantized = dequantize(*cw.q_w);
      }
      cw.a = read_matrix_file(dir / layer_file(i, "lora_a.dtas"), c, std::nullopt);
      cw.b = read_matrix_file(dir / layer_file(i, "lora_b.dtas"), n, cw.a.cols());

      const fs::path res_path = dir / layer_file(i, "residuals.txt");
      const std::vector<Record> res = read_tsv(res_path);
      if (res.empty() || res[0].fields.front() != "best") throw FormatError(res_path.string() + ": missing 'best' line");
      expect_fields(res_path, res[0], 2);
      cw.best_iteration = to_unsigned<std::size_t>(res_path, res[0], res[0].fields[1]);
      for (std::size_t k = 1; k < res.size(); ++k) {
        expect_fields(res_path, res[k], 2);
        cw.residual_history.push_back(to_real(res_path, res[k], res[k].fields[1]));
      }
      if (cw.best_iteration >= cw.residual_history.size()) {
        throw FormatError(res_path.string() + ": field 'best' is past the last iteration");
      }
      art.compensated = std::move(cw);
    }

    if (!cfg.fixed_alpha) {
      const fs::path curve_path = dir / layer_file(i, "loss_curve.txt");
      GridSearchResult sr;
      sr.layer_id = layer.id;
      sr.best_alpha = layer_alpha[i].second;
      sr.best_factor = art.best_factor;
      bool found = false;
      for (const Record& r : read_tsv(curve_path)) {
        expect_fields(curve_path, r, 2);
        const double a = to_real(curve_path, r, r.fields[0]);
        const double loss = to_real(curve_path, r, r.fields[1]);
        sr.loss_curve.emplace_back(a, loss);
        if (a == sr.best_alpha) {
          sr.best_loss = loss;
          found = true;
        }
      }
      if (!found) throw FormatError(curve_path.string() + ": best α " + format_double(sr.best_alpha) + " not on the grid");
      art.search = std::move(sr);
    }
    out.artifacts.push_back(std::move(art));
  }
  return out;
}

std::string format_report(const EvalReport& report) {
  std::vector<std::string> lines{"report\t" + std::to_string(kFormatVersion),
                                 "weight_bits\t" + std::to_string(report.weight_bits),
                                 "act_bits\t" + std::to_string(report.act_bits),
                                 "calibration_fingerprint\t" + fingerprint_hex(report.calibration_fingerprint),
                                 "heldout_fingerprint\t" + fingerprint_hex(report.heldout_fingerprint)};
  for (std::size_t i = 0; i < report.layer_ids.size(); ++i) {
    lines.push_back("best_alpha\t" + report.layer_ids[i] + "\t" + format_double(report.best_alpha[i]));
    if (!report.residual_history[i].empty()) {
      std::string line = "residuals\t" + report.layer_ids[i];
      for (double r : report.residual_history[i]) line += "\t" + format_double(r);
      lines.push_back(line);
    }
  }
  for (const VariantEval& v : report.variants) {
    if (!v.present) continue;
    for (std::size_t i = 0; i < v.layer_mse.size(); ++i) {
      lines.push_back("layer_mse\t" + v.variant + "\t" + report.layer_ids.at(i) + "\t" + format_double(v.layer_mse[i]));
    }
  }
  for (const VariantEval& v : report.variants) {
    lines.push_back("end_to_end_mse\t" + v.variant + "\t" + (v.present ? format_double(v.end_to_end_mse) : "absent"));
  }
  lines.push_back("min_relative_gain\t" + format_double(kAblationMinRelativeGain));
  lines.push_back(std::string("verdict\t") + (report.ablation_ordering_holds() ? "pass" : "fail"));
  return join_lines(lines);
}

}  // namespace tasq
