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

#include "tasq/run_config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "tasq/errors.hpp"
#include "tasq/tensor_file.hpp"

namespace tasq {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_unsigned(std::string_view v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    throw ArgumentError("expected a non-negative integer, got '" + std::string(v) + "'");
  }
  return out;
}

std::size_t parse_positive(std::string_view v) {
  const auto n = parse_unsigned<std::size_t>(v);
  if (n == 0) throw ArgumentError("must be positive");
  return n;
}

double parse_real(std::string_view v) {
  // from_chars for doubles is missing from older libstdc++; strtod on a
  // bounded copy is equivalent here.
  const std::string s(v);
  char* end = nullptr;
  const double out = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(out)) {
    throw ArgumentError("expected a finite number, got '" + s + "'");
  }
  return out;
}

int parse_bits(std::string_view v) {
  const int bits = parse_unsigned<int>(v);
  validate_bits(bits, /*allow_pass_through=*/true);
  return bits;
}

bool parse_bool(std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ArgumentError("expected true or false, got '" + std::string(v) + "'");
}

using Setter = std::function<void(RunConfig&, std::string_view)>;

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = {
      {"weight_bits", [](RunConfig& c, std::string_view v) { c.weight_bits = parse_bits(v); }},
      {"act_bits", [](RunConfig& c, std::string_view v) { c.act_bits = parse_bits(v); }},
      {"alpha",
       [](RunConfig& c, std::string_view v) {
         if (v == "search") {
           c.alpha.reset();
           return;
         }
         const double a = parse_real(v);
         if (a < 0.0 || a > 1.0) throw ArgumentError("must be in [0, 1] or 'search'");
         c.alpha = a;
       }},
      {"grid_points",
       [](RunConfig& c, std::string_view v) {
         c.grid_points = parse_unsigned<std::size_t>(v);
         if (c.grid_points < 2) throw ArgumentError("must be >= 2");
       }},
      {"rank", [](RunConfig& c, std::string_view v) { c.rank = parse_positive(v); }},
      {"ao_iters", [](RunConfig& c, std::string_view v) { c.ao_iters = parse_positive(v); }},
      {"seed", [](RunConfig& c, std::string_view v) { c.seed = parse_unsigned<std::uint64_t>(v); }},
      {"timesteps", [](RunConfig& c, std::string_view v) { c.timesteps = parse_positive(v); }},
      {"calib_batch", [](RunConfig& c, std::string_view v) { c.calib_batch = parse_positive(v); }},
      {"outliers", [](RunConfig& c, std::string_view v) { c.outliers = parse_outliers(v); }},
      {"layers", [](RunConfig& c, std::string_view v) { c.layers = parse_positive(v); }},
      {"channels", [](RunConfig& c, std::string_view v) { c.channels = parse_positive(v); }},
      {"tokens", [](RunConfig& c, std::string_view v) { c.tokens = parse_positive(v); }},
      {"heldout_batch", [](RunConfig& c, std::string_view v) { c.heldout_batch = parse_positive(v); }},
      {"bias", [](RunConfig& c, std::string_view v) { c.bias = parse_bool(v); }},
      {"workers", [](RunConfig& c, std::string_view v) { c.workers = parse_unsigned<std::size_t>(v); }},
  };
  return table;
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string format_outliers(const std::vector<OutlierSpec>& outliers) {
  if (outliers.empty()) return "none";
  std::string out;
  for (const OutlierSpec& o : outliers) {
    if (!out.empty()) out += ',';
    out += std::to_string(o.layer) + ':' + std::to_string(o.channel) + ':' + format_double(o.magnitude);
  }
  return out;
}

std::vector<OutlierSpec> parse_outliers(std::string_view text) {
  text = trim(text);
  if (text == "none") return {};
  std::vector<OutlierSpec> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = std::min(text.find(',', start), text.size());
    const std::string_view item = trim(text.substr(start, comma - start));
    const std::size_t c1 = item.find(':');
    const std::size_t c2 = c1 == std::string_view::npos ? c1 : item.find(':', c1 + 1);
    if (c2 == std::string_view::npos) {
      throw ArgumentError("outlier '" + std::string(item) + "' is not layer:channel:magnitude");
    }
    OutlierSpec o;
    o.layer = parse_unsigned<std::size_t>(item.substr(0, c1));
    o.channel = parse_unsigned<std::size_t>(item.substr(c1 + 1, c2 - c1 - 1));
    o.magnitude = parse_real(item.substr(c2 + 1));
    if (o.magnitude <= 0.0) throw ArgumentError("outlier magnitude must be positive");
    out.push_back(o);
    start = comma + 1;
  }
  return out;
}

RunConfig parse_run_config(std::string_view text, const std::string& source) {
  RunConfig cfg;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t nl = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    const std::string where = source + ":" + std::to_string(line_no);
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ArgumentError(where + ": expected 'key = value', got '" + std::string(line) + "'");
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw ArgumentError(where + ": unknown key '" + std::string(key) + "'");
    if (!seen.insert(std::string(key)).second) throw ArgumentError(where + ": key '" + std::string(key) + "' repeated");
    try {
      it->second(cfg, value);
    } catch (const std::invalid_argument& e) {
      throw ArgumentError(where + ": key '" + std::string(key) + "': " + e.what());
    }
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = read_file_bytes(path);
  return parse_run_config(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()), path.string());
}

std::string dump_run_config(const RunConfig& cfg) {
  std::ostringstream out;
  out << "weight_bits = " << cfg.weight_bits << '\n'
      << "act_bits = " << cfg.act_bits << '\n'
      << "alpha = " << (cfg.alpha ? format_double(*cfg.alpha) : "search") << '\n'
      << "grid_points = " << cfg.grid_points << '\n'
      << "rank = " << cfg.rank << '\n'
      << "ao_iters = " << cfg.ao_iters << '\n'
      << "seed = " << cfg.seed << '\n'
      << "timesteps = " << cfg.timesteps << '\n'
      << "calib_batch = " << cfg.calib_batch << '\n'
      << "outliers = " << format_outliers(cfg.outliers) << '\n'
      << "layers = " << cfg.layers << '\n'
      << "channels = " << cfg.channels << '\n'
      << "tokens = " << cfg.tokens << '\n'
      << "heldout_batch = " << cfg.heldout_batch << '\n'
      << "bias = " << (cfg.bias ? "true" : "false") << '\n'
      << "workers = " << cfg.workers << '\n';
  return out.str();
}

ToyModelSpec RunConfig::model_spec() const {
  ToyModelSpec spec = ToyModelSpec::chain(layers, channels, tokens, timesteps);
  for (LayerSpec& l : spec.layers) l.has_bias = bias;
  spec.calib_batch = calib_batch;
  spec.heldout_batch = heldout_batch;
  spec.seed = seed;
  spec.outliers = outliers;
  spec.validate();
  return spec;
}

PipelineConfig RunConfig::pipeline_config() const {
  PipelineConfig p;
  p.weight_bits = weight_bits;
  p.act_bits = act_bits;
  p.grid_points = grid_points;
  p.fixed_alpha = alpha;
  p.compensation.rank = rank;
  p.compensation.iterations = ao_iters;
  p.workers = workers;
  return p;
}

}  // namespace tasq
