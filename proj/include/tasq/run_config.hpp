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

// Plain-text run configuration: one `key = value` per line, `#` starts a
// comment, blank lines are ignored. Unknown and repeated keys are errors.
// Every key is optional; missing keys keep the defaults below.

#ifndef TASQ_RUN_CONFIG_HPP_
#define TASQ_RUN_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tasq/pipeline.hpp"

namespace tasq {

struct RunConfig {
  int weight_bits = 4;
  int act_bits = 8;
  std::optional<double> alpha;  // fixed α; empty means search
  std::size_t grid_points = 21;
  std::size_t rank = 32;
  std::size_t ao_iters = 10;
  std::uint64_t seed = kReferenceSeed;
  std::size_t timesteps = 50;
  std::size_t calib_batch = 12;
  std::vector<OutlierSpec> outliers = ToyModelSpec::reference().outliers;
  // Model shape: a chain of `layers` square layers of `channels` width.
  std::size_t layers = 3;
  std::size_t channels = 64;
  std::size_t tokens = 16;
  std::size_t heldout_batch = 4;
  bool bias = true;
  std::size_t workers = 1;

  ToyModelSpec model_spec() const;
  PipelineConfig pipeline_config() const;
};

// `source` names the origin in error messages ("<file>:<line>: ...").
RunConfig parse_run_config(std::string_view text, const std::string& source = "<config>");
RunConfig load_run_config(const std::filesystem::path& path);

// Every key with its resolved value, in a fixed order. Parsing the dump
// gives back the same configuration.
std::string dump_run_config(const RunConfig& cfg);

std::string format_outliers(const std::vector<OutlierSpec>& outliers);
std::vector<OutlierSpec> parse_outliers(std::string_view text);

// "%.17g" rendering; re-parses to the identical double.
std::string format_double(double v);

}  // namespace tasq

#endif  // TASQ_RUN_CONFIG_HPP_
