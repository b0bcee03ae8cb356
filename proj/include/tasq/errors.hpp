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

#ifndef TASQ_ERRORS_HPP_
#define TASQ_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace tasq {

// Incompatible tensor dimensions.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Value outside its documented domain (bitwidth, alpha, rank, ...).
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed or tampered on-disk artifact.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Failure inside a per-layer stage; carries the layer id.
class LayerError : public std::runtime_error {
 public:
  LayerError(std::string layer_id, const std::string& what)
      : std::runtime_error("layer '" + layer_id + "': " + what),
        layer_id_(std::move(layer_id)) {}

  const std::string& layer_id() const noexcept { return layer_id_; }

 private:
  std::string layer_id_;
};

}  // namespace tasq

#endif  // TASQ_ERRORS_HPP_
