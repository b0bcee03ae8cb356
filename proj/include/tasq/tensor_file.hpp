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

// Binary tensor container. All integers little-endian:
//
//   offset  size        field
//   0       4           magic "DTAS"
//   4       4           version (u32) = 1
//   8       1           dtype (u8): 0 = f32, 1 = u8 codes, 2 = f64
//   9       1           ndim (u8), >= 1
//   10      8·ndim      dims (u64 each), all > 0
//   10+8n   ...         payload, row-major, product(dims)·sizeof(dtype) bytes
//
// Nothing may follow the payload.

#ifndef TASQ_TENSOR_FILE_HPP_
#define TASQ_TENSOR_FILE_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tasq/tensor.hpp"

namespace tasq {

inline constexpr std::uint32_t kTensorFileVersion = 1;

enum class DType : std::uint8_t { kFloat32 = 0, kUint8 = 1, kFloat64 = 2 };

std::size_t dtype_size(DType dtype);

// Decoded file. Real dtypes fill `values` (f32 widened to double); the
// code dtype fills `codes`.
struct TensorRecord {
  DType dtype = DType::kFloat64;
  Shape shape;
  std::vector<double> values;
  std::vector<std::uint8_t> codes;

  Tensor to_tensor() const;
};

std::vector<std::uint8_t> encode_tensor(const Tensor& t, DType dtype = DType::kFloat64);
std::vector<std::uint8_t> encode_codes(const Shape& shape, std::span<const std::uint8_t> codes);
TensorRecord decode_tensor(std::span<const std::uint8_t> bytes);

// Byte range of the payload inside an encoded file (header validated).
std::span<const std::uint8_t> payload_of(std::span<const std::uint8_t> bytes);

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) noexcept;
// Fingerprint of a file's payload bytes.
std::uint64_t payload_fingerprint(std::span<const std::uint8_t> file_bytes);
// Fingerprint of the f64 payload `t` would be written with.
std::uint64_t tensor_fingerprint(const Tensor& t);
std::string fingerprint_hex(std::uint64_t fp);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
// Writes to a sibling temporary and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_atomic(const std::filesystem::path& path, std::string_view text);

void write_tensor_file(const std::filesystem::path& path, const Tensor& t, DType dtype = DType::kFloat64);
Tensor read_tensor_file(const std::filesystem::path& path);

}  // namespace tasq

#endif  // TASQ_TENSOR_FILE_HPP_
