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

#include "tasq/tensor_file.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <limits>

#include "tasq/errors.hpp"

namespace tasq {
namespace {

constexpr std::uint8_t kMagic[4] = {'D', 'T', 'A', 'S'};
constexpr std::size_t kFixedHeader = 10;

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

template <typename T>
T get_le(std::span<const std::uint8_t> bytes, std::size_t offset) {
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(bytes[offset + i]) << (8 * i);
  return value;
}

std::vector<std::uint8_t> encode_header(DType dtype, const Shape& shape) {
  if (shape.empty() || shape.size() > std::numeric_limits<std::uint8_t>::max()) {
    throw ShapeError("tensor file: rank must be in [1, 255], got " + std::to_string(shape.size()));
  }
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_le<std::uint32_t>(out, kTensorFileVersion);
  out.push_back(static_cast<std::uint8_t>(dtype));
  out.push_back(static_cast<std::uint8_t>(shape.size()));
  for (std::size_t d : shape) put_le<std::uint64_t>(out, d);
  return out;
}

struct Header {
  DType dtype;
  Shape shape;
  std::size_t payload_offset;
  std::size_t payload_size;
};

Header parse_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kFixedHeader) throw FormatError("tensor file: truncated header");
  if (!std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) throw FormatError("tensor file: bad magic");
  const auto version = get_le<std::uint32_t>(bytes, 4);
  if (version != kTensorFileVersion) throw FormatError("tensor file: unsupported version " + std::to_string(version));
  const std::uint8_t dtype = bytes[8];
  if (dtype > 2) throw FormatError("tensor file: unknown dtype code " + std::to_string(dtype));
  const std::size_t ndim = bytes[9];
  if (ndim == 0) throw FormatError("tensor file: ndim must be >= 1");
  const std::size_t offset = kFixedHeader + 8 * ndim;
  if (bytes.size() < offset) throw FormatError("tensor file: truncated dims");

  Header h{static_cast<DType>(dtype), Shape(ndim), offset, 0};
  std::size_t volume = 1;
  for (std::size_t i = 0; i < ndim; ++i) {
    const auto d = get_le<std::uint64_t>(bytes, kFixedHeader + 8 * i);
    if (d == 0) throw FormatError("tensor file: zero-sized dimension");
    if (volume > std::numeric_limits<std::size_t>::max() / d) throw FormatError("tensor file: dims overflow");
    volume *= d;
    h.shape[i] = d;
  }
  const std::size_t elem = dtype_size(h.dtype);
  if (volume > std::numeric_limits<std::size_t>::max() / elem) throw FormatError("tensor file: dims overflow");
  h.payload_size = volume * elem;
  if (bytes.size() - offset != h.payload_size) {
    throw FormatError("tensor file: payload is " + std::to_string(bytes.size() - offset) + " bytes, expected " +
                      std::to_string(h.payload_size));
  }
  return h;
}

}  // namespace

std::size_t dtype_size(DType dtype) {
  switch (dtype) {
    case DType::kFloat32:
      return 4;
    case DType::kUint8:
      return 1;
    case DType::kFloat64:
      return 8;
  }
  throw FormatError("unknown dtype");
}

Tensor TensorRecord::to_tensor() const {
  if (dtype != DType::kUint8) return Tensor(shape, values);
  return Tensor(shape, std::vector<double>(codes.begin(), codes.end()));
}

std::vector<std::uint8_t> encode_tensor(const Tensor& t, DType dtype) {
  if (dtype == DType::kUint8) throw ArgumentError("encode_tensor: use encode_codes for code tensors");
  std::vector<std::uint8_t> out = encode_header(dtype, t.shape());
  out.reserve(out.size() + t.size() * dtype_size(dtype));
  for (double v : t.values()) {
    if (dtype == DType::kFloat64) {
      put_le(out, std::bit_cast<std::uint64_t>(v));
    } else {
      put_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
  }
  return out;
}

std::vector<std::uint8_t> encode_codes(const Shape& shape, std::span<const std::uint8_t> codes) {
  if (shape_volume(shape) != codes.size()) throw ShapeError("encode_codes: code count does not match shape");
  std::vector<std::uint8_t> out = encode_header(DType::kUint8, shape);
  out.insert(out.end(), codes.begin(), codes.end());
  return out;
}

TensorRecord decode_tensor(std::span<const std::uint8_t> bytes) {
  const Header h = parse_header(bytes);
  TensorRecord rec{h.dtype, h.shape, {}, {}};
  const auto payload = bytes.subspan(h.payload_offset);
  const std::size_t count = shape_volume(h.shape);
  switch (h.dtype) {
    case DType::kUint8:
      rec.codes.assign(payload.begin(), payload.end());
      break;
    case DType::kFloat32:
      rec.values.resize(count);
      for (std::size_t i = 0; i < count; ++i) {
        rec.values[i] = std::bit_cast<float>(get_le<std::uint32_t>(payload, 4 * i));
      }
      break;
    case DType::kFloat64:
      rec.values.resize(count);
      for (std::size_t i = 0; i < count; ++i) {
        rec.values[i] = std::bit_cast<double>(get_le<std::uint64_t>(payload, 8 * i));
      }
      break;
  }
  return rec;
}

std::span<const std::uint8_t> payload_of(std::span<const std::uint8_t> bytes) {
  const Header h = parse_header(bytes);
  return bytes.subspan(h.payload_offset);
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t payload_fingerprint(std::span<const std::uint8_t> file_bytes) { return fnv1a64(payload_of(file_bytes)); }

std::uint64_t tensor_fingerprint(const Tensor& t) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : t.values()) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) {
      h ^= static_cast<std::uint8_t>(bits >> (8 * i));
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

std::string fingerprint_hex(std::uint64_t fp) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fp));
  return buf;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write '" + tmp.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("short write to '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw FormatError("cannot rename '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

void write_text_atomic(const std::filesystem::path& path, std::string_view text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void write_tensor_file(const std::filesystem::path& path, const Tensor& t, DType dtype) {
  write_file_atomic(path, encode_tensor(t, dtype));
}

Tensor read_tensor_file(const std::filesystem::path& path) {
  try {
    return decode_tensor(read_file_bytes(path)).to_tensor();
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace tasq
