// Copyright 2026 The kvhuff Authors
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

#ifndef KVHUFF_TENSOR_IO_HPP_
#define KVHUFF_TENSOR_IO_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace kvhuff {

enum class DType : std::uint8_t { kFloat16 = 0, kFloat32 = 1 };

inline std::size_t dtype_bytes(DType d) { return d == DType::kFloat16 ? 2 : 4; }

// Shape of a per-layer K or V cache: [context_len, head_num, head_dim].
struct CacheShape {
  std::size_t context_len = 0;
  std::size_t head_num = 0;
  std::size_t head_dim = 0;

  // Throws ConfigError if the element count overflows size_t.
  std::size_t element_count() const;
  friend bool operator==(const CacheShape&, const CacheShape&) = default;
};

// Dense row-major KV tensor. Values are held as float in memory; for kFloat16
// tensors every value is exactly representable in binary16.
struct CacheTensor {
  CacheShape shape;
  DType dtype = DType::kFloat32;
  std::vector<float> values;

  CacheTensor() = default;
  CacheTensor(CacheShape s, DType d);

  float& at(std::size_t t, std::size_t h, std::size_t d) {
    return values[(t * shape.head_num + h) * shape.head_dim + d];
  }
  float at(std::size_t t, std::size_t h, std::size_t d) const {
    return values[(t * shape.head_num + h) * shape.head_dim + d];
  }
  // One token's [head_num, head_dim] row.
  std::span<const float> token(std::size_t t) const {
    const std::size_t n = shape.head_num * shape.head_dim;
    return {values.data() + t * n, n};
  }

  // Throws ConfigError/FormatError when the invariants (length, finiteness,
  // binary16 representability) do not hold.
  void validate() const;
};

inline constexpr char kTensorMagic[4] = {'K', 'V', 'T', 'N'};
inline constexpr std::uint8_t kTensorVersion = 1;
inline constexpr std::size_t kTensorHeaderBytes = 4 + 1 + 1 + 3 * 8;

// KVTN layout: "KVTN", version u8, dtype u8, context_len/head_num/head_dim as
// u64 little-endian, then the values little-endian (binary16 or binary32).
std::vector<std::uint8_t> encode_tensor(const CacheTensor& t);
CacheTensor decode_tensor(std::span<const std::uint8_t> bytes);

void write_tensor(const CacheTensor& t, const std::filesystem::path& path);
CacheTensor read_tensor(const std::filesystem::path& path);

struct SyntheticSpec {
  CacheShape shape;
  std::uint64_t seed = 0;
  double channel_outlier_fraction = 0.0;
  double outlier_magnitude = 10.0;
  double base_std = 1.0;
  DType dtype = DType::kFloat32;
};

// Per-channel zero-mean Gaussian data. Channels are the head_num * head_dim
// columns; round(fraction * channels) of them, chosen by ranking a seeded
// hash, have their std multiplied by outlier_magnitude.
CacheTensor generate_synthetic(const SyntheticSpec& spec);

// The outlier channel ids generate_synthetic uses for a spec, ascending.
std::vector<std::size_t> outlier_channels(const SyntheticSpec& spec);

}  // namespace kvhuff

#endif  // KVHUFF_TENSOR_IO_HPP_
