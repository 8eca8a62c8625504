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

#ifndef KVHUFF_QUANTIZER_HPP_
#define KVHUFF_QUANTIZER_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace kvhuff {

// Quantization granularity. KBlock: one (min, scale) per channel within each
// block. KChannel: one per channel over the whole prefill context. VToken: one
// per token vector of one head.
enum class QuantMode : std::uint8_t { kKBlock = 0, kKChannel = 1, kVToken = 2 };

std::string_view to_string(QuantMode m);
QuantMode parse_quant_mode(std::string_view s);

inline bool per_channel(QuantMode m) { return m != QuantMode::kVToken; }

struct QuantConfig {
  QuantMode mode = QuantMode::kKBlock;
  std::uint32_t block_size = 64;
  double rel_quant_scale = 0.05;
  std::uint32_t buffer_size = 64;

  // Largest code a unit can produce: ceil(1 / rel_quant_scale).
  std::uint32_t max_code() const;
  // Throws ConfigError.
  void validate() const;
};

inline constexpr double kDefaultRelScaleKBlock = 0.05;
inline constexpr double kDefaultRelScaleKChannel = 0.25;
inline constexpr double kDefaultRelScaleVToken = 0.15;

struct QuantUnitMeta {
  float min_value = 0.0f;
  float scale = 0.0f;  // absolute step; 0 iff the unit is constant
  friend bool operator==(const QuantUnitMeta&, const QuantUnitMeta&) = default;
};

// (min, scale) for a unit spanning [min_value, max_value].
QuantUnitMeta make_unit_meta(float min_value, float max_value, double rel_quant_scale);

// round((v - min) / scale), half away from zero, clamped to [0, max_code].
// The chosen code always satisfies |v - reconstruct(meta, code)| <= scale / 2
// for v inside the unit's range.
std::uint8_t quantize_value(float v, const QuantUnitMeta& meta, std::uint32_t max_code);

// min + code * scale evaluated in double: the exact value the stored metadata
// describes.
inline double reconstruct(const QuantUnitMeta& meta, std::uint32_t code) {
  return static_cast<double>(meta.min_value) +
         static_cast<double>(code) * static_cast<double>(meta.scale);
}

inline float dequantize_value(const QuantUnitMeta& meta, std::uint32_t code) {
  return static_cast<float>(reconstruct(meta, code));
}

struct QuantizedUnit {
  std::vector<std::uint8_t> codes;
  QuantUnitMeta meta;
};

QuantizedUnit quantize_unit(std::span<const float> values, double rel_quant_scale);

// Strided read-only view of a [rows, cols] block inside a larger tensor;
// element (r, c) lives at data[r * row_stride + c].
struct BlockView {
  std::span<const float> data;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t row_stride = 0;

  float operator()(std::size_t r, std::size_t c) const { return data[r * row_stride + c]; }
};

struct BlockPosition {
  std::uint32_t block_index = 0;
  std::size_t head_index = 0;
  std::size_t ctx_start = 0;
};

// Chunks of block_size tokens are numbered in arrival order; blocks of one
// chunk are contiguous in head order.
inline std::uint32_t make_block_index(std::size_t chunk, std::size_t head, std::size_t head_num) {
  return static_cast<std::uint32_t>(chunk * head_num + head);
}

struct QuantizedBlock {
  std::uint32_t rows = 0;  // tokens
  std::uint32_t cols = 0;  // head_dim
  std::vector<std::uint8_t> codes;  // row-major [token][channel]
  std::vector<QuantUnitMeta> unit_metas;
  std::uint32_t block_index = 0;
  std::size_t head_index = 0;
  std::size_t ctx_start = 0;

  std::span<const std::uint8_t> row(std::size_t r) const { return {codes.data() + r * cols, cols}; }
};

// KBlock: metas from the block's own columns. KChannel: uses channel_metas
// (one per column, computed over the whole context by compute_channel_metas).
// VToken: one meta per row.
QuantizedBlock quantize_block(const BlockView& block, QuantMode mode, const QuantConfig& cfg,
                              const BlockPosition& pos,
                              std::span<const QuantUnitMeta> channel_metas = {});

// Row-major [rows, cols] reconstruction.
std::vector<float> dequantize_block(const QuantizedBlock& q, QuantMode mode);

// Per-channel metas for one head over all tokens of a [ctx, head_num, head_dim]
// tensor.
std::vector<QuantUnitMeta> compute_channel_metas(std::span<const float> values,
                                                 std::size_t context_len, std::size_t head_num,
                                                 std::size_t head_dim, std::size_t head,
                                                 double rel_quant_scale);

}  // namespace kvhuff

#endif  // KVHUFF_QUANTIZER_HPP_
