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

#include "kvhuff/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "kvhuff/error.hpp"

namespace kvhuff {

std::string_view to_string(QuantMode m) {
  switch (m) {
    case QuantMode::kKBlock: return "kblock";
    case QuantMode::kKChannel: return "kchannel";
    case QuantMode::kVToken: return "vtoken";
  }
  return "?";
}

QuantMode parse_quant_mode(std::string_view s) {
  if (s == "kblock") return QuantMode::kKBlock;
  if (s == "kchannel") return QuantMode::kKChannel;
  if (s == "vtoken") return QuantMode::kVToken;
  throw ConfigError("unknown quantization mode '" + std::string(s) + "'");
}

std::uint32_t QuantConfig::max_code() const {
  // The epsilon absorbs representation error in scales like 0.05.
  const double c = std::ceil(1.0 / rel_quant_scale - 1e-9);
  return static_cast<std::uint32_t>(std::clamp(c, 0.0, 255.0));
}

void QuantConfig::validate() const {
  if (block_size == 0) throw ConfigError("block_size must be positive");
  if (buffer_size < block_size) throw ConfigError("buffer_size must be >= block_size");
  if (buffer_size % block_size != 0) {
    throw ConfigError("buffer_size must be a multiple of block_size");
  }
  if (!(rel_quant_scale <= 1.0) || !(rel_quant_scale >= 1.0 / 255.0 - 1e-12)) {
    throw ConfigError("rel_quant_scale must lie in [1/255, 1]");
  }
}

QuantUnitMeta make_unit_meta(float min_value, float max_value, double rel_quant_scale) {
  QuantUnitMeta meta;
  meta.min_value = min_value;
  if (max_value > min_value) {
    const double step =
        rel_quant_scale * (static_cast<double>(max_value) - static_cast<double>(min_value));
    float s = static_cast<float>(step);
    if (!std::isfinite(s)) throw ConfigError("unit value range overflows float");
    meta.scale = std::max(s, std::numeric_limits<float>::denorm_min());
  }
  return meta;
}

std::uint8_t quantize_value(float v, const QuantUnitMeta& meta, std::uint32_t max_code) {
  if (meta.scale == 0.0f) return 0;
  const double scale = meta.scale;
  const double r = static_cast<double>(v) - static_cast<double>(meta.min_value);
  double q = std::round(r / scale);
  // r - q * scale is exact in double; correct the rare quotient rounding
  // that lands on the wrong side of a half step.
  const double residual = r - q * scale;
  if (residual > 0.5 * scale) {
    q += 1.0;
  } else if (residual < -0.5 * scale) {
    q -= 1.0;
  }
  q = std::clamp(q, 0.0, static_cast<double>(std::min<std::uint32_t>(max_code, 255)));
  return static_cast<std::uint8_t>(q);
}

QuantizedUnit quantize_unit(std::span<const float> values, double rel_quant_scale) {
  if (values.empty()) throw ConfigError("quantize_unit: empty unit");
  if (!(rel_quant_scale <= 1.0) || !(rel_quant_scale >= 1.0 / 255.0 - 1e-12)) {
    throw ConfigError("rel_quant_scale must lie in [1/255, 1]");
  }
  float lo = values[0], hi = values[0];
  for (float v : values) {
    if (!std::isfinite(v)) throw ConfigError("quantize_unit: non-finite value");
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  QuantConfig cfg;
  cfg.rel_quant_scale = rel_quant_scale;
  const std::uint32_t max_code = cfg.max_code();
  QuantizedUnit out;
  out.meta = make_unit_meta(lo, hi, rel_quant_scale);
  out.codes.reserve(values.size());
  for (float v : values) out.codes.push_back(quantize_value(v, out.meta, max_code));
  return out;
}

QuantizedBlock quantize_block(const BlockView& block, QuantMode mode, const QuantConfig& cfg,
                              const BlockPosition& pos,
                              std::span<const QuantUnitMeta> channel_metas) {
  const std::size_t rows = block.rows, cols = block.cols;
  if (rows == 0 || cols == 0) throw ConfigError("quantize_block: empty block");
  if (rows != cfg.block_size) throw ConfigError("quantize_block: row count != block_size");
  if (block.row_stride < cols || block.data.size() < (rows - 1) * block.row_stride + cols) {
    throw ConfigError("quantize_block: view exceeds its backing data");
  }
  const std::uint32_t max_code = cfg.max_code();
  const double rel = cfg.rel_quant_scale;

  QuantizedBlock q;
  q.rows = static_cast<std::uint32_t>(rows);
  q.cols = static_cast<std::uint32_t>(cols);
  q.codes.resize(rows * cols);
  q.block_index = pos.block_index;
  q.head_index = pos.head_index;
  q.ctx_start = pos.ctx_start;

  switch (mode) {
    case QuantMode::kKBlock: {
      std::vector<float> lo(cols), hi(cols);
      for (std::size_t c = 0; c < cols; ++c) lo[c] = hi[c] = block(0, c);
      for (std::size_t r = 1; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
          lo[c] = std::min(lo[c], block(r, c));
          hi[c] = std::max(hi[c], block(r, c));
        }
      }
      q.unit_metas.resize(cols);
      for (std::size_t c = 0; c < cols; ++c) q.unit_metas[c] = make_unit_meta(lo[c], hi[c], rel);
      break;
    }
    case QuantMode::kKChannel:
      if (channel_metas.size() != cols) {
        throw ConfigError("quantize_block: KChannel needs one channel meta per column");
      }
      q.unit_metas.assign(channel_metas.begin(), channel_metas.end());
      break;
    case QuantMode::kVToken:
      q.unit_metas.resize(rows);
      for (std::size_t r = 0; r < rows; ++r) {
        float lo = block(r, 0), hi = lo;
        for (std::size_t c = 1; c < cols; ++c) {
          lo = std::min(lo, block(r, c));
          hi = std::max(hi, block(r, c));
        }
        q.unit_metas[r] = make_unit_meta(lo, hi, rel);
      }
      break;
  }

  const bool by_col = per_channel(mode);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const QuantUnitMeta& m = by_col ? q.unit_metas[c] : q.unit_metas[r];
      q.codes[r * cols + c] = quantize_value(block(r, c), m, max_code);
    }
  }
  return q;
}

std::vector<float> dequantize_block(const QuantizedBlock& q, QuantMode mode) {
  const bool by_col = per_channel(mode);
  if (q.unit_metas.size() != (by_col ? q.cols : q.rows)) {
    throw ConfigError("dequantize_block: unit meta count does not match mode");
  }
  std::vector<float> out(static_cast<std::size_t>(q.rows) * q.cols);
  for (std::size_t r = 0; r < q.rows; ++r) {
    for (std::size_t c = 0; c < q.cols; ++c) {
      const QuantUnitMeta& m = by_col ? q.unit_metas[c] : q.unit_metas[r];
      out[r * q.cols + c] = dequantize_value(m, q.codes[r * q.cols + c]);
    }
  }
  return out;
}

std::vector<QuantUnitMeta> compute_channel_metas(std::span<const float> values,
                                                 std::size_t context_len, std::size_t head_num,
                                                 std::size_t head_dim, std::size_t head,
                                                 double rel_quant_scale) {
  if (context_len == 0) throw ConfigError("compute_channel_metas: empty context");
  const std::size_t stride = head_num * head_dim;
  const float* base = values.data() + head * head_dim;
  std::vector<float> lo(base, base + head_dim), hi(base, base + head_dim);
  for (std::size_t t = 1; t < context_len; ++t) {
    const float* row = base + t * stride;
    for (std::size_t c = 0; c < head_dim; ++c) {
      lo[c] = std::min(lo[c], row[c]);
      hi[c] = std::max(hi[c], row[c]);
    }
  }
  std::vector<QuantUnitMeta> metas(head_dim);
  for (std::size_t c = 0; c < head_dim; ++c) metas[c] = make_unit_meta(lo[c], hi[c], rel_quant_scale);
  return metas;
}

}  // namespace kvhuff
