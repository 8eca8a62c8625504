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

#include "kvhuff/reference.hpp"

#include <cmath>
#include <string>

#include "kvhuff/error.hpp"

namespace kvhuff::reference {

std::vector<std::uint8_t> decode_slice_naive(std::span<const std::uint8_t> payload,
                                             std::uint32_t bit_offset, std::uint16_t bit_count,
                                             std::span<const TreeNode> tree, std::size_t out_len) {
  if (static_cast<std::uint64_t>(bit_offset) + bit_count > payload.size() * std::uint64_t{8}) {
    throw CodecError("decode_slice_naive: bit range exceeds payload");
  }
  std::vector<std::uint8_t> out;
  out.reserve(out_len);
  std::uint32_t node = 0;
  for (std::uint32_t i = 0; i < bit_count; ++i) {
    const std::uint32_t p = bit_offset + i;
    const bool one = (payload[p / 8] & (0x80u >> (p % 8))) != 0;
    if (one) {
      node = tree[node].child[1];
    } else {
      node = tree[node].child[0];
    }
    if (tree[node].is_symbol) {
      if (out.size() == out_len) throw CodecError("decode_slice_naive: too many symbols");
      out.push_back(tree[node].symbol);
      node = 0;
    }
  }
  if (out.size() != out_len || node != 0) {
    throw CodecError("decode_slice_naive: stream ended early or inside a codeword");
  }
  return out;
}

EncodedSlice encode_slice_bitwise(std::span<const std::uint8_t> codes, const HuffmanCodebook& cb) {
  std::uint32_t total = 0;
  for (std::uint8_t c : codes) {
    if (!cb.contains(c)) throw CodecError("encode_slice_bitwise: absent code " + std::to_string(c));
    total += cb.code_lengths()[c];
  }
  if (total > 0xffffu) throw CodecError("encode_slice_bitwise: slice over 65535 bits");
  EncodedSlice out;
  out.bit_count = static_cast<std::uint16_t>(total);
  out.bytes.assign((total + 7) / 8, 0);
  std::uint32_t pos = 0;
  for (std::uint8_t c : codes) {
    const Codeword cw = cb.encode_table()[c];
    for (int b = cw.length - 1; b >= 0; --b, ++pos) {
      if ((cw.bits >> b) & 1u) out.bytes[pos / 8] |= static_cast<std::uint8_t>(0x80u >> (pos % 8));
    }
  }
  return out;
}

std::vector<float> fused_k_scores_serial(const LayerCacheState& s, std::span<const float> q) {
  const std::size_t H = s.head_num(), D = s.head_dim(), ctx = s.context_len();
  const std::size_t bs = s.block_size();
  if (q.size() != H * D) throw ConfigError("query size mismatch");
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(D));
  std::vector<float> scores(H * ctx, 0.0f);
  for (std::size_t o = 0; o < s.k_arena().block_count(); ++o) {
    const QuantizedBlock b = decompress_block(s.k_arena(), o, s.k_codebook(), s.k_layout());
    const std::size_t chunk = b.block_index / H, h = b.block_index % H;
    const float* qh = q.data() + h * D;
    double base = 0.0;
    std::vector<double> folded(D);
    for (std::size_t c = 0; c < D; ++c) {
      base += static_cast<double>(b.unit_metas[c].min_value) * qh[c];
      folded[c] = static_cast<double>(b.unit_metas[c].scale) * qh[c];
    }
    for (std::size_t t = 0; t < b.rows; ++t) {
      double acc = 0.0;
      for (std::size_t c = 0; c < D; ++c) acc += folded[c] * b.codes[t * D + c];
      scores[h * ctx + chunk * bs + t] = static_cast<float>((base + acc) * inv_sqrt);
    }
  }
  const auto buf = s.k_buffer();
  for (std::size_t t = 0; t < s.buffered_tokens(); ++t) {
    for (std::size_t h = 0; h < H; ++h) {
      double acc = 0.0;
      for (std::size_t c = 0; c < D; ++c) {
        acc += static_cast<double>(buf[(t * H + h) * D + c]) * q[h * D + c];
      }
      scores[h * ctx + s.compressed_tokens() + t] = static_cast<float>(acc * inv_sqrt);
    }
  }
  return scores;
}

std::vector<float> fused_v_output_serial(const LayerCacheState& s, std::span<const float> weights) {
  const std::size_t H = s.head_num(), D = s.head_dim(), ctx = s.context_len();
  const std::size_t bs = s.block_size();
  if (weights.size() != H * ctx) throw ConfigError("weights size mismatch");
  std::vector<double> acc(H * D, 0.0);
  for (std::size_t o = 0; o < s.v_arena().block_count(); ++o) {
    const QuantizedBlock b = decompress_block(s.v_arena(), o, s.v_codebook(), s.v_layout());
    const std::size_t chunk = b.block_index / H, h = b.block_index % H;
    std::vector<double> part(D, 0.0);
    double offset_sum = 0.0;
    for (std::size_t t = 0; t < b.rows; ++t) {
      const double w = weights[h * ctx + chunk * bs + t];
      offset_sum += w * b.unit_metas[t].min_value;
      const double coef = w * b.unit_metas[t].scale;
      for (std::size_t c = 0; c < D; ++c) part[c] += coef * b.codes[t * D + c];
    }
    for (std::size_t c = 0; c < D; ++c) acc[h * D + c] += part[c] + offset_sum;
  }
  const auto buf = s.v_buffer();
  for (std::size_t t = 0; t < s.buffered_tokens(); ++t) {
    for (std::size_t h = 0; h < H; ++h) {
      const float w = weights[h * ctx + s.compressed_tokens() + t];
      for (std::size_t c = 0; c < D; ++c) {
        acc[h * D + c] += static_cast<double>(w) * buf[(t * H + h) * D + c];
      }
    }
  }
  std::vector<float> out(H * D);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(acc[i]);
  return out;
}

}  // namespace kvhuff::reference
