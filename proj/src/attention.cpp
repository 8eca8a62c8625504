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

#include "kvhuff/attention.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "kvhuff/codec.hpp"
#include "kvhuff/error.hpp"
#include "kvhuff/parallel.hpp"

namespace kvhuff {

namespace {

void check_query(const LayerCacheState& s, std::span<const float> q) {
  if (q.size() != s.head_num() * s.head_dim()) {
    throw ConfigError("query must hold head_num * head_dim values");
  }
}

}  // namespace

std::vector<float> fused_k_scores(const LayerCacheState& s, std::span<const float> q,
                                  AttentionTraffic* traffic) {
  check_query(s, q);
  const std::size_t H = s.head_num(), D = s.head_dim(), ctx = s.context_len();
  const std::size_t bs = s.block_size();
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(D));
  std::vector<float> scores(H * ctx, 0.0f);

  const CompressedArena& arena = s.k_arena();
  const BlockLayout layout = s.k_layout();
  const TreeNode* tree = s.k_codebook().decode_tree().data();
  const auto n = static_cast<std::ptrdiff_t>(arena.block_count());
  std::uint64_t compressed = 0;
  ExceptionSink errors;
#pragma omp parallel for schedule(dynamic, 4) reduction(+ : compressed)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    errors.run([&] {
      const auto o = static_cast<std::size_t>(i);
      const BlockRef ref = parse_block(arena.block_extent(o), layout);
      if (ref.block_index != o) throw CodecError("K block indices are not dense");
      const std::size_t chunk = ref.block_index / H, h = ref.block_index % H;
      if (ref.slice_count != bs || (chunk + 1) * bs > s.compressed_tokens()) {
        throw CodecError("K block " + std::to_string(ref.block_index) + " has an invalid position");
      }
      const float* qh = q.data() + h * D;
      // Work-unit scratch: folded weights and one decoded slice.
      std::vector<double> folded(D);
      std::vector<std::uint8_t> codes(D + 1);
      double base = 0.0;
      for (std::size_t c = 0; c < D; ++c) {
        const QuantUnitMeta m = ref.meta(c);
        base += static_cast<double>(m.min_value) * qh[c];
        folded[c] = static_cast<double>(m.scale) * qh[c];
      }
      float* row = scores.data() + h * ctx + chunk * bs;
      std::uint32_t offset = 0;
      for (std::size_t t = 0; t < ref.slice_count; ++t) {
        const std::uint16_t bits = ref.bit_count(t);
        if (static_cast<std::uint64_t>(offset) + bits > ref.payload.size() * std::uint64_t{8}) {
          throw CodecError("K slice exceeds its payload");
        }
        std::uint32_t end_index = 0;
        const std::size_t emitted = decode_bits_branchless(ref.payload.data(), offset, bits, tree,
                                                           codes.data(), D, end_index);
        if (emitted != D || end_index != 0) throw CodecError("corrupt K slice");
        double acc = 0.0;
        for (std::size_t c = 0; c < D; ++c) acc += folded[c] * codes[c];
        row[t] = static_cast<float>((base + acc) * inv_sqrt);
        offset += bits;
      }
      compressed += ref.extent;
    });
  }
  errors.rethrow();

  const std::span<const float> buf = s.k_buffer();
  const std::size_t start = s.compressed_tokens();
  for (std::size_t t = 0; t < s.buffered_tokens(); ++t) {
    for (std::size_t h = 0; h < H; ++h) {
      const float* k = buf.data() + (t * H + h) * D;
      const float* qh = q.data() + h * D;
      double acc = 0.0;
      for (std::size_t c = 0; c < D; ++c) acc += static_cast<double>(k[c]) * qh[c];
      scores[h * ctx + start + t] = static_cast<float>(acc * inv_sqrt);
    }
  }
  if (traffic) {
    traffic->compressed_bytes += compressed;
    traffic->uncompressed_bytes += buf.size() * sizeof(float);
    traffic->operand_bytes += q.size() * sizeof(float);
  }
  return scores;
}

std::vector<float> fused_v_output(const LayerCacheState& s, std::span<const float> weights,
                                  AttentionTraffic* traffic) {
  const std::size_t H = s.head_num(), D = s.head_dim(), ctx = s.context_len();
  const std::size_t bs = s.block_size();
  if (weights.size() != H * ctx) {
    throw ConfigError("weights must hold head_num * context_len values");
  }
  const CompressedArena& arena = s.v_arena();
  const BlockLayout layout = s.v_layout();
  const TreeNode* tree = s.v_codebook().decode_tree().data();
  const std::size_t nblocks = arena.block_count();
  // One partial [head_dim] vector per block: O(context_len / block_size * head_dim).
  std::vector<double> partials(nblocks * D, 0.0);
  const auto n = static_cast<std::ptrdiff_t>(nblocks);
  std::uint64_t compressed = 0;
  ExceptionSink errors;
#pragma omp parallel for schedule(dynamic, 4) reduction(+ : compressed)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    errors.run([&] {
      const auto o = static_cast<std::size_t>(i);
      const BlockRef ref = parse_block(arena.block_extent(o), layout);
      if (ref.block_index != o) throw CodecError("V block indices are not dense");
      const std::size_t chunk = ref.block_index / H, h = ref.block_index % H;
      if (ref.slice_count != bs || (chunk + 1) * bs > s.compressed_tokens()) {
        throw CodecError("V block " + std::to_string(ref.block_index) + " has an invalid position");
      }
      const float* w = weights.data() + h * ctx + chunk * bs;
      double* part = partials.data() + o * D;
      std::vector<std::uint8_t> codes(D + 1);
      double offset_sum = 0.0;
      std::uint32_t offset = 0;
      for (std::size_t t = 0; t < ref.slice_count; ++t) {
        const QuantUnitMeta m = ref.meta(t);
        const std::uint16_t bits = ref.bit_count(t);
        if (static_cast<std::uint64_t>(offset) + bits > ref.payload.size() * std::uint64_t{8}) {
          throw CodecError("V slice exceeds its payload");
        }
        std::uint32_t end_index = 0;
        const std::size_t emitted = decode_bits_branchless(ref.payload.data(), offset, bits, tree,
                                                           codes.data(), D, end_index);
        if (emitted != D || end_index != 0) throw CodecError("corrupt V slice");
        offset_sum += static_cast<double>(w[t]) * m.min_value;
        const double coef = static_cast<double>(w[t]) * m.scale;
        for (std::size_t c = 0; c < D; ++c) part[c] += coef * codes[c];
        offset += bits;
      }
      for (std::size_t c = 0; c < D; ++c) part[c] += offset_sum;
      compressed += ref.extent;
    });
  }
  errors.rethrow();

  // Ordered reduction: chunk order per head, then buffered tokens.
  std::vector<double> acc(H * D, 0.0);
  const std::size_t chunks = s.compressed_chunks();
  for (std::size_t chunk = 0; chunk < chunks; ++chunk) {
    for (std::size_t h = 0; h < H; ++h) {
      const double* part = partials.data() + (chunk * H + h) * D;
      for (std::size_t c = 0; c < D; ++c) acc[h * D + c] += part[c];
    }
  }
  const std::span<const float> buf = s.v_buffer();
  const std::size_t start = s.compressed_tokens();
  for (std::size_t t = 0; t < s.buffered_tokens(); ++t) {
    for (std::size_t h = 0; h < H; ++h) {
      const float w = weights[h * ctx + start + t];
      const float* v = buf.data() + (t * H + h) * D;
      for (std::size_t c = 0; c < D; ++c) acc[h * D + c] += static_cast<double>(w) * v[c];
    }
  }
  std::vector<float> out(H * D);
  std::transform(acc.begin(), acc.end(), out.begin(), [](double x) { return static_cast<float>(x); });
  if (traffic) {
    traffic->compressed_bytes += compressed;
    traffic->uncompressed_bytes += buf.size() * sizeof(float);
    traffic->operand_bytes += weights.size() * sizeof(float);
  }
  return out;
}

void softmax_rows(std::span<float> x, std::size_t rows, std::size_t cols) {
  if (x.size() != rows * cols) throw ConfigError("softmax_rows: size mismatch");
  std::vector<double> exps;
  for (std::size_t r = 0; r < rows; ++r) {
    float* row = x.data() + r * cols;
    if (cols == 0) continue;
    const double mx = *std::max_element(row, row + cols);
    exps.resize(cols);
    double sum = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      exps[c] = std::exp(static_cast<double>(row[c]) - mx);
      sum += exps[c];
    }
    const double inv = 1.0 / sum;
    for (std::size_t c = 0; c < cols; ++c) row[c] = static_cast<float>(exps[c] * inv);
  }
}

AttentionOutput attention_step(const LayerCacheState& s, std::span<const float> q,
                               AttentionTraffic* traffic) {
  if (s.context_len() == 0) throw ConfigError("attention_step: empty context");
  AttentionOutput r;
  r.scores = fused_k_scores(s, q, traffic);
  r.weights = r.scores;
  softmax_rows(r.weights, s.head_num(), s.context_len());
  r.out = fused_v_output(s, r.weights, traffic);
  return r;
}

AttentionOutput multistage_attention_step(const LayerCacheState& s, std::span<const float> q) {
  check_query(s, q);
  const std::size_t H = s.head_num(), D = s.head_dim();
  const std::size_t row = H * D, bs = s.block_size();

  // Pass 1: entropy decode every block.
  auto decode_all = [&](const CompressedArena& arena, const HuffmanCodebook& cb,
                        const BlockLayout& layout) {
    std::vector<QuantizedBlock> blocks(arena.block_count());
    const auto n = static_cast<std::ptrdiff_t>(blocks.size());
    ExceptionSink errors;
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      errors.run([&] {
        blocks[static_cast<std::size_t>(i)] =
            decompress_block(arena, static_cast<std::size_t>(i), cb, layout);
      });
    }
    errors.rethrow();
    return blocks;
  };
  const auto kq = decode_all(s.k_arena(), s.k_codebook(), s.k_layout());
  const auto vq = decode_all(s.v_arena(), s.v_codebook(), s.v_layout());

  // Pass 2: dequantize into dense tensors.
  const CacheShape shape{s.context_len(), H, D};
  CacheTensor k(shape, DType::kFloat32), v(shape, DType::kFloat32);
  auto dequant_all = [&](const std::vector<QuantizedBlock>& blocks, QuantMode mode,
                         CacheTensor& out) {
    const auto n = static_cast<std::ptrdiff_t>(blocks.size());
    ExceptionSink errors;
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      errors.run([&] {
        const QuantizedBlock& b = blocks[static_cast<std::size_t>(i)];
        const std::vector<float> x = dequantize_block(b, mode);
        const std::size_t chunk = b.block_index / H, h = b.block_index % H;
        for (std::size_t r = 0; r < b.rows; ++r) {
          std::copy_n(x.data() + r * D, D, out.values.data() + (chunk * bs + r) * row + h * D);
        }
      });
    }
    errors.rethrow();
  };
  dequant_all(kq, s.cfg_k().mode, k);
  dequant_all(vq, s.cfg_v().mode, v);
  const auto tail = static_cast<std::ptrdiff_t>(s.compressed_tokens() * row);
  std::copy(s.k_buffer().begin(), s.k_buffer().end(), k.values.begin() + tail);
  std::copy(s.v_buffer().begin(), s.v_buffer().end(), v.values.begin() + tail);

  // Pass 3: dense attention.
  return reference_attention(k, v, q);
}

std::vector<float> reference_scores(const CacheTensor& k, std::span<const float> q,
                                    AttentionTraffic* traffic) {
  const std::size_t H = k.shape.head_num, D = k.shape.head_dim, ctx = k.shape.context_len;
  if (q.size() != H * D) throw ConfigError("reference_scores: query size mismatch");
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(D));
  std::vector<float> scores(H * ctx);
  const auto n = static_cast<std::ptrdiff_t>(ctx);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ti = 0; ti < n; ++ti) {
    const auto t = static_cast<std::size_t>(ti);
    for (std::size_t h = 0; h < H; ++h) {
      const float* kv = k.values.data() + (t * H + h) * D;
      const float* qh = q.data() + h * D;
      double acc = 0.0;
      for (std::size_t c = 0; c < D; ++c) acc += static_cast<double>(kv[c]) * qh[c];
      scores[h * ctx + t] = static_cast<float>(acc * inv_sqrt);
    }
  }
  if (traffic) {
    traffic->uncompressed_bytes += k.values.size() * sizeof(float);
    traffic->operand_bytes += q.size() * sizeof(float);
  }
  return scores;
}

std::vector<float> reference_output(const CacheTensor& v, std::span<const float> weights,
                                    AttentionTraffic* traffic) {
  const std::size_t H = v.shape.head_num, D = v.shape.head_dim, ctx = v.shape.context_len;
  if (weights.size() != H * ctx) throw ConfigError("reference_output: weights size mismatch");
  std::vector<double> acc(H * D, 0.0);
  const auto heads = static_cast<std::ptrdiff_t>(H);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t hi = 0; hi < heads; ++hi) {
    const auto h = static_cast<std::size_t>(hi);
    double* out = acc.data() + h * D;
    for (std::size_t t = 0; t < ctx; ++t) {
      const double w = weights[h * ctx + t];
      const float* vv = v.values.data() + (t * H + h) * D;
      for (std::size_t c = 0; c < D; ++c) out[c] += w * vv[c];
    }
  }
  if (traffic) {
    traffic->uncompressed_bytes += v.values.size() * sizeof(float);
    traffic->operand_bytes += weights.size() * sizeof(float);
  }
  std::vector<float> out(H * D);
  std::transform(acc.begin(), acc.end(), out.begin(), [](double x) { return static_cast<float>(x); });
  return out;
}

AttentionOutput reference_attention(const CacheTensor& k, const CacheTensor& v,
                                    std::span<const float> q, AttentionTraffic* traffic) {
  if (!(k.shape == v.shape)) throw ConfigError("reference_attention: K/V shapes differ");
  AttentionOutput r;
  r.scores = reference_scores(k, q, traffic);
  r.weights = r.scores;
  softmax_rows(r.weights, k.shape.head_num, k.shape.context_len);
  r.out = reference_output(v, r.weights, traffic);
  return r;
}

}  // namespace kvhuff
