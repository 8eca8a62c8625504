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

#include "kvhuff/kvcache.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "kvhuff/error.hpp"
#include "kvhuff/parallel.hpp"

namespace kvhuff {

double StorageBreakdown::compression_ratio() const {
  const std::uint64_t stored = compressed_bytes() + metadata_bytes;
  return stored == 0 ? 0.0 : static_cast<double>(original_bytes) / static_cast<double>(stored);
}

double StorageBreakdown::bits_per_value() const {
  return total_values == 0 ? 0.0
                           : 8.0 * static_cast<double>(compressed_bytes() + metadata_bytes) /
                                 static_cast<double>(total_values);
}

void LayerCacheState::validate_configs(const QuantConfig& cfg_k, const QuantConfig& cfg_v,
                                       std::size_t head_dim) {
  cfg_k.validate();
  cfg_v.validate();
  if (cfg_k.mode == QuantMode::kVToken) throw ConfigError("K cache cannot use VToken mode");
  if (cfg_v.mode != QuantMode::kVToken) throw ConfigError("V cache must use VToken mode");
  if (cfg_k.block_size != cfg_v.block_size || cfg_k.buffer_size != cfg_v.buffer_size) {
    throw ConfigError("K and V must share block_size and buffer_size");
  }
  if (cfg_k.block_size > 0xffffu) throw ConfigError("block_size must fit 16 bits");
  // Every slice count must fit its 16-bit counter even at the 32-bit code cap.
  if (head_dim == 0 || head_dim * kMaxCodeLength > 0xffffu) {
    throw ConfigError("head_dim must lie in [1, 2047]");
  }
}

LayerCacheState LayerCacheState::init(const CacheTensor& k, const CacheTensor& v,
                                      const QuantConfig& cfg_k, const QuantConfig& cfg_v) {
  if (!(k.shape == v.shape)) throw ConfigError("K and V shapes differ");
  if (k.dtype != v.dtype) throw ConfigError("K and V dtypes differ");
  k.validate();
  v.validate();
  validate_configs(cfg_k, cfg_v, k.shape.head_dim);

  LayerCacheState s;
  s.head_num_ = k.shape.head_num;
  s.head_dim_ = k.shape.head_dim;
  s.dtype_ = k.dtype;
  s.cfg_k_ = cfg_k;
  s.cfg_v_ = cfg_v;
  s.context_len_ = k.shape.context_len;
  if (cfg_k.mode == QuantMode::kKChannel) {
    s.k_channel_metas_.reserve(s.head_num_ * s.head_dim_);
    for (std::size_t h = 0; h < s.head_num_; ++h) {
      auto m = compute_channel_metas(k.values, s.context_len_, s.head_num_, s.head_dim_, h,
                                     cfg_k.rel_quant_scale);
      s.k_channel_metas_.insert(s.k_channel_metas_.end(), m.begin(), m.end());
    }
  }
  return s;
}

std::pair<std::vector<QuantizedBlock>, std::vector<QuantizedBlock>>
LayerCacheState::quantize_chunks(std::span<const float> k, std::span<const float> v,
                                 std::size_t chunks, std::size_t first_chunk) const {
  const std::size_t bs = cfg_k_.block_size;
  const std::size_t row = head_num_ * head_dim_;
  const std::size_t n = chunks * head_num_;
  std::vector<QuantizedBlock> kq(n), vq(n);
  const auto count = static_cast<std::ptrdiff_t>(n);
  ExceptionSink errors;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < count; ++i) errors.run([&] {
    const auto o = static_cast<std::size_t>(i);
    const std::size_t local = o / head_num_, h = o % head_num_;
    const std::size_t chunk = first_chunk + local;
    const std::size_t start = local * bs * row + h * head_dim_;
    const std::size_t span_len = (bs - 1) * row + head_dim_;
    const BlockPosition pos{make_block_index(chunk, h, head_num_), h, chunk * bs};
    const BlockView kb{k.subspan(start, span_len), bs, head_dim_, row};
    const BlockView vb{v.subspan(start, span_len), bs, head_dim_, row};
    std::span<const QuantUnitMeta> channel;
    if (cfg_k_.mode == QuantMode::kKChannel) {
      channel = std::span<const QuantUnitMeta>(k_channel_metas_).subspan(h * head_dim_, head_dim_);
    }
    kq[o] = quantize_block(kb, cfg_k_.mode, cfg_k_, pos, channel);
    vq[o] = quantize_block(vb, cfg_v_.mode, cfg_v_, pos);
  });
  errors.rethrow();
  return {std::move(kq), std::move(vq)};
}

void LayerCacheState::compress_and_append(const std::vector<QuantizedBlock>& kq,
                                          const std::vector<QuantizedBlock>& vq) {
  std::vector<CompressedBlock> kc(kq.size()), vc(vq.size());
  const auto count = static_cast<std::ptrdiff_t>(kq.size());
  ExceptionSink errors;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < count; ++i) errors.run([&] {
    const auto o = static_cast<std::size_t>(i);
    kc[o] = compress_block(kq[o], k_codebook_);
    vc[o] = compress_block(vq[o], v_codebook_);
  });
  errors.rethrow();
  k_arena_.append_batch(kc);
  v_arena_.append_batch(vc);
}

LayerCacheState LayerCacheState::prefill(const CacheTensor& k, const CacheTensor& v,
                                         const QuantConfig& cfg_k, const QuantConfig& cfg_v) {
  LayerCacheState s = init(k, v, cfg_k, cfg_v);
  const std::size_t chunks = s.context_len_ / cfg_k.block_size;
  auto [kq, vq] = s.quantize_chunks(k.values, v.values, chunks, 0);

  Histogram kh, vh;
  for (const auto& q : kq) accumulate_histogram(kh, q.codes);
  for (const auto& q : vq) accumulate_histogram(vh, q.codes);
  s.k_codebook_ = build_codebook(smooth_histogram(kh, cfg_k.max_code()));
  s.v_codebook_ = build_codebook(smooth_histogram(vh, cfg_v.max_code()));

  s.compress_and_append(kq, vq);
  s.compressed_tokens_ = chunks * cfg_k.block_size;
  const std::size_t tail = s.compressed_tokens_ * s.head_num_ * s.head_dim_;
  s.k_buffer_.assign(k.values.begin() + static_cast<std::ptrdiff_t>(tail), k.values.end());
  s.v_buffer_.assign(v.values.begin() + static_cast<std::ptrdiff_t>(tail), v.values.end());
  return s;
}

LayerCacheState LayerCacheState::prefill_with_codebooks(const CacheTensor& k,
                                                        const CacheTensor& v,
                                                        const QuantConfig& cfg_k,
                                                        const QuantConfig& cfg_v,
                                                        HuffmanCodebook k_codebook,
                                                        HuffmanCodebook v_codebook) {
  LayerCacheState s = init(k, v, cfg_k, cfg_v);
  s.k_codebook_ = std::move(k_codebook);
  s.v_codebook_ = std::move(v_codebook);
  const std::size_t chunks = s.context_len_ / cfg_k.block_size;
  auto [kq, vq] = s.quantize_chunks(k.values, v.values, chunks, 0);
  s.compress_and_append(kq, vq);
  s.compressed_tokens_ = chunks * cfg_k.block_size;
  const std::size_t tail = s.compressed_tokens_ * s.head_num_ * s.head_dim_;
  s.k_buffer_.assign(k.values.begin() + static_cast<std::ptrdiff_t>(tail), k.values.end());
  s.v_buffer_.assign(v.values.begin() + static_cast<std::ptrdiff_t>(tail), v.values.end());
  return s;
}

void LayerCacheState::append_token(std::span<const float> k_vec, std::span<const float> v_vec) {
  const std::size_t row = head_num_ * head_dim_;
  if (k_vec.size() != row || v_vec.size() != row) {
    throw ConfigError("append_token: expected " + std::to_string(row) + " values per vector");
  }
  for (std::size_t i = 0; i < row; ++i) {
    if (!std::isfinite(k_vec[i]) || !std::isfinite(v_vec[i])) {
      throw ConfigError("append_token: non-finite value");
    }
  }
  k_buffer_.insert(k_buffer_.end(), k_vec.begin(), k_vec.end());
  v_buffer_.insert(v_buffer_.end(), v_vec.begin(), v_vec.end());
  ++context_len_;

  const std::size_t buffered = buffered_tokens();
  if (buffered <= cfg_k_.buffer_size) return;
  const std::size_t chunks = buffered / cfg_k_.block_size;
  auto [kq, vq] = quantize_chunks(k_buffer_, v_buffer_, chunks, compressed_chunks());
  compress_and_append(kq, vq);
  const auto consumed = static_cast<std::ptrdiff_t>(chunks * cfg_k_.block_size * row);
  k_buffer_.erase(k_buffer_.begin(), k_buffer_.begin() + consumed);
  v_buffer_.erase(v_buffer_.begin(), v_buffer_.begin() + consumed);
  compressed_tokens_ += chunks * cfg_k_.block_size;
}

std::pair<CacheTensor, CacheTensor> LayerCacheState::fetch_dequantized() const {
  const CacheShape shape{context_len_, head_num_, head_dim_};
  CacheTensor k(shape, DType::kFloat32), v(shape, DType::kFloat32);
  const std::size_t row = head_num_ * head_dim_;
  const std::size_t bs = cfg_k_.block_size;

  auto unpack = [&](const CompressedArena& arena, const HuffmanCodebook& cb,
                    const BlockLayout& layout, CacheTensor& out) {
    const auto n = static_cast<std::ptrdiff_t>(arena.block_count());
    ExceptionSink errors;
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) errors.run([&] {
      const QuantizedBlock q = decompress_block(arena, static_cast<std::size_t>(i), cb, layout);
      const std::vector<float> x = dequantize_block(q, layout.mode);
      const std::size_t chunk = q.block_index / head_num_, h = q.block_index % head_num_;
      if (q.rows != bs || chunk * bs + q.rows > compressed_tokens_) {
        throw CodecError("block " + std::to_string(q.block_index) +
                         " lies outside the compressed region");
      }
      for (std::size_t r = 0; r < q.rows; ++r) {
        std::copy_n(x.data() + r * head_dim_, head_dim_,
                    out.values.data() + (chunk * bs + r) * row + h * head_dim_);
      }
    });
    errors.rethrow();
  };
  unpack(k_arena_, k_codebook_, k_layout(), k);
  unpack(v_arena_, v_codebook_, v_layout(), v);

  const std::size_t tail = compressed_tokens_ * row;
  std::copy(k_buffer_.begin(), k_buffer_.end(), k.values.begin() + static_cast<std::ptrdiff_t>(tail));
  std::copy(v_buffer_.begin(), v_buffer_.end(), v.values.begin() + static_cast<std::ptrdiff_t>(tail));
  return {std::move(k), std::move(v)};
}

StorageBreakdown LayerCacheState::storage(CacheSide side) const {
  StorageBreakdown b;
  const std::uint64_t sides = side == CacheSide::kBoth ? 2 : 1;
  const std::uint64_t width = dtype_bytes(dtype_);
  const std::uint64_t row = head_num_ * head_dim_;
  b.total_values = sides * context_len_ * row;
  b.compressed_values = sides * compressed_tokens_ * row;
  b.original_bytes = b.total_values * width;
  b.buffer_bytes = sides * buffered_tokens() * row * width;
  std::uint64_t arena_bytes = 0, offsets = 0;
  auto visit = [&](const CompressedArena& arena, const BlockLayout& layout) {
    for (std::size_t o = 0; o < arena.block_count(); ++o) {
      const BlockRef ref = parse_block(arena.block_extent(o), layout);
      b.payload_bytes += ref.payload.size();
      for (std::size_t s = 0; s < ref.slice_count; ++s) b.payload_bits += ref.bit_count(s);
    }
    arena_bytes += arena.write_cursor();
    offsets += 4 * arena.block_count();
  };
  if (side != CacheSide::kValue) visit(k_arena_, k_layout());
  if (side != CacheSide::kKey) visit(v_arena_, v_layout());
  b.metadata_bytes =
      (arena_bytes - b.payload_bytes) + offsets + sides * kSerializedCodebookBytes;
  return b;
}

LayerCacheState LayerCacheState::from_parts(Parts p) {
  validate_configs(p.cfg_k, p.cfg_v, p.shape.head_dim);
  if (p.shape.head_num == 0) throw FormatError("state: zero head_num");
  const std::size_t bs = p.cfg_k.block_size;
  if (p.compressed_tokens % bs != 0 || p.compressed_tokens > p.shape.context_len) {
    throw FormatError("state: compressed token count inconsistent with block size");
  }
  const std::size_t row = p.shape.head_num * p.shape.head_dim;
  const std::size_t buffered = p.shape.context_len - p.compressed_tokens;
  if (buffered > p.cfg_k.buffer_size) throw FormatError("state: buffer exceeds buffer_size");
  if (p.k_buffer.size() != buffered * row || p.v_buffer.size() != buffered * row) {
    throw FormatError("state: buffer length mismatch");
  }
  const std::size_t blocks = p.compressed_tokens / bs * p.shape.head_num;
  const BlockLayout k_layout{static_cast<std::uint32_t>(p.shape.head_dim), p.cfg_k.mode};
  const BlockLayout v_layout{static_cast<std::uint32_t>(p.shape.head_dim), QuantMode::kVToken};
  for (const auto& [a, layout] : {std::pair(&p.k_arena, k_layout), std::pair(&p.v_arena, v_layout)}) {
    if (a->block_count() != blocks) throw FormatError("state: arena block count mismatch");
    for (std::size_t o = 0; o < blocks; ++o) {
      const auto extent = a->block_extent(o);
      BlockRef ref;
      try {
        ref = parse_block(extent, layout);
      } catch (const CodecError& e) {
        throw FormatError(std::string("state: ") + e.what());
      }
      if (ref.block_index != o) throw FormatError("state: block indices not dense");
      if (ref.slice_count != bs) throw FormatError("state: block slice count differs from block size");
      const std::size_t used = static_cast<std::size_t>(ref.payload.data() + ref.payload.size() - extent.data());
      if ((used + kArenaAlignment - 1) / kArenaAlignment * kArenaAlignment != extent.size()) {
        throw FormatError("state: block extent does not match its header");
      }
    }
  }
  const bool channel = p.cfg_k.mode == QuantMode::kKChannel;
  if (p.k_channel_metas.size() != (channel ? row : 0)) {
    throw FormatError("state: channel meta count mismatch");
  }
  LayerCacheState s;
  s.head_num_ = p.shape.head_num;
  s.head_dim_ = p.shape.head_dim;
  s.dtype_ = p.dtype;
  s.cfg_k_ = p.cfg_k;
  s.cfg_v_ = p.cfg_v;
  s.context_len_ = p.shape.context_len;
  s.compressed_tokens_ = p.compressed_tokens;
  s.k_codebook_ = std::move(p.k_codebook);
  s.v_codebook_ = std::move(p.v_codebook);
  s.k_channel_metas_ = std::move(p.k_channel_metas);
  s.k_arena_ = std::move(p.k_arena);
  s.v_arena_ = std::move(p.v_arena);
  s.k_buffer_ = std::move(p.k_buffer);
  s.v_buffer_ = std::move(p.v_buffer);
  return s;
}

}  // namespace kvhuff
