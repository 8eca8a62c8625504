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

#ifndef KVHUFF_KVCACHE_HPP_
#define KVHUFF_KVCACHE_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "kvhuff/codebook.hpp"
#include "kvhuff/codec.hpp"
#include "kvhuff/quantizer.hpp"
#include "kvhuff/tensor_io.hpp"

namespace kvhuff {

enum class CacheSide { kKey, kValue, kBoth };

// Byte accounting for one layer's compressed K and/or V.
struct StorageBreakdown {
  std::uint64_t original_bytes = 0;  // K + V at the source dtype
  std::uint64_t payload_bytes = 0;   // Huffman payloads (byte padded)
  std::uint64_t buffer_bytes = 0;    // uncompressed buffered tokens at the source dtype
  std::uint64_t metadata_bytes = 0;  // block headers, counters, metas, padding, offsets, codebooks
  std::uint64_t payload_bits = 0;
  std::uint64_t compressed_values = 0;
  std::uint64_t total_values = 0;

  std::uint64_t compressed_bytes() const { return payload_bytes + buffer_bytes; }
  double compression_ratio() const;
  // Stored bits (everything) per cached value.
  double bits_per_value() const;
};

// Per-layer cache: two arenas of compressed blocks, pending token buffers, and
// the codebooks built once at prefill.
class LayerCacheState {
 public:
  // Quantizes every full block of the prompt, builds smoothed codebooks from
  // the prefill codes, compresses, and buffers the remainder tokens.
  static LayerCacheState prefill(const CacheTensor& k, const CacheTensor& v,
                                 const QuantConfig& cfg_k, const QuantConfig& cfg_v);

  // As prefill, but reuses existing codebooks instead of building new ones.
  static LayerCacheState prefill_with_codebooks(const CacheTensor& k, const CacheTensor& v,
                                                const QuantConfig& cfg_k,
                                                const QuantConfig& cfg_v,
                                                HuffmanCodebook k_codebook,
                                                HuffmanCodebook v_codebook);

  // Appends one token's [head_num, head_dim] K and V vectors. When more than
  // buffer_size tokens are buffered, the largest block-multiple prefix is
  // compressed as one batch and the rest stays buffered.
  void append_token(std::span<const float> k_vec, std::span<const float> v_vec);

  // Materialized float32 K and V: compressed region decoded and dequantized,
  // buffered region verbatim. Intended for testing and the multistage path.
  std::pair<CacheTensor, CacheTensor> fetch_dequantized() const;

  StorageBreakdown storage(CacheSide side = CacheSide::kBoth) const;

  std::size_t context_len() const { return context_len_; }
  std::size_t compressed_tokens() const { return compressed_tokens_; }
  std::size_t buffered_tokens() const { return context_len_ - compressed_tokens_; }
  std::size_t head_num() const { return head_num_; }
  std::size_t head_dim() const { return head_dim_; }
  std::size_t block_size() const { return cfg_k_.block_size; }
  std::size_t compressed_chunks() const { return compressed_tokens_ / cfg_k_.block_size; }
  DType dtype() const { return dtype_; }

  const QuantConfig& cfg_k() const { return cfg_k_; }
  const QuantConfig& cfg_v() const { return cfg_v_; }
  const CompressedArena& k_arena() const { return k_arena_; }
  const CompressedArena& v_arena() const { return v_arena_; }
  const HuffmanCodebook& k_codebook() const { return k_codebook_; }
  const HuffmanCodebook& v_codebook() const { return v_codebook_; }
  // Token-major [buffered, head_num, head_dim].
  std::span<const float> k_buffer() const { return k_buffer_; }
  std::span<const float> v_buffer() const { return v_buffer_; }
  // [head_num, head_dim]; empty unless cfg_k().mode is KChannel.
  std::span<const QuantUnitMeta> k_channel_metas() const { return k_channel_metas_; }

  BlockLayout k_layout() const { return {static_cast<std::uint32_t>(head_dim_), cfg_k_.mode}; }
  BlockLayout v_layout() const { return {static_cast<std::uint32_t>(head_dim_), cfg_v_.mode}; }

  // Everything needed to rebuild a state, as stored in a KVCZ container.
  struct Parts {
    CacheShape shape;  // context_len is the running length
    DType dtype = DType::kFloat16;
    QuantConfig cfg_k, cfg_v;
    std::size_t compressed_tokens = 0;
    HuffmanCodebook k_codebook, v_codebook;
    std::vector<QuantUnitMeta> k_channel_metas;
    CompressedArena k_arena, v_arena;
    std::vector<float> k_buffer, v_buffer;
  };
  // Validates counts against the invariants; throws FormatError.
  static LayerCacheState from_parts(Parts parts);

 private:
  LayerCacheState() = default;

  static void validate_configs(const QuantConfig& cfg_k, const QuantConfig& cfg_v,
                               std::size_t head_dim);
  static LayerCacheState init(const CacheTensor& k, const CacheTensor& v,
                              const QuantConfig& cfg_k, const QuantConfig& cfg_v);

  // Quantizes `chunks` chunks of block_size tokens read from token-major
  // k/v data, starting at chunk number first_chunk.
  std::pair<std::vector<QuantizedBlock>, std::vector<QuantizedBlock>> quantize_chunks(
      std::span<const float> k, std::span<const float> v, std::size_t chunks,
      std::size_t first_chunk) const;
  void compress_and_append(const std::vector<QuantizedBlock>& kq,
                           const std::vector<QuantizedBlock>& vq);

  std::size_t head_num_ = 0;
  std::size_t head_dim_ = 0;
  DType dtype_ = DType::kFloat32;
  QuantConfig cfg_k_, cfg_v_;
  std::size_t context_len_ = 0;
  std::size_t compressed_tokens_ = 0;
  HuffmanCodebook k_codebook_, v_codebook_;
  std::vector<QuantUnitMeta> k_channel_metas_;
  CompressedArena k_arena_, v_arena_;
  std::vector<float> k_buffer_, v_buffer_;
};

}  // namespace kvhuff

#endif  // KVHUFF_KVCACHE_HPP_
