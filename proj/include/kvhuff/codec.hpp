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

#ifndef KVHUFF_CODEC_HPP_
#define KVHUFF_CODEC_HPP_

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "kvhuff/codebook.hpp"
#include "kvhuff/quantizer.hpp"

namespace kvhuff {

// ---------------------------------------------------------------------------
// Slice coding. A slice is one token's head_dim codes, for K and V alike.
// Bits are packed MSB-first within each byte; codewords are written most
// significant bit first.
// ---------------------------------------------------------------------------

struct EncodedSlice {
  std::vector<std::uint8_t> bytes;  // ceil(bit_count / 8) bytes, zero padded
  std::uint16_t bit_count = 0;
};

// Throws CodecError when a code is absent from cb or the slice exceeds 65535
// bits.
EncodedSlice encode_slice(std::span<const std::uint8_t> codes, const HuffmanCodebook& cb);

// Sum of code lengths for the slice, without materializing bits.
std::uint32_t slice_bit_length(std::span<const std::uint8_t> codes, const HuffmanCodebook& cb);

struct ScanResult {
  std::vector<std::uint32_t> offsets;  // exclusive prefix sums
  std::uint32_t total_bits = 0;
};

ScanResult scan_offsets(std::span<const std::uint16_t> bit_counts);

// Branch-free tree walk over bits [bit_offset, bit_offset + bit_count) of
// payload. Every step writes the current node's symbol at the write position
// and advances the position by is_symbol; the walk resets to the root with
// index &= ~(-is_symbol). `out` must hold at least out_len + 1 bytes (the
// extra slot absorbs writes past the end of a corrupt stream).
//
// Returns the number of symbols emitted; `end_index` receives the tree index
// after the last bit (0 for a well-formed slice).
inline std::size_t decode_bits_branchless(const std::uint8_t* payload, std::uint32_t bit_offset,
                                          std::uint32_t bit_count, const TreeNode* tree,
                                          std::uint8_t* out, std::size_t out_len,
                                          std::uint32_t& end_index) {
  std::uint32_t index = 0;
  std::size_t pos = 0;
  for (std::uint32_t i = 0; i < bit_count; ++i) {
    const std::uint32_t p = bit_offset + i;
    const std::uint32_t bit = (payload[p >> 3] >> (7 - (p & 7u))) & 1u;
    index = tree[index].child[bit];
    const std::uint32_t is_symbol = tree[index].is_symbol;
    out[std::min(pos, out_len)] = tree[index].symbol;
    pos += is_symbol;
    index &= ~(0u - is_symbol);
  }
  end_index = index;
  return pos;
}

// Decodes exactly out_len symbols; throws CodecError when the stream does not
// decode to exactly out_len symbols ending on a codeword boundary.
std::vector<std::uint8_t> decode_slice(std::span<const std::uint8_t> payload,
                                       std::uint32_t bit_offset, std::uint16_t bit_count,
                                       std::span<const TreeNode> tree, std::size_t out_len);

// Same contract, writing into caller scratch of at least out_len + 1 bytes.
void decode_slice_into(std::span<const std::uint8_t> payload, std::uint32_t bit_offset,
                       std::uint16_t bit_count, std::span<const TreeNode> tree,
                       std::span<std::uint8_t> scratch, std::size_t out_len);

// ---------------------------------------------------------------------------
// Compressed blocks.
// ---------------------------------------------------------------------------

struct CompressedBlock {
  std::uint32_t block_index = 0;
  std::uint32_t slice_len = 0;  // head_dim; not serialized
  std::vector<std::uint16_t> slice_bit_counts;
  std::vector<QuantUnitMeta> unit_metas;
  std::vector<std::uint8_t> payload;

  std::uint32_t payload_bits() const;
  // Serialized bytes including the trailing pad to a 4-byte boundary.
  std::size_t serialized_size() const;
  friend bool operator==(const CompressedBlock&, const CompressedBlock&) = default;
};

inline constexpr std::size_t kArenaAlignment = 4;
inline constexpr std::size_t kBlockHeaderBytes = 4 + 2;  // block_index, slice count

// Slices are the rows of the token-major code matrix.
CompressedBlock compress_block(const QuantizedBlock& q, const HuffmanCodebook& cb);

// Writes block_index u32, slice count u16, slice_bit_counts u16[], unit metas
// as (f32 min, f32 scale) pairs, payload, zero pad to 4 bytes. dst must hold
// serialized_size() bytes.
void serialize_block(const CompressedBlock& b, std::span<std::uint8_t> dst);

// How to interpret a serialized block: the meta count is head_dim for
// per-channel modes and the slice count for VToken.
struct BlockLayout {
  std::uint32_t head_dim = 0;
  QuantMode mode = QuantMode::kKBlock;
};

// Zero-copy view of one serialized block inside an arena.
struct BlockRef {
  std::uint32_t block_index = 0;
  std::uint32_t slice_count = 0;
  const std::uint8_t* bit_counts = nullptr;  // u16 little-endian each
  const std::uint8_t* metas = nullptr;       // (f32, f32) little-endian pairs
  std::uint32_t meta_count = 0;
  std::span<const std::uint8_t> payload;
  std::size_t extent = 0;  // bytes occupied in the arena

  std::uint16_t bit_count(std::size_t slice) const;
  QuantUnitMeta meta(std::size_t i) const;
};

// Parses and validates a block header against its extent; throws CodecError.
BlockRef parse_block(std::span<const std::uint8_t> extent, const BlockLayout& layout);

// ---------------------------------------------------------------------------
// Append-only arena.
// ---------------------------------------------------------------------------

inline constexpr std::size_t kDefaultArenaLimit = 0xffffffffu;

class CompressedArena {
 public:
  explicit CompressedArena(std::size_t max_bytes = kDefaultArenaLimit);
  CompressedArena(const CompressedArena& o);
  CompressedArena(CompressedArena&& o) noexcept;
  CompressedArena& operator=(const CompressedArena& o);
  CompressedArena& operator=(CompressedArena&& o) noexcept;

  // Rebuilds an arena from stored bytes and offsets; validates offset order
  // and alignment (FormatError).
  static CompressedArena from_parts(std::vector<std::uint8_t> bytes,
                                    std::vector<std::uint32_t> offsets,
                                    std::size_t max_bytes = kDefaultArenaLimit);

  // Grows storage so `bytes` more bytes and `blocks` more blocks can be
  // appended concurrently. Not thread-safe. Throws CapacityError past the
  // configured limit.
  void reserve_additional(std::size_t bytes, std::size_t blocks);

  // Single-writer append; grows storage as needed. Returns the arrival ordinal.
  std::size_t append(const CompressedBlock& b);

  // Lock-free append within reserved capacity: one compare-exchange claims
  // both the byte range and the ordinal, so offsets stay increasing with
  // ordinals. Safe to call from many threads.
  std::size_t append_concurrent(const CompressedBlock& b);

  // Exclusive scan of serialized sizes, one reservation, then parallel
  // serialization. Blocks land in span order. Returns the first ordinal.
  std::size_t append_batch(std::span<const CompressedBlock> blocks);

  std::size_t block_count() const { return static_cast<std::size_t>(state_.load() >> 32); }
  std::uint64_t write_cursor() const { return state_.load() & 0xffffffffu; }
  std::size_t max_bytes() const { return max_bytes_; }

  std::span<const std::uint8_t> bytes() const { return {bytes_.data(), write_cursor()}; }
  std::span<const std::uint32_t> block_offsets() const { return {offsets_.data(), block_count()}; }
  // Byte range of block `ordinal`; throws CodecError when out of range.
  std::span<const std::uint8_t> block_extent(std::size_t ordinal) const;

 private:
  std::pair<std::uint64_t, std::size_t> claim(std::size_t size);

  std::size_t max_bytes_;
  std::vector<std::uint8_t> bytes_;     // size = reserved byte capacity
  std::vector<std::uint32_t> offsets_;  // size = reserved block capacity
  // (block_count << 32) | write_cursor
  std::atomic<std::uint64_t> state_{0};
};

// Inverse of compress_block + append for block `ordinal`.
QuantizedBlock decompress_block(const CompressedArena& arena, std::size_t ordinal,
                                const HuffmanCodebook& cb, const BlockLayout& layout);

// block_index of block `ordinal`, read from its stored header.
std::uint32_t stored_block_index(const CompressedArena& arena, std::size_t ordinal);

// ---------------------------------------------------------------------------
// Metadata accounting.
// ---------------------------------------------------------------------------

struct MetadataOverhead {
  std::uint64_t payload_bits = 0;    // sum of slice bit counts
  std::uint64_t counter_bits = 0;    // 16 per slice
  std::uint64_t header_bits = 0;     // block_index, slice count, metas, padding
  std::uint64_t offset_bits = 0;     // 32 per block (offsets table)
  std::uint64_t value_count = 0;
  double avg_bits_per_code = 0.0;
  double fraction_of_compressed = 0.0;  // counter_bits / payload_bits
  double fraction_of_original = 0.0;    // counter_bits / (value_count * original_bits)
};

// original_bits_per_value is the width of the uncompressed element (16 for
// float16 caches).
MetadataOverhead metadata_overhead(std::span<const CompressedBlock> blocks,
                                   std::uint32_t original_bits_per_value = 16);

}  // namespace kvhuff

#endif  // KVHUFF_CODEC_HPP_
