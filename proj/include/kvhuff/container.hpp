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

#ifndef KVHUFF_CONTAINER_HPP_
#define KVHUFF_CONTAINER_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "kvhuff/codebook.hpp"
#include "kvhuff/kvcache.hpp"
#include "kvhuff/quantizer.hpp"
#include "kvhuff/tensor_io.hpp"

namespace kvhuff {

inline constexpr char kContainerMagic[4] = {'K', 'V', 'C', 'Z'};
inline constexpr std::uint8_t kContainerVersion = 1;

// Everything in a KVCZ file that precedes the arena bytes. All integers are
// little-endian.
//
//   "KVCZ" | version u8 | dtype u8 | k_mode u8 | v_mode u8
//   context_len u64 | head_num u64 | head_dim u64
//   block_size u32 | buffer_size u32 | rel_scale_k f64 | rel_scale_v f64
//   compressed_tokens u64
//   k code lengths u8[256] | v code lengths u8[256]
//   k_block_count u32 | v_block_count u32
//   k offsets u32[k_block_count] | v offsets u32[v_block_count]
//   k_arena_bytes u64 | v_arena_bytes u64 | buffered_tokens u64
//   k channel metas (f32 min, f32 scale)[head_num * head_dim]   (KChannel only)
//   k arena bytes | v arena bytes
//   k buffer f32[buffered * head_num * head_dim] | v buffer (same)
struct KvczHeader {
  DType dtype = DType::kFloat16;
  CacheShape shape;
  QuantConfig cfg_k, cfg_v;
  std::uint64_t compressed_tokens = 0;
  std::array<std::uint8_t, kSerializedCodebookBytes> k_lengths{}, v_lengths{};
  std::vector<std::uint32_t> k_offsets, v_offsets;
  std::uint64_t k_arena_bytes = 0, v_arena_bytes = 0;
  std::uint64_t buffered_tokens = 0;
  std::vector<QuantUnitMeta> k_channel_metas;
  std::size_t arena_begin = 0;  // byte offset of the K arena in the file
};

std::vector<std::uint8_t> save_kvcz(const LayerCacheState& s);

// Reads only the header and offset tables. Throws FormatError.
KvczHeader parse_kvcz_header(std::span<const std::uint8_t> bytes);

LayerCacheState load_kvcz(std::span<const std::uint8_t> bytes);

}  // namespace kvhuff

#endif  // KVHUFF_CONTAINER_HPP_
