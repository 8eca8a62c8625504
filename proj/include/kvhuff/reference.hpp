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

#ifndef KVHUFF_REFERENCE_HPP_
#define KVHUFF_REFERENCE_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "kvhuff/codebook.hpp"
#include "kvhuff/codec.hpp"
#include "kvhuff/kvcache.hpp"

// Straightforward serial implementations kept as oracles for the parallel,
// branch-free kernels and as the baseline in the benchmark.
namespace kvhuff::reference {

// Conditional tree walk: one branch per bit and one per leaf test. Throws
// CodecError on the same corruption conditions as decode_slice.
std::vector<std::uint8_t> decode_slice_naive(std::span<const std::uint8_t> payload,
                                             std::uint32_t bit_offset, std::uint16_t bit_count,
                                             std::span<const TreeNode> tree, std::size_t out_len);

// Encodes by emitting each codeword bit individually into a zeroed buffer.
EncodedSlice encode_slice_bitwise(std::span<const std::uint8_t> codes, const HuffmanCodebook& cb);

// Single-threaded fused K scores and V output over a cache state: same
// arithmetic as the OpenMP kernels, blocks visited in arena order.
std::vector<float> fused_k_scores_serial(const LayerCacheState& s, std::span<const float> q);
std::vector<float> fused_v_output_serial(const LayerCacheState& s, std::span<const float> weights);

}  // namespace kvhuff::reference

#endif  // KVHUFF_REFERENCE_HPP_
