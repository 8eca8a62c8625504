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

#ifndef KVHUFF_ATTENTION_HPP_
#define KVHUFF_ATTENTION_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "kvhuff/kvcache.hpp"
#include "kvhuff/tensor_io.hpp"

namespace kvhuff {

// Bytes a decode pass pulls from the cache. Fused paths read compressed block
// extents plus the uncompressed buffer; the reference path reads the whole
// materialized float32 tensor.
struct AttentionTraffic {
  std::uint64_t compressed_bytes = 0;
  std::uint64_t uncompressed_bytes = 0;
  std::uint64_t operand_bytes = 0;  // query or weights

  std::uint64_t total() const { return compressed_bytes + uncompressed_bytes + operand_bytes; }
  AttentionTraffic& operator+=(const AttentionTraffic& o) {
    compressed_bytes += o.compressed_bytes;
    uncompressed_bytes += o.uncompressed_bytes;
    operand_bytes += o.operand_bytes;
    return *this;
  }
};

struct AttentionOutput {
  std::vector<float> out;     // [head_num, head_dim]
  std::vector<float> scores;  // [head_num, context_len], pre-softmax, scaled by 1/sqrt(head_dim)
  std::vector<float> weights; // [head_num, context_len], softmax of scores
};

// Logits for one query ([head_num, head_dim]) straight from the compressed K
// blocks: each slice is decoded into slice-local scratch and dotted with the
// query with dequantization folded in,
//   score = sum_c min_c * q_c + sum_c (scale_c * q_c) * code_c.
// Buffered tokens contribute exact dot products.
std::vector<float> fused_k_scores(const LayerCacheState& s, std::span<const float> q,
                                  AttentionTraffic* traffic = nullptr);

// weights: [head_num, context_len]. Each compressed V block yields a partial
// [head_dim] vector; partials and buffered-token terms are reduced per head in
// chunk order.
std::vector<float> fused_v_output(const LayerCacheState& s, std::span<const float> weights,
                                  AttentionTraffic* traffic = nullptr);

// fused_k_scores -> row softmax -> fused_v_output.
AttentionOutput attention_step(const LayerCacheState& s, std::span<const float> q,
                               AttentionTraffic* traffic = nullptr);

// Decode every block to codes, then dequantize to dense tensors, then run the
// dense reference; three separate passes over the cache.
AttentionOutput multistage_attention_step(const LayerCacheState& s, std::span<const float> q);

// Row-wise numerically stable softmax over [rows, cols], in place.
void softmax_rows(std::span<float> x, std::size_t rows, std::size_t cols);

// Dense references over materialized tensors.
std::vector<float> reference_scores(const CacheTensor& k, std::span<const float> q,
                                    AttentionTraffic* traffic = nullptr);
std::vector<float> reference_output(const CacheTensor& v, std::span<const float> weights,
                                    AttentionTraffic* traffic = nullptr);
AttentionOutput reference_attention(const CacheTensor& k, const CacheTensor& v,
                                    std::span<const float> q,
                                    AttentionTraffic* traffic = nullptr);

}  // namespace kvhuff

#endif  // KVHUFF_ATTENTION_HPP_
