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

#ifndef KVHUFF_CODEBOOK_HPP_
#define KVHUFF_CODEBOOK_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace kvhuff {

inline constexpr std::size_t kAlphabetSize = 256;
inline constexpr std::uint32_t kMaxCodeLength = 32;

struct Histogram {
  std::array<std::uint64_t, kAlphabetSize> counts{};

  std::uint64_t total() const;
  Histogram& operator+=(const Histogram& o);
  friend bool operator==(const Histogram&, const Histogram&) = default;
};

// Throws ConfigError on empty input.
Histogram build_histogram(std::span<const std::uint8_t> codes);
// Adds codes into an existing histogram (no emptiness check).
void accumulate_histogram(Histogram& h, std::span<const std::uint8_t> codes);

// Add-one smoothing over [0, max_code] so every representable code is
// encodable by the resulting codebook.
Histogram smooth_histogram(const Histogram& h, std::uint32_t max_code);

// Shannon entropy in bits per symbol.
double entropy_bits(const Histogram& h);

struct Codeword {
  std::uint32_t bits = 0;  // right-aligned, emitted MSB first
  std::uint8_t length = 0;
  friend bool operator==(const Codeword&, const Codeword&) = default;
};

// Array-form decode tree node. Root is node 0. Leaves carry is_symbol = 1 and
// both children 0, so `index &= ~(-is_symbol)` returns the walk to the root.
struct TreeNode {
  std::array<std::uint32_t, 2> child{0, 0};
  std::uint32_t is_symbol = 0;
  std::uint8_t symbol = 0;
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

class HuffmanCodebook {
 public:
  // Builds canonical codewords and the decode tree from per-symbol code
  // lengths (0 = absent). Throws CodecError when the lengths are not a
  // complete prefix code; a lone symbol of length 1 is the one exception.
  static HuffmanCodebook from_lengths(std::span<const std::uint8_t> lengths);

  const std::array<std::uint8_t, kAlphabetSize>& code_lengths() const { return lengths_; }
  const std::array<Codeword, kAlphabetSize>& encode_table() const { return table_; }
  // Present symbols sorted by (length, symbol).
  const std::vector<std::uint8_t>& canonical_order() const { return order_; }
  const std::vector<TreeNode>& decode_tree() const { return tree_; }
  std::uint32_t max_code_length() const { return max_length_; }
  std::size_t symbol_count() const { return order_.size(); }
  bool contains(std::uint8_t s) const { return lengths_[s] != 0; }

  // Total bits to encode every symbol counted by h (absent symbols count 0).
  std::uint64_t encoded_bits(const Histogram& h) const;

  friend bool operator==(const HuffmanCodebook& a, const HuffmanCodebook& b) {
    return a.lengths_ == b.lengths_;
  }

 private:
  std::array<std::uint8_t, kAlphabetSize> lengths_{};
  std::array<Codeword, kAlphabetSize> table_{};
  std::vector<std::uint8_t> order_;
  std::vector<TreeNode> tree_;
  std::uint32_t max_length_ = 0;
};

// Optimal code lengths with deterministic tie-breaking (weight, then lowest
// contained symbol), then canonical codewords. Throws CodecError on an empty
// histogram or when a code would exceed kMaxCodeLength bits.
HuffmanCodebook build_codebook(const Histogram& h);

inline constexpr std::size_t kSerializedCodebookBytes = kAlphabetSize;

std::array<std::uint8_t, kSerializedCodebookBytes> serialize_codebook(const HuffmanCodebook& cb);
HuffmanCodebook deserialize_codebook(std::span<const std::uint8_t> bytes);

}  // namespace kvhuff

#endif  // KVHUFF_CODEBOOK_HPP_
