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

#include "kvhuff/codebook.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <string>
#include <tuple>

#include "kvhuff/error.hpp"

namespace kvhuff {

std::uint64_t Histogram::total() const {
  std::uint64_t s = 0;
  for (auto c : counts) s += c;
  return s;
}

Histogram& Histogram::operator+=(const Histogram& o) {
  for (std::size_t i = 0; i < kAlphabetSize; ++i) counts[i] += o.counts[i];
  return *this;
}

void accumulate_histogram(Histogram& h, std::span<const std::uint8_t> codes) {
  for (std::uint8_t c : codes) ++h.counts[c];
}

Histogram build_histogram(std::span<const std::uint8_t> codes) {
  if (codes.empty()) throw ConfigError("build_histogram: empty input");
  Histogram h;
  accumulate_histogram(h, codes);
  return h;
}

Histogram smooth_histogram(const Histogram& h, std::uint32_t max_code) {
  Histogram out = h;
  const std::uint32_t top = std::min<std::uint32_t>(max_code, kAlphabetSize - 1);
  for (std::uint32_t c = 0; c <= top; ++c) ++out.counts[c];
  return out;
}

double entropy_bits(const Histogram& h) {
  const double total = static_cast<double>(h.total());
  if (total == 0.0) return 0.0;
  double e = 0.0;
  for (auto c : h.counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / total;
    e -= p * std::log2(p);
  }
  return e;
}

HuffmanCodebook HuffmanCodebook::from_lengths(std::span<const std::uint8_t> lengths) {
  if (lengths.size() != kAlphabetSize) {
    throw CodecError("codebook: expected 256 code lengths, got " + std::to_string(lengths.size()));
  }
  HuffmanCodebook cb;
  std::copy(lengths.begin(), lengths.end(), cb.lengths_.begin());

  std::uint64_t kraft = 0;  // sum of 2^(32 - len)
  for (std::size_t s = 0; s < kAlphabetSize; ++s) {
    const std::uint32_t len = cb.lengths_[s];
    if (len == 0) continue;
    if (len > kMaxCodeLength) {
      throw CodecError("codebook: code length " + std::to_string(len) + " exceeds 32");
    }
    cb.order_.push_back(static_cast<std::uint8_t>(s));
    kraft += std::uint64_t{1} << (kMaxCodeLength - len);
    cb.max_length_ = std::max(cb.max_length_, len);
  }
  if (cb.order_.empty()) throw CodecError("codebook: no symbols present");
  const bool lone = cb.order_.size() == 1 && cb.max_length_ == 1;
  if (!lone && kraft != (std::uint64_t{1} << kMaxCodeLength)) {
    throw CodecError("codebook: code lengths violate Kraft equality");
  }

  std::stable_sort(cb.order_.begin(), cb.order_.end(), [&](std::uint8_t a, std::uint8_t b) {
    return cb.lengths_[a] < cb.lengths_[b];
  });

  // Canonical assignment: consecutive codewords within a length, shifted left
  // when the length grows.
  std::uint64_t code = 0;
  std::uint32_t prev_len = cb.lengths_[cb.order_.front()];
  for (std::uint8_t s : cb.order_) {
    const std::uint32_t len = cb.lengths_[s];
    code <<= (len - prev_len);
    prev_len = len;
    cb.table_[s] = Codeword{static_cast<std::uint32_t>(code), static_cast<std::uint8_t>(len)};
    ++code;
  }

  // Decode tree: insert every codeword from the root.
  cb.tree_.reserve(2 * cb.order_.size());
  cb.tree_.push_back(TreeNode{});
  for (std::uint8_t s : cb.order_) {
    const Codeword cw = cb.table_[s];
    std::uint32_t node = 0;
    for (std::uint32_t i = 0; i < cw.length; ++i) {
      const std::uint32_t bit = (cw.bits >> (cw.length - 1 - i)) & 1u;
      const bool last = i + 1 == cw.length;
      if (cb.tree_[node].child[bit] == 0) {
        const auto fresh = static_cast<std::uint32_t>(cb.tree_.size());
        TreeNode n;
        if (last) {
          n.is_symbol = 1;
          n.symbol = s;
        }
        cb.tree_.push_back(n);
        cb.tree_[node].child[bit] = fresh;
      } else if (last || cb.tree_[cb.tree_[node].child[bit]].is_symbol) {
        throw CodecError("codebook: codewords are not prefix-free");
      }
      node = cb.tree_[node].child[bit];
    }
  }
  if (lone) {
    // Both branches of the root lead to the single leaf.
    cb.tree_[0].child[1] = cb.tree_[0].child[0];
  }
  return cb;
}

std::uint64_t HuffmanCodebook::encoded_bits(const Histogram& h) const {
  std::uint64_t bits = 0;
  for (std::size_t s = 0; s < kAlphabetSize; ++s) bits += h.counts[s] * lengths_[s];
  return bits;
}

HuffmanCodebook build_codebook(const Histogram& h) {
  struct Item {
    std::uint64_t weight;
    std::uint32_t min_symbol;
    std::uint32_t node;
  };
  auto later = [](const Item& a, const Item& b) {
    return std::tie(a.weight, a.min_symbol) > std::tie(b.weight, b.min_symbol);
  };
  std::priority_queue<Item, std::vector<Item>, decltype(later)> queue(later);

  // parent[] over leaves 0..255 and internal nodes 256.. .
  std::vector<std::uint32_t> parent(2 * kAlphabetSize, 0);
  std::uint32_t present = 0;
  for (std::uint32_t s = 0; s < kAlphabetSize; ++s) {
    if (h.counts[s] == 0) continue;
    queue.push(Item{h.counts[s], s, s});
    ++present;
  }
  if (present == 0) throw CodecError("build_codebook: empty histogram");

  std::array<std::uint8_t, kAlphabetSize> lengths{};
  if (present == 1) {
    lengths[queue.top().min_symbol] = 1;
    return HuffmanCodebook::from_lengths(lengths);
  }

  std::uint32_t next = kAlphabetSize;
  while (queue.size() > 1) {
    const Item a = queue.top();
    queue.pop();
    const Item b = queue.top();
    queue.pop();
    parent[a.node] = next;
    parent[b.node] = next;
    queue.push(Item{a.weight + b.weight, std::min(a.min_symbol, b.min_symbol), next});
    ++next;
  }
  const std::uint32_t root = next - 1;
  for (std::uint32_t s = 0; s < kAlphabetSize; ++s) {
    if (h.counts[s] == 0) continue;
    std::uint32_t depth = 0;
    for (std::uint32_t n = s; n != root; n = parent[n]) ++depth;
    if (depth > kMaxCodeLength) {
      throw CodecError("build_codebook: code length " + std::to_string(depth) + " exceeds 32");
    }
    lengths[s] = static_cast<std::uint8_t>(depth);
  }
  return HuffmanCodebook::from_lengths(lengths);
}

std::array<std::uint8_t, kSerializedCodebookBytes> serialize_codebook(const HuffmanCodebook& cb) {
  return cb.code_lengths();
}

HuffmanCodebook deserialize_codebook(std::span<const std::uint8_t> bytes) {
  return HuffmanCodebook::from_lengths(bytes);
}

}  // namespace kvhuff
