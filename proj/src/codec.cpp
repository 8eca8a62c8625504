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

#include "kvhuff/codec.hpp"

#include <cstring>
#include <string>

#include "kvhuff/bytes.hpp"
#include "kvhuff/error.hpp"

namespace kvhuff {

namespace {

class BitWriter {
 public:
  explicit BitWriter(std::vector<std::uint8_t>& out) : out_(out) {}

  void put(std::uint32_t bits, std::uint32_t len) {
    acc_ = (acc_ << len) | bits;
    pending_ += len;
    while (pending_ >= 8) {
      pending_ -= 8;
      out_.push_back(static_cast<std::uint8_t>(acc_ >> pending_));
    }
  }
  void flush() {
    if (pending_ > 0) {
      out_.push_back(static_cast<std::uint8_t>(acc_ << (8 - pending_)));
      pending_ = 0;
    }
  }

 private:
  std::vector<std::uint8_t>& out_;
  std::uint64_t acc_ = 0;
  std::uint32_t pending_ = 0;
};

// ORs `bit_count` bits from src (MSB-first, zero padded) into dst starting at
// dst bit `offset`. dst must be zeroed over that range.
void or_bits(std::span<std::uint8_t> dst, std::uint32_t offset,
             std::span<const std::uint8_t> src, std::uint32_t bit_count) {
  const std::size_t nbytes = (bit_count + 7) / 8;
  const std::uint32_t shift = offset & 7u;
  std::size_t at = offset >> 3;
  for (std::size_t i = 0; i < nbytes; ++i, ++at) {
    const std::uint8_t b = src[i];
    dst[at] |= static_cast<std::uint8_t>(b >> shift);
    if (shift != 0 && at + 1 < dst.size()) {
      dst[at + 1] |= static_cast<std::uint8_t>(b << (8 - shift));
    }
  }
}

[[noreturn]] void throw_absent(std::uint8_t c) {
  throw CodecError("code " + std::to_string(c) + " is absent from the codebook");
}

}  // namespace

std::uint32_t slice_bit_length(std::span<const std::uint8_t> codes, const HuffmanCodebook& cb) {
  const auto& lengths = cb.code_lengths();
  std::uint32_t bits = 0;
  for (std::uint8_t c : codes) {
    if (lengths[c] == 0) throw_absent(c);
    bits += lengths[c];
  }
  return bits;
}

EncodedSlice encode_slice(std::span<const std::uint8_t> codes, const HuffmanCodebook& cb) {
  const std::uint32_t total = slice_bit_length(codes, cb);
  if (total > 0xffffu) {
    throw CodecError("slice needs " + std::to_string(total) + " bits, over the 16-bit counter");
  }
  EncodedSlice out;
  out.bit_count = static_cast<std::uint16_t>(total);
  out.bytes.reserve((total + 7) / 8);
  BitWriter w(out.bytes);
  const auto& table = cb.encode_table();
  for (std::uint8_t c : codes) w.put(table[c].bits, table[c].length);
  w.flush();
  return out;
}

ScanResult scan_offsets(std::span<const std::uint16_t> bit_counts) {
  if (bit_counts.empty()) throw CodecError("scan_offsets: empty input");
  ScanResult r;
  r.offsets.resize(bit_counts.size());
  // Inclusive scan, then shift right by one for each slice's start.
  std::uint64_t running = 0;
  for (std::size_t i = 0; i < bit_counts.size(); ++i) {
    running += bit_counts[i];
    if (i + 1 < bit_counts.size()) r.offsets[i + 1] = static_cast<std::uint32_t>(running);
  }
  if (running > 0xffffffffu) throw CodecError("scan_offsets: total bits overflow 32 bits");
  r.offsets[0] = 0;
  r.total_bits = static_cast<std::uint32_t>(running);
  return r;
}

void decode_slice_into(std::span<const std::uint8_t> payload, std::uint32_t bit_offset,
                       std::uint16_t bit_count, std::span<const TreeNode> tree,
                       std::span<std::uint8_t> scratch, std::size_t out_len) {
  if (tree.empty()) throw CodecError("decode_slice: empty decode tree");
  if (scratch.size() < out_len + 1) throw CodecError("decode_slice: scratch too small");
  if (static_cast<std::uint64_t>(bit_offset) + bit_count > payload.size() * std::uint64_t{8}) {
    throw CodecError("decode_slice: bit range exceeds payload");
  }
  std::uint32_t end_index = 0;
  const std::size_t emitted = decode_bits_branchless(payload.data(), bit_offset, bit_count,
                                                     tree.data(), scratch.data(), out_len, end_index);
  if (emitted != out_len || end_index != 0) {
    throw CodecError("decode_slice: corrupt stream (" + std::to_string(emitted) + " of " +
                     std::to_string(out_len) + " symbols" +
                     (end_index != 0 ? ", ends inside a codeword)" : ")"));
  }
}

std::vector<std::uint8_t> decode_slice(std::span<const std::uint8_t> payload,
                                       std::uint32_t bit_offset, std::uint16_t bit_count,
                                       std::span<const TreeNode> tree, std::size_t out_len) {
  std::vector<std::uint8_t> out(out_len + 1);
  decode_slice_into(payload, bit_offset, bit_count, tree, out, out_len);
  out.resize(out_len);
  return out;
}

// --- blocks -----------------------------------------------------------------

std::uint32_t CompressedBlock::payload_bits() const {
  std::uint32_t s = 0;
  for (auto c : slice_bit_counts) s += c;
  return s;
}

std::size_t CompressedBlock::serialized_size() const {
  const std::size_t raw = kBlockHeaderBytes + 2 * slice_bit_counts.size() +
                          8 * unit_metas.size() + payload.size();
  return (raw + kArenaAlignment - 1) / kArenaAlignment * kArenaAlignment;
}

CompressedBlock compress_block(const QuantizedBlock& q, const HuffmanCodebook& cb) {
  if (q.rows > 0xffffu) throw CodecError("compress_block: more than 65535 slices");
  if (q.codes.size() != static_cast<std::size_t>(q.rows) * q.cols) {
    throw CodecError("compress_block: code matrix size mismatch");
  }
  CompressedBlock out;
  out.block_index = q.block_index;
  out.slice_len = q.cols;
  out.unit_metas = q.unit_metas;

  std::vector<EncodedSlice> slices;
  slices.reserve(q.rows);
  out.slice_bit_counts.reserve(q.rows);
  for (std::size_t r = 0; r < q.rows; ++r) {
    slices.push_back(encode_slice(q.row(r), cb));
    out.slice_bit_counts.push_back(slices.back().bit_count);
  }
  const ScanResult scan = scan_offsets(out.slice_bit_counts);
  out.payload.assign((static_cast<std::size_t>(scan.total_bits) + 7) / 8, 0);
  for (std::size_t r = 0; r < q.rows; ++r) {
    or_bits(out.payload, scan.offsets[r], slices[r].bytes, slices[r].bit_count);
  }
  return out;
}

void serialize_block(const CompressedBlock& b, std::span<std::uint8_t> dst) {
  const std::size_t size = b.serialized_size();
  if (dst.size() < size) throw CodecError("serialize_block: destination too small");
  std::uint8_t* p = dst.data();
  store_le<std::uint32_t>(p, b.block_index);
  store_le<std::uint16_t>(p + 4, static_cast<std::uint16_t>(b.slice_bit_counts.size()));
  p += kBlockHeaderBytes;
  for (auto c : b.slice_bit_counts) {
    store_le<std::uint16_t>(p, c);
    p += 2;
  }
  for (const auto& m : b.unit_metas) {
    store_f32(p, m.min_value);
    store_f32(p + 4, m.scale);
    p += 8;
  }
  if (!b.payload.empty()) std::memcpy(p, b.payload.data(), b.payload.size());
  p += b.payload.size();
  std::memset(p, 0, static_cast<std::size_t>(dst.data() + size - p));
}

std::uint16_t BlockRef::bit_count(std::size_t slice) const {
  return load_le<std::uint16_t>(bit_counts + 2 * slice);
}

QuantUnitMeta BlockRef::meta(std::size_t i) const {
  return QuantUnitMeta{load_f32(metas + 8 * i), load_f32(metas + 8 * i + 4)};
}

BlockRef parse_block(std::span<const std::uint8_t> extent, const BlockLayout& layout) {
  if (extent.size() < kBlockHeaderBytes) throw CodecError("block header truncated");
  BlockRef ref;
  ref.block_index = load_le<std::uint32_t>(extent.data());
  ref.slice_count = load_le<std::uint16_t>(extent.data() + 4);
  ref.meta_count = per_channel(layout.mode) ? layout.head_dim : ref.slice_count;
  std::size_t at = kBlockHeaderBytes;
  const std::size_t counts_bytes = 2 * std::size_t{ref.slice_count};
  const std::size_t meta_bytes = 8 * std::size_t{ref.meta_count};
  if (extent.size() < at + counts_bytes + meta_bytes) throw CodecError("block metadata truncated");
  ref.bit_counts = extent.data() + at;
  at += counts_bytes;
  ref.metas = extent.data() + at;
  at += meta_bytes;
  std::uint64_t bits = 0;
  for (std::size_t s = 0; s < ref.slice_count; ++s) bits += ref.bit_count(s);
  const std::size_t payload_bytes = static_cast<std::size_t>((bits + 7) / 8);
  if (extent.size() < at + payload_bytes) throw CodecError("block payload truncated");
  ref.payload = extent.subspan(at, payload_bytes);
  ref.extent = extent.size();
  return ref;
}

// --- arena ------------------------------------------------------------------

CompressedArena::CompressedArena(std::size_t max_bytes)
    : max_bytes_(std::min<std::size_t>(max_bytes, kDefaultArenaLimit)) {}

CompressedArena::CompressedArena(const CompressedArena& o)
    : max_bytes_(o.max_bytes_),
      bytes_(o.bytes_.begin(), o.bytes_.begin() + static_cast<std::ptrdiff_t>(o.write_cursor())),
      offsets_(o.offsets_.begin(), o.offsets_.begin() + static_cast<std::ptrdiff_t>(o.block_count())),
      state_(o.state_.load()) {}

CompressedArena::CompressedArena(CompressedArena&& o) noexcept
    : max_bytes_(o.max_bytes_),
      bytes_(std::move(o.bytes_)),
      offsets_(std::move(o.offsets_)),
      state_(o.state_.exchange(0)) {}

CompressedArena& CompressedArena::operator=(const CompressedArena& o) {
  if (this != &o) *this = CompressedArena(o);
  return *this;
}

CompressedArena& CompressedArena::operator=(CompressedArena&& o) noexcept {
  max_bytes_ = o.max_bytes_;
  bytes_ = std::move(o.bytes_);
  offsets_ = std::move(o.offsets_);
  state_.store(o.state_.exchange(0));
  return *this;
}

CompressedArena CompressedArena::from_parts(std::vector<std::uint8_t> bytes,
                                            std::vector<std::uint32_t> offsets,
                                            std::size_t max_bytes) {
  CompressedArena a(max_bytes);
  if (bytes.size() > a.max_bytes_) throw CapacityError("arena bytes exceed the configured limit");
  if (bytes.size() % kArenaAlignment != 0) throw FormatError("arena size is not 4-byte aligned");
  for (std::size_t i = 0; i < offsets.size(); ++i) {
    if (offsets[i] % kArenaAlignment != 0) throw FormatError("arena offset not 4-byte aligned");
    if (offsets[i] >= bytes.size()) throw FormatError("arena offset beyond arena bytes");
    if (i == 0 ? offsets[i] != 0 : offsets[i] <= offsets[i - 1]) {
      throw FormatError("arena offsets must start at 0 and strictly increase");
    }
  }
  if (offsets.empty() && !bytes.empty()) throw FormatError("arena bytes without blocks");
  const std::uint64_t state = (static_cast<std::uint64_t>(offsets.size()) << 32) | bytes.size();
  a.bytes_ = std::move(bytes);
  a.offsets_ = std::move(offsets);
  a.state_.store(state);
  return a;
}

void CompressedArena::reserve_additional(std::size_t bytes, std::size_t blocks) {
  const std::uint64_t need_bytes = write_cursor() + bytes;
  const std::uint64_t need_blocks = block_count() + blocks;
  if (need_bytes > max_bytes_) {
    throw CapacityError("arena limit of " + std::to_string(max_bytes_) + " bytes exhausted");
  }
  if (need_blocks > 0xffffffffu) throw CapacityError("arena block count exhausted");
  if (bytes_.size() < need_bytes) {
    bytes_.resize(std::max<std::size_t>(need_bytes, std::min<std::size_t>(bytes_.size() * 2, max_bytes_)));
  }
  if (offsets_.size() < need_blocks) {
    offsets_.resize(std::max<std::size_t>(need_blocks, offsets_.size() * 2));
  }
}

std::pair<std::uint64_t, std::size_t> CompressedArena::claim(std::size_t size) {
  std::uint64_t cur = state_.load(std::memory_order_relaxed);
  for (;;) {
    const std::uint64_t cursor = cur & 0xffffffffu;
    const std::uint64_t count = cur >> 32;
    if (cursor + size > bytes_.size() || count + 1 > offsets_.size()) {
      throw CapacityError("arena reservation exhausted");
    }
    const std::uint64_t next = ((count + 1) << 32) | (cursor + size);
    if (state_.compare_exchange_weak(cur, next, std::memory_order_acq_rel)) {
      return {cursor, static_cast<std::size_t>(count)};
    }
  }
}

std::size_t CompressedArena::append_concurrent(const CompressedBlock& b) {
  const std::size_t size = b.serialized_size();
  const auto [offset, ordinal] = claim(size);
  serialize_block(b, std::span<std::uint8_t>(bytes_).subspan(offset, size));
  offsets_[ordinal] = static_cast<std::uint32_t>(offset);
  return ordinal;
}

std::size_t CompressedArena::append(const CompressedBlock& b) {
  reserve_additional(b.serialized_size(), 1);
  return append_concurrent(b);
}

std::size_t CompressedArena::append_batch(std::span<const CompressedBlock> blocks) {
  const std::size_t first = block_count();
  if (blocks.empty()) return first;
  std::vector<std::size_t> starts(blocks.size());
  std::size_t total = 0;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    starts[i] = total;
    total += blocks[i].serialized_size();
  }
  reserve_additional(total, blocks.size());
  const std::uint64_t base = write_cursor();
  const std::uint64_t next =
      (static_cast<std::uint64_t>(first + blocks.size()) << 32) | (base + total);
  state_.store(next);
  const auto n = static_cast<std::ptrdiff_t>(blocks.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const std::size_t off = base + starts[k];
    serialize_block(blocks[k], std::span<std::uint8_t>(bytes_).subspan(off, blocks[k].serialized_size()));
    offsets_[first + k] = static_cast<std::uint32_t>(off);
  }
  return first;
}

std::span<const std::uint8_t> CompressedArena::block_extent(std::size_t ordinal) const {
  const std::size_t n = block_count();
  if (ordinal >= n) {
    throw CodecError("block ordinal " + std::to_string(ordinal) + " out of range (" +
                     std::to_string(n) + " blocks)");
  }
  const std::size_t begin = offsets_[ordinal];
  const std::size_t end = ordinal + 1 < n ? offsets_[ordinal + 1] : write_cursor();
  return {bytes_.data() + begin, end - begin};
}

std::uint32_t stored_block_index(const CompressedArena& arena, std::size_t ordinal) {
  const auto extent = arena.block_extent(ordinal);
  if (extent.size() < 4) throw CodecError("block header truncated");
  return load_le<std::uint32_t>(extent.data());
}

QuantizedBlock decompress_block(const CompressedArena& arena, std::size_t ordinal,
                                const HuffmanCodebook& cb, const BlockLayout& layout) {
  const BlockRef ref = parse_block(arena.block_extent(ordinal), layout);
  QuantizedBlock q;
  q.rows = ref.slice_count;
  q.cols = layout.head_dim;
  q.block_index = ref.block_index;
  q.codes.resize(static_cast<std::size_t>(q.rows) * q.cols + 1);
  q.unit_metas.resize(ref.meta_count);
  for (std::size_t i = 0; i < ref.meta_count; ++i) q.unit_metas[i] = ref.meta(i);
  const auto& tree = cb.decode_tree();
  std::uint32_t offset = 0;
  for (std::size_t s = 0; s < q.rows; ++s) {
    const std::uint16_t bits = ref.bit_count(s);
    // Each slice decodes in place; its extra scratch slot is the next row's
    // first byte, rewritten by the following slice.
    decode_slice_into(ref.payload, offset, bits, tree,
                      std::span<std::uint8_t>(q.codes).subspan(s * q.cols, q.cols + 1), q.cols);
    offset += bits;
  }
  q.codes.resize(static_cast<std::size_t>(q.rows) * q.cols);
  return q;
}

MetadataOverhead metadata_overhead(std::span<const CompressedBlock> blocks,
                                   std::uint32_t original_bits_per_value) {
  MetadataOverhead m;
  for (const auto& b : blocks) {
    m.payload_bits += b.payload_bits();
    m.counter_bits += 16 * std::uint64_t{b.slice_bit_counts.size()};
    const std::uint64_t serialized_bits = 8 * std::uint64_t{b.serialized_size()};
    m.header_bits += serialized_bits - 16 * b.slice_bit_counts.size() - b.payload_bits();
    m.offset_bits += 32;
    m.value_count += std::uint64_t{b.slice_bit_counts.size()} * b.slice_len;
  }
  if (m.value_count > 0) {
    m.avg_bits_per_code = static_cast<double>(m.payload_bits) / static_cast<double>(m.value_count);
    m.fraction_of_original = static_cast<double>(m.counter_bits) /
                             (static_cast<double>(m.value_count) * original_bits_per_value);
  }
  if (m.payload_bits > 0) {
    m.fraction_of_compressed =
        static_cast<double>(m.counter_bits) / static_cast<double>(m.payload_bits);
  }
  return m;
}

}  // namespace kvhuff
