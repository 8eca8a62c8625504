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

#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <numeric>
#include <random>
#include <thread>

#include "kvhuff/codec.hpp"
#include "kvhuff/error.hpp"
#include "kvhuff/reference.hpp"
#include "test_support.hpp"

namespace kvhuff {
namespace {

HuffmanCodebook four_two_one_one() {
  Histogram h;
  h.counts[0] = 4;
  h.counts[1] = 2;
  h.counts[2] = 1;
  h.counts[3] = 1;
  return build_codebook(h);
}

QuantizedBlock make_block(std::uint32_t rows, std::uint32_t cols, std::vector<std::uint8_t> codes,
                          QuantMode mode, std::uint32_t index = 0) {
  QuantizedBlock q;
  q.rows = rows;
  q.cols = cols;
  q.codes = std::move(codes);
  q.block_index = index;
  const std::size_t metas = per_channel(mode) ? cols : rows;
  for (std::size_t i = 0; i < metas; ++i) {
    q.unit_metas.push_back({static_cast<float>(i) - 3.5f, 0.125f * static_cast<float>(i % 5)});
  }
  return q;
}

QuantizedBlock random_block(std::mt19937_64& rng, std::uint32_t rows, std::uint32_t cols,
                            std::uint32_t max_code, QuantMode mode, std::uint32_t index) {
  return make_block(rows, cols, test::skewed_codes(rng, std::size_t{rows} * cols, max_code, 0.4),
                    mode, index);
}

TEST(EncodeSlice, UniformShortSymbolCostsOneBitEach) {
  const HuffmanCodebook cb = four_two_one_one();
  const std::vector<std::uint8_t> codes(128, 0);
  const EncodedSlice s = encode_slice(codes, cb);
  EXPECT_EQ(s.bit_count, 128);
  EXPECT_EQ(s.bytes, std::vector<std::uint8_t>(16, 0));
}

TEST(EncodeSlice, CanonicalCodesForFourSymbols) {
  const HuffmanCodebook cb = four_two_one_one();
  const std::vector<std::uint8_t> codes{0, 1, 2, 3};
  const EncodedSlice s = encode_slice(codes, cb);
  EXPECT_EQ(s.bit_count, 1 + 2 + 3 + 3);
  EXPECT_EQ(slice_bit_length(codes, cb), 9u);
  // 0 | 10 | 110 | 111 -> 01011011 1xxxxxxx
  EXPECT_EQ(s.bytes, (std::vector<std::uint8_t>{0x5b, 0x80}));
  EXPECT_EQ(decode_slice(s.bytes, 0, s.bit_count, cb.decode_tree(), 4), codes);
}

TEST(EncodeSlice, MatchesBitwiseEncoder) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 500; ++trial) {
    const std::uint32_t max_code = 1 + rng() % 255;
    const HuffmanCodebook cb = test::random_codebook(rng, max_code);
    const auto codes = test::skewed_codes(rng, 1 + rng() % 200, max_code, 0.3);
    const EncodedSlice a = encode_slice(codes, cb);
    const EncodedSlice b = reference::encode_slice_bitwise(codes, cb);
    ASSERT_EQ(a.bit_count, b.bit_count);
    ASSERT_EQ(a.bytes, b.bytes);
    ASSERT_EQ(decode_slice(a.bytes, 0, a.bit_count, cb.decode_tree(), codes.size()), codes);
  }
}

TEST(EncodeSlice, RejectsAbsentCodesAndOverlongSlices) {
  const HuffmanCodebook cb = four_two_one_one();
  EXPECT_THROW(encode_slice(std::vector<std::uint8_t>{0, 4}, cb), CodecError);
  // Fibonacci-weighted tree: the rarest symbol has a ~20 bit code.
  Histogram h;
  std::uint64_t a = 1, b = 1;
  for (std::size_t s = 0; s < 21; ++s) {
    h.counts[20 - s] = a;
    const std::uint64_t c = a + b;
    a = b;
    b = c;
  }
  const HuffmanCodebook deep = build_codebook(h);
  const std::uint8_t len = deep.code_lengths()[20];
  ASSERT_GE(len, 16);
  const std::vector<std::uint8_t> codes(65535 / len + 1, 20);
  EXPECT_THROW(encode_slice(codes, deep), CodecError);
  const std::vector<std::uint8_t> fits(65535 / len, 20);
  EXPECT_NO_THROW(encode_slice(fits, deep));
}

TEST(ScanOffsets, ExclusivePrefixSums) {
  const std::vector<std::uint16_t> a{5, 3, 7};
  const ScanResult r = scan_offsets(a);
  EXPECT_EQ(r.offsets, (std::vector<std::uint32_t>{0, 5, 8}));
  EXPECT_EQ(r.total_bits, 15u);
  const ScanResult z = scan_offsets(std::vector<std::uint16_t>(4, 0));
  EXPECT_EQ(z.offsets, std::vector<std::uint32_t>(4, 0));
  EXPECT_EQ(z.total_bits, 0u);
  const ScanResult one = scan_offsets(std::vector<std::uint16_t>{42});
  EXPECT_EQ(one.offsets, std::vector<std::uint32_t>{0});
  EXPECT_EQ(one.total_bits, 42u);
  EXPECT_THROW(scan_offsets(std::vector<std::uint16_t>{}), CodecError);
}

TEST(DecodeSlice, SingleSymbolBookReadsEveryBitAsTheSymbol) {
  Histogram h;
  h.counts[9] = 3;
  const HuffmanCodebook cb = build_codebook(h);
  const std::vector<std::uint8_t> zeros{0x00};
  EXPECT_EQ(decode_slice(zeros, 0, 4, cb.decode_tree(), 4), std::vector<std::uint8_t>(4, 9));
}

TEST(DecodeSlice, CorruptStreamsAreRejectedLikeTheNaiveDecoder) {
  const HuffmanCodebook cb = four_two_one_one();
  const std::vector<std::uint8_t> payload{0x5b, 0x80};  // 0 10 110 111
  const auto& tree = cb.decode_tree();
  EXPECT_THROW(decode_slice(payload, 0, 8, tree, 4), CodecError);   // ends mid-codeword
  EXPECT_THROW(decode_slice(payload, 0, 9, tree, 3), CodecError);   // too many symbols
  EXPECT_THROW(decode_slice(payload, 0, 9, tree, 5), CodecError);   // too few
  EXPECT_THROW(decode_slice(payload, 8, 9, tree, 4), CodecError);   // past the payload
  EXPECT_THROW(reference::decode_slice_naive(payload, 0, 8, tree, 4), CodecError);
  EXPECT_THROW(reference::decode_slice_naive(payload, 0, 9, tree, 3), CodecError);
  EXPECT_THROW(reference::decode_slice_naive(payload, 0, 9, tree, 5), CodecError);
  EXPECT_THROW(reference::decode_slice_naive(payload, 8, 9, tree, 4), CodecError);
}

TEST(DecodeSlice, BranchlessMatchesNaiveOnRandomStreams) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::uint32_t max_code = 1 + rng() % 255;
    const HuffmanCodebook cb = test::random_codebook(rng, max_code);
    const auto codes = test::skewed_codes(rng, 1 + rng() % 160, max_code, 0.35);
    EncodedSlice s = encode_slice(codes, cb);
    const std::size_t out_len = trial % 3 == 0 ? codes.size() + (rng() % 3) - 1 : codes.size();
    if (trial % 4 == 1 && !s.bytes.empty()) s.bytes[rng() % s.bytes.size()] ^= 1u << (rng() % 8);
    std::vector<std::uint8_t> a, b;
    bool a_ok = true, b_ok = true;
    try {
      a = decode_slice(s.bytes, 0, s.bit_count, cb.decode_tree(), out_len);
    } catch (const CodecError&) {
      a_ok = false;
    }
    try {
      b = reference::decode_slice_naive(s.bytes, 0, s.bit_count, cb.decode_tree(), out_len);
    } catch (const CodecError&) {
      b_ok = false;
    }
    ASSERT_EQ(a_ok, b_ok) << trial;
    ASSERT_EQ(a, b) << trial;
  }
}

TEST(CompressBlock, TwoRowExampleCounts) {
  const HuffmanCodebook cb = four_two_one_one();
  const QuantizedBlock q = make_block(2, 4, {0, 0, 1, 2, 0, 0, 1, 3}, QuantMode::kKBlock);
  const CompressedBlock c = compress_block(q, cb);
  EXPECT_EQ(c.slice_bit_counts, (std::vector<std::uint16_t>{7, 7}));
  EXPECT_EQ(c.payload_bits(), 14u);
  // 0 0 10 110 | 0 0 10 111 -> 00101100 010111xx
  EXPECT_EQ(c.payload, (std::vector<std::uint8_t>{0x2c, 0x5c}));
  EXPECT_EQ(c.unit_metas, q.unit_metas);
}

TEST(CompressBlock, ConstantBlockCostsShortestCodePerValue) {
  const HuffmanCodebook cb = four_two_one_one();
  const QuantizedBlock q = make_block(64, 128, std::vector<std::uint8_t>(64 * 128, 0),
                                      QuantMode::kVToken);
  const CompressedBlock c = compress_block(q, cb);
  EXPECT_EQ(c.payload_bits(), 64u * 128u * cb.code_lengths()[0]);
}

TEST(CompressBlock, SerializedLayout) {
  const HuffmanCodebook cb = four_two_one_one();
  QuantizedBlock q = make_block(2, 4, {0, 0, 1, 2, 0, 0, 1, 3}, QuantMode::kVToken, 0x01020304);
  q.unit_metas = {{1.0f, 0.5f}, {-2.0f, 0.25f}};
  const CompressedBlock c = compress_block(q, cb);
  // 4 + 2 + 2*2 + 2*8 + 2 payload = 28, already aligned.
  ASSERT_EQ(c.serialized_size(), 28u);
  std::vector<std::uint8_t> buf(28, 0xee);
  serialize_block(c, buf);
  const std::vector<std::uint8_t> want{
      0x04, 0x03, 0x02, 0x01, 0x02, 0x00, 0x07, 0x00, 0x07, 0x00,
      0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x00, 0x3f,   // 1.0f, 0.5f
      0x00, 0x00, 0x00, 0xc0, 0x00, 0x00, 0x80, 0x3e,   // -2.0f, 0.25f
      0x2c, 0x5c};
  EXPECT_EQ(buf, want);
  const BlockRef ref = parse_block(buf, {4, QuantMode::kVToken});
  EXPECT_EQ(ref.block_index, 0x01020304u);
  EXPECT_EQ(ref.slice_count, 2u);
  EXPECT_EQ(ref.bit_count(1), 7);
  EXPECT_EQ(ref.meta(1), (QuantUnitMeta{-2.0f, 0.25f}));
  EXPECT_EQ(ref.payload.size(), 2u);
}

TEST(CompressBlock, PaddingReachesFourByteBoundary) {
  const HuffmanCodebook cb = four_two_one_one();
  const QuantizedBlock q = make_block(1, 4, {0, 0, 1, 2}, QuantMode::kVToken);
  const CompressedBlock c = compress_block(q, cb);
  // 4 + 2 + 2 + 8 + 1 = 17 -> 20
  EXPECT_EQ(c.serialized_size(), 20u);
}

TEST(Arena, SequentialAppendsAreContiguous) {
  std::mt19937_64 rng(3);
  const HuffmanCodebook cb = test::random_codebook(rng, 20);
  CompressedArena arena;
  EXPECT_EQ(arena.block_count(), 0u);
  EXPECT_EQ(arena.write_cursor(), 0u);
  const CompressedBlock a = compress_block(random_block(rng, 16, 64, 20, QuantMode::kKBlock, 0), cb);
  const CompressedBlock b = compress_block(random_block(rng, 16, 64, 20, QuantMode::kKBlock, 1), cb);
  EXPECT_EQ(arena.append(a), 0u);
  EXPECT_EQ(arena.append(b), 1u);
  ASSERT_EQ(arena.block_offsets().size(), 2u);
  EXPECT_EQ(arena.block_offsets()[0], 0u);
  EXPECT_EQ(arena.block_offsets()[1], a.serialized_size());
  EXPECT_EQ(arena.write_cursor(), a.serialized_size() + b.serialized_size());
  EXPECT_THROW(arena.block_extent(2), CodecError);
  EXPECT_THROW(decompress_block(arena, 2, cb, {64, QuantMode::kKBlock}), CodecError);
}

TEST(Arena, RoundTripsOneToHundredBlocks) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const std::uint32_t max_code = 1 + rng() % 60;
    const HuffmanCodebook cb = test::random_codebook(rng, max_code);
    const QuantMode mode = trial % 2 ? QuantMode::kVToken : QuantMode::kKBlock;
    const std::uint32_t rows = 1 + rng() % 64, cols = 1 + rng() % 128;
    const std::size_t n = 1 + rng() % 100;
    std::vector<QuantizedBlock> qs;
    CompressedArena arena;
    std::uint64_t total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      qs.push_back(random_block(rng, rows, cols, max_code, mode, static_cast<std::uint32_t>(i)));
      const CompressedBlock c = compress_block(qs.back(), cb);
      total += c.serialized_size();
      arena.append(c);
    }
    EXPECT_EQ(arena.write_cursor(), total);
    for (std::size_t i = 0; i < n; ++i) {
      const QuantizedBlock back = decompress_block(arena, i, cb, {cols, mode});
      ASSERT_EQ(back.codes, qs[i].codes);
      ASSERT_EQ(back.unit_metas, qs[i].unit_metas);
      ASSERT_EQ(back.block_index, qs[i].block_index);
    }
  }
}

TEST(Arena, ConcurrentAppendsNeverOverlap) {
  std::mt19937_64 rng(5);
  const HuffmanCodebook cb = test::random_codebook(rng, 30);
  std::vector<CompressedBlock> blocks;
  std::size_t total = 0;
  for (std::uint32_t i = 0; i < 400; ++i) {
    blocks.push_back(compress_block(random_block(rng, 1 + rng() % 32, 64, 30, QuantMode::kVToken, i), cb));
    total += blocks.back().serialized_size();
  }
  CompressedArena arena;
  arena.reserve_additional(total, blocks.size());
  std::vector<std::thread> pool;
  for (int t = 0; t < 8; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t i = static_cast<std::size_t>(t); i < blocks.size(); i += 8) {
        arena.append_concurrent(blocks[i]);
      }
    });
  }
  for (auto& th : pool) th.join();
  ASSERT_EQ(arena.block_count(), blocks.size());
  EXPECT_EQ(arena.write_cursor(), total);
  const auto offsets = arena.block_offsets();
  for (std::size_t o = 1; o < offsets.size(); ++o) ASSERT_LT(offsets[o - 1], offsets[o]);
  // Multiset of stored blocks equals the input: every index exactly once, bytes intact.
  std::vector<int> seen(blocks.size(), 0);
  for (std::size_t o = 0; o < arena.block_count(); ++o) {
    const std::uint32_t idx = stored_block_index(arena, o);
    ASSERT_LT(idx, blocks.size());
    ++seen[idx];
    const CompressedBlock& src = blocks[idx];
    std::vector<std::uint8_t> expect(src.serialized_size());
    serialize_block(src, expect);
    const auto extent = arena.block_extent(o);
    ASSERT_TRUE(std::equal(expect.begin(), expect.end(), extent.begin(), extent.end()));
  }
  for (int s : seen) ASSERT_EQ(s, 1);
}

TEST(Arena, BatchAppendMatchesSequentialAppend) {
  std::mt19937_64 rng(6);
  const HuffmanCodebook cb = test::random_codebook(rng, 20);
  std::vector<CompressedBlock> blocks;
  for (std::uint32_t i = 0; i < 77; ++i) {
    blocks.push_back(compress_block(random_block(rng, 64, 128, 20, QuantMode::kKBlock, i), cb));
  }
  CompressedArena seq, batch;
  for (const auto& b : blocks) seq.append(b);
  EXPECT_EQ(batch.append_batch(std::span(blocks).first(30)), 0u);
  EXPECT_EQ(batch.append_batch(std::span(blocks).subspan(30)), 30u);
  EXPECT_TRUE(std::ranges::equal(seq.bytes(), batch.bytes()));
  EXPECT_TRUE(std::ranges::equal(seq.block_offsets(), batch.block_offsets()));
}

TEST(Arena, CapacityLimitIsEnforced) {
  std::mt19937_64 rng(7);
  const HuffmanCodebook cb = test::random_codebook(rng, 20);
  const CompressedBlock b = compress_block(random_block(rng, 8, 16, 20, QuantMode::kKBlock, 0), cb);
  CompressedArena arena(b.serialized_size() * 2);
  arena.append(b);
  arena.append(b);
  EXPECT_THROW(arena.append(b), CapacityError);
  EXPECT_EQ(arena.block_count(), 2u);
  CompressedArena tiny(b.serialized_size() - 1);
  EXPECT_THROW(tiny.append_batch(std::span(&b, 1)), CapacityError);
  EXPECT_EQ(tiny.block_count(), 0u);
}

TEST(Arena, FromPartsValidatesOffsets) {
  std::vector<std::uint8_t> bytes(64, 0);
  EXPECT_NO_THROW(CompressedArena::from_parts(bytes, {0, 16, 40}));
  EXPECT_THROW(CompressedArena::from_parts(bytes, {4, 16}), FormatError);
  EXPECT_THROW(CompressedArena::from_parts(bytes, {0, 18}), FormatError);
  EXPECT_THROW(CompressedArena::from_parts(bytes, {0, 16, 16}), FormatError);
  EXPECT_THROW(CompressedArena::from_parts(bytes, {0, 64}), FormatError);
  EXPECT_THROW(CompressedArena::from_parts(std::vector<std::uint8_t>(6, 0), {0}), FormatError);
}

TEST(Arena, ShuffledArrivalRetrievesByStoredIndex) {
  std::mt19937_64 rng(8);
  const HuffmanCodebook cb = test::random_codebook(rng, 10);
  std::vector<QuantizedBlock> qs;
  for (std::uint32_t i = 0; i < 60; ++i) qs.push_back(random_block(rng, 16, 32, 10, QuantMode::kKBlock, i));
  std::vector<std::size_t> order(qs.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  CompressedArena arena;
  for (std::size_t i : order) arena.append(compress_block(qs[i], cb));
  // Oracle: inverse permutation from the shuffle.
  std::map<std::uint32_t, std::size_t> by_index;
  for (std::size_t o = 0; o < arena.block_count(); ++o) by_index[stored_block_index(arena, o)] = o;
  for (std::size_t o = 0; o < order.size(); ++o) EXPECT_EQ(by_index.at(static_cast<std::uint32_t>(order[o])), o);
  for (const auto& q : qs) {
    const QuantizedBlock back = decompress_block(arena, by_index.at(q.block_index), cb, {32, QuantMode::kKBlock});
    ASSERT_EQ(back.codes, q.codes);
  }
}

TEST(Arena, StoredCountsMatchReEncoding) {
  std::mt19937_64 rng(9);
  const HuffmanCodebook cb = test::random_codebook(rng, 40);
  CompressedArena arena;
  for (std::uint32_t i = 0; i < 20; ++i) arena.append(compress_block(random_block(rng, 32, 64, 40, QuantMode::kVToken, i), cb));
  for (std::size_t o = 0; o < arena.block_count(); ++o) {
    const BlockLayout layout{64, QuantMode::kVToken};
    const BlockRef ref = parse_block(arena.block_extent(o), layout);
    const QuantizedBlock q = decompress_block(arena, o, cb, layout);
    const CompressedBlock again = compress_block(q, cb);
    std::uint32_t total = 0;
    for (std::size_t s = 0; s < ref.slice_count; ++s) {
      ASSERT_EQ(ref.bit_count(s), again.slice_bit_counts[s]);
      total += ref.bit_count(s);
    }
    ASSERT_EQ((total + 7) / 8, ref.payload.size());
    ASSERT_TRUE(std::ranges::equal(ref.payload, again.payload));
  }
}

TEST(Arena, CorruptHeadersAreRejected) {
  std::mt19937_64 rng(10);
  const HuffmanCodebook cb = test::random_codebook(rng, 10);
  const CompressedBlock c = compress_block(random_block(rng, 4, 8, 10, QuantMode::kKBlock, 0), cb);
  std::vector<std::uint8_t> buf(c.serialized_size());
  serialize_block(c, buf);
  auto bad = buf;
  bad[4] = 0xff;  // slice count far beyond the extent
  EXPECT_THROW(parse_block(bad, {8, QuantMode::kKBlock}), CodecError);
  EXPECT_THROW(parse_block(std::span(buf).first(5), {8, QuantMode::kKBlock}), CodecError);
  auto grown = buf;
  grown[6] = 0xff;  // first slice claims more bits than the payload holds
  grown[7] = 0x00;
  EXPECT_THROW(parse_block(grown, {8, QuantMode::kKBlock}), CodecError);
}

CompressedBlock synthetic_counts(std::uint32_t slices, std::uint32_t head_dim, std::uint16_t bits) {
  CompressedBlock b;
  b.slice_len = head_dim;
  b.slice_bit_counts.assign(slices, bits);
  b.unit_metas.resize(head_dim);
  b.payload.assign((std::size_t{slices} * bits + 7) / 8, 0);
  return b;
}

TEST(MetadataOverhead, CountersAtTwoBitsPerCode) {
  const std::vector<CompressedBlock> blocks(10, synthetic_counts(64, 128, 256));
  const MetadataOverhead m = metadata_overhead(blocks);
  EXPECT_DOUBLE_EQ(m.avg_bits_per_code, 2.0);
  EXPECT_DOUBLE_EQ(m.fraction_of_compressed, 1.0 / 16.0);
  EXPECT_DOUBLE_EQ(m.fraction_of_original, 1.0 / 128.0);
  EXPECT_EQ(m.offset_bits, 320u);
}

TEST(MetadataOverhead, IncompressibleCodes) {
  const std::vector<CompressedBlock> blocks(3, synthetic_counts(64, 128, 1024));
  const MetadataOverhead m = metadata_overhead(blocks);
  EXPECT_DOUBLE_EQ(m.avg_bits_per_code, 8.0);
  EXPECT_DOUBLE_EQ(m.fraction_of_compressed, 16.0 / (128.0 * 8.0));
}

}  // namespace
}  // namespace kvhuff
