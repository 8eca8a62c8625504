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

#include <cmath>
#include <random>

#include "kvhuff/attention.hpp"
#include "kvhuff/error.hpp"
#include "kvhuff/parallel.hpp"
#include "kvhuff/reference.hpp"
#include "kvhuff/report.hpp"
#include "test_support.hpp"

namespace kvhuff {
namespace {

constexpr double kRelTol = 1e-5;

LayerCacheState random_state(std::mt19937_64& rng, std::size_t ctx, std::size_t H, std::size_t D,
                             QuantMode mode = QuantMode::kKBlock, std::uint32_t bs = 16) {
  const auto k = test::random_tensor(rng, {ctx, H, D});
  const auto v = test::random_tensor(rng, {ctx, H, D});
  return LayerCacheState::prefill(
      k, v, test::k_config(mode, bs, 2 * bs, mode == QuantMode::kKChannel ? 0.25 : 0.05),
      test::v_config(bs, 2 * bs, 0.15));
}

TEST(FusedScores, ZeroQueryGivesZeroLogits) {
  std::mt19937_64 rng(1);
  const auto s = random_state(rng, 50, 2, 16);
  const std::vector<float> q(32, 0.0f);
  for (float x : fused_k_scores(s, q)) EXPECT_EQ(x, 0.0f);
}

TEST(FusedScores, BasisVectorSingleToken) {
  CacheTensor k({1, 1, 16}, DType::kFloat32), v({1, 1, 16}, DType::kFloat32);
  k.values[0] = 1.0f;
  v.values = k.values;
  for (std::uint32_t bs : {1u, 4u}) {
    const auto s = LayerCacheState::prefill(k, v, test::k_config(QuantMode::kKBlock, bs, bs, 0.05),
                                            test::v_config(bs, bs, 0.15));
    std::vector<float> q(16, 0.0f);
    q[0] = 1.0f;
    const auto scores = fused_k_scores(s, q);
    ASSERT_EQ(scores.size(), 1u);
    EXPECT_FLOAT_EQ(scores[0], 1.0f / 4.0f);
  }
}

TEST(FusedScores, AgreeWithReferenceOverMaterializedCache) {
  std::mt19937_64 rng(2);
  for (QuantMode mode : {QuantMode::kKBlock, QuantMode::kKChannel}) {
    for (int trial = 0; trial < 10; ++trial) {
      const auto s = random_state(rng, 1 + rng() % 300, 1 + rng() % 4, 8 * (1 + rng() % 16), mode);
      const auto q = test::random_vector(rng, s.head_num() * s.head_dim());
      const auto [k, v] = s.fetch_dequantized();
      const auto fused = fused_k_scores(s, q);
      const auto ref = reference_scores(k, q);
      EXPECT_LE(max_row_relative_error(fused, ref, s.context_len()), kRelTol);
    }
  }
}

TEST(FusedOutput, OneHotOnBufferedTokenSelectsItExactly) {
  std::mt19937_64 rng(3);
  const auto s = random_state(rng, 37, 2, 16);  // 5 buffered tokens
  ASSERT_GT(s.buffered_tokens(), 0u);
  const std::size_t ctx = s.context_len(), t = ctx - 2;
  std::vector<float> w(2 * ctx, 0.0f);
  w[t] = 1.0f;
  w[ctx + t] = 1.0f;
  const auto out = fused_v_output(s, w);
  const auto [k, v] = s.fetch_dequantized();
  for (std::size_t i = 0; i < 32; ++i) EXPECT_EQ(out[i], v.token(t)[i]);
}

TEST(FusedOutput, UniformWeightsOverIdenticalTokens) {
  const std::size_t ctx = 48, H = 2, D = 8;  // whole blocks, empty buffer
  CacheTensor k({ctx, H, D}, DType::kFloat32), v({ctx, H, D}, DType::kFloat32);
  std::mt19937_64 rng(4);
  const auto tok = test::random_vector(rng, H * D);
  for (std::size_t t = 0; t < ctx; ++t) {
    std::copy(tok.begin(), tok.end(), k.values.begin() + static_cast<std::ptrdiff_t>(t * H * D));
  }
  v.values = k.values;
  const auto s = LayerCacheState::prefill(k, v, test::k_config(QuantMode::kKBlock, 16, 16, 0.05),
                                          test::v_config(16, 16, 0.15));
  const std::vector<float> w(H * ctx, 1.0f / ctx);
  const auto out = fused_v_output(s, w);
  const auto [kf, vf] = s.fetch_dequantized();
  for (std::size_t i = 0; i < H * D; ++i) EXPECT_NEAR(out[i], vf.token(0)[i], 1e-5 * (1 + std::abs(vf.token(0)[i])));
}

TEST(FusedOutput, AgreesWithReferenceOverMaterializedCache) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 15; ++trial) {
    const auto s = random_state(rng, 1 + rng() % 300, 1 + rng() % 4, 8 * (1 + rng() % 16));
    std::vector<float> w = test::random_vector(rng, s.head_num() * s.context_len(), 2.0);
    softmax_rows(w, s.head_num(), s.context_len());
    const auto [k, v] = s.fetch_dequantized();
    EXPECT_LE(max_row_relative_error(fused_v_output(s, w), reference_output(v, w), s.head_dim()),
              kRelTol);
  }
}

TEST(FusedOutput, RejectsWrongWeightCount) {
  std::mt19937_64 rng(6);
  const auto s = random_state(rng, 20, 2, 8);
  EXPECT_THROW(fused_v_output(s, std::vector<float>(39, 0.0f)), ConfigError);
  EXPECT_THROW(fused_k_scores(s, std::vector<float>(15, 0.0f)), ConfigError);
}

TEST(AttentionStep, SingletonContextReturnsTheSoleValue) {
  std::mt19937_64 rng(7);
  const auto s = random_state(rng, 1, 3, 8);
  const auto q = test::random_vector(rng, 24);
  const AttentionOutput r = attention_step(s, q);
  for (float w : r.weights) EXPECT_EQ(w, 1.0f);
  const auto [k, v] = s.fetch_dequantized();
  for (std::size_t i = 0; i < 24; ++i) EXPECT_EQ(r.out[i], v.values[i]);
}

TEST(AttentionStep, MatchesReferenceAndMultistage) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 15; ++trial) {
    auto s = random_state(rng, 1 + rng() % 400, 1 + rng() % 4, 8 * (1 + rng() % 16),
                          trial % 2 ? QuantMode::kKChannel : QuantMode::kKBlock);
    const auto q = test::random_vector(rng, s.head_num() * s.head_dim());
    const auto [k, v] = s.fetch_dequantized();
    const AttentionOutput fused = attention_step(s, q);
    const AttentionOutput ref = reference_attention(k, v, q);
    const AttentionOutput multi = multistage_attention_step(s, q);
    EXPECT_LE(max_row_relative_error(fused.scores, ref.scores, s.context_len()), kRelTol);
    EXPECT_LE(max_row_relative_error(fused.out, ref.out, s.head_dim()), kRelTol);
    EXPECT_LE(max_row_relative_error(fused.out, multi.out, s.head_dim()), kRelTol);
    // Append then query immediately: shapes hold.
    const auto tok = test::random_tensor(rng, {1, s.head_num(), s.head_dim()});
    s.append_token(tok.token(0), tok.token(0));
    const AttentionOutput after = attention_step(s, q);
    EXPECT_EQ(after.out.size(), s.head_num() * s.head_dim());
    EXPECT_EQ(after.scores.size(), s.head_num() * s.context_len());
  }
}

TEST(Softmax, RowsSumToOneAndIgnoreShifts) {
  std::mt19937_64 rng(9);
  const std::size_t rows = 4, cols = 257;
  std::vector<float> x = test::random_vector(rng, rows * cols, 30.0);
  std::vector<float> shifted = x;
  for (std::size_t c = 0; c < cols; ++c) shifted[cols + c] += 17.0f;
  softmax_rows(x, rows, cols);
  softmax_rows(shifted, rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < cols; ++c) sum += x[r * cols + c];
    EXPECT_NEAR(sum, 1.0, 1e-6);
  }
  for (std::size_t c = 0; c < cols; ++c) EXPECT_NEAR(shifted[cols + c], x[cols + c], 1e-6);
}

TEST(Reference, SelfDotAndLinearity) {
  std::mt19937_64 rng(10);
  CacheTensor k({1, 1, 64}, DType::kFloat32);
  k.values = test::random_vector(rng, 64);
  double norm2 = 0.0;
  for (float x : k.values) norm2 += static_cast<double>(x) * x;
  EXPECT_NEAR(reference_scores(k, k.values)[0], norm2 / 8.0, 1e-5 * norm2);
  const auto kk = test::random_tensor(rng, {30, 2, 16}, DType::kFloat32);
  const auto q = test::random_vector(rng, 32);
  std::vector<float> q3(q);
  for (auto& x : q3) x *= 4.0f;  // power of two keeps the scaling exact
  const auto a = reference_scores(kk, q), b = reference_scores(kk, q3);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(b[i], 4.0f * a[i]);
}

TEST(Folding, BothOrderingsAgreeOnHeadDim128) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> code(0, 20);
  for (int trial = 0; trial < 200; ++trial) {
    const auto q = test::random_vector(rng, 128);
    const auto mins = test::random_vector(rng, 128);
    std::vector<float> scales(128);
    for (auto& s : scales) s = std::abs(test::random_vector(rng, 1)[0]) * 0.05f;
    double direct = 0.0, folded_min = 0.0, folded_code = 0.0, mag = 0.0;
    for (std::size_t c = 0; c < 128; ++c) {
      const int k = code(rng);
      const float deq = mins[c] + static_cast<float>(k) * scales[c];
      direct += static_cast<double>(deq) * q[c];
      folded_min += static_cast<double>(mins[c]) * q[c];
      folded_code += static_cast<double>(scales[c]) * q[c] * k;
      mag += std::abs(static_cast<double>(deq) * q[c]);
    }
    EXPECT_LE(std::abs(direct - (folded_min + folded_code)), 8 * mag * 0x1p-24);
  }
}

TEST(Traffic, FusedPathReadsOnlyCompressedBytesAndBuffer) {
  std::mt19937_64 rng(12);
  const auto s = random_state(rng, 500, 4, 64);
  const auto q = test::random_vector(rng, 256);
  AttentionTraffic fused, ref;
  attention_step(s, q, &fused);
  const auto [k, v] = s.fetch_dequantized();
  reference_attention(k, v, q, &ref);
  EXPECT_EQ(fused.compressed_bytes, s.k_arena().write_cursor() + s.v_arena().write_cursor());
  EXPECT_EQ(fused.uncompressed_bytes, (s.k_buffer().size() + s.v_buffer().size()) * sizeof(float));
  EXPECT_EQ(ref.uncompressed_bytes, (k.values.size() + v.values.size()) * sizeof(float));
  EXPECT_LT(fused.total(), ref.total());
}

TEST(Parallel, KernelsMatchSerialBitwiseAtAnyThreadCount) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 6; ++trial) {
    const auto s = random_state(rng, 64 + rng() % 500, 1 + rng() % 8, 16 * (1 + rng() % 8),
                                trial % 2 ? QuantMode::kKChannel : QuantMode::kKBlock);
    const auto q = test::random_vector(rng, s.head_num() * s.head_dim());
    const auto k_serial = reference::fused_k_scores_serial(s, q);
    std::vector<float> w = k_serial;
    softmax_rows(w, s.head_num(), s.context_len());
    const auto v_serial = reference::fused_v_output_serial(s, w);
    for (int threads : {1, 2, 3, 8}) {
      ThreadScope scope(threads);
      EXPECT_EQ(fused_k_scores(s, q), k_serial);
      EXPECT_EQ(fused_v_output(s, w), v_serial);
    }
  }
}

}  // namespace
}  // namespace kvhuff
