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

// Serial vs OpenMP kernels, branchless vs conditional decode, and the dense
// reference path. Run with --benchmark_filter to select a group.

#include <benchmark/benchmark.h>

#include <map>
#include <random>
#include <tuple>
#include <vector>

#include "kvhuff/attention.hpp"
#include "kvhuff/codec.hpp"
#include "kvhuff/kvcache.hpp"
#include "kvhuff/parallel.hpp"
#include "kvhuff/reference.hpp"
#include "kvhuff/tensor_io.hpp"

namespace kvhuff {
namespace {

constexpr std::size_t kHeads = 8, kDim = 128;

struct Fixture {
  LayerCacheState state;
  CacheTensor k, v;
  std::vector<float> q, weights;
};

const Fixture& fixture(std::size_t ctx) {
  static std::map<std::size_t, Fixture> cache;
  auto it = cache.find(ctx);
  if (it != cache.end()) return it->second;
  SyntheticSpec spec{{ctx, kHeads, kDim}, 17, 0.05, 10.0, 1.0, DType::kFloat16};
  const CacheTensor k = generate_synthetic(spec);
  spec.seed = 18;
  const CacheTensor v = generate_synthetic(spec);
  QuantConfig ck{QuantMode::kKBlock, 64, kDefaultRelScaleKBlock, 64};
  QuantConfig cv{QuantMode::kVToken, 64, kDefaultRelScaleVToken, 64};
  Fixture f{LayerCacheState::prefill(k, v, ck, cv), {}, {}, {}, {}};
  std::tie(f.k, f.v) = f.state.fetch_dequantized();
  std::mt19937_64 rng(19);
  std::normal_distribution<float> n(0.0f, 1.0f);
  f.q.resize(kHeads * kDim);
  for (auto& x : f.q) x = n(rng);
  f.weights = reference_attention(f.k, f.v, f.q).weights;
  return cache.emplace(ctx, std::move(f)).first->second;
}

void BM_FusedScoresParallel(benchmark::State& st) {
  const Fixture& f = fixture(static_cast<std::size_t>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(fused_k_scores(f.state, f.q));
}

void BM_FusedScoresSerial(benchmark::State& st) {
  const Fixture& f = fixture(static_cast<std::size_t>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(reference::fused_k_scores_serial(f.state, f.q));
}

void BM_FusedOutputParallel(benchmark::State& st) {
  const Fixture& f = fixture(static_cast<std::size_t>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(fused_v_output(f.state, f.weights));
}

void BM_FusedOutputSerial(benchmark::State& st) {
  const Fixture& f = fixture(static_cast<std::size_t>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(reference::fused_v_output_serial(f.state, f.weights));
}

void BM_ReferenceMatvec(benchmark::State& st) {
  const Fixture& f = fixture(static_cast<std::size_t>(st.range(0)));
  for (auto _ : st) {
    benchmark::DoNotOptimize(reference_scores(f.k, f.q));
    benchmark::DoNotOptimize(reference_output(f.v, f.weights));
  }
}

void BM_AttentionStep(benchmark::State& st) {
  const Fixture& f = fixture(static_cast<std::size_t>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(attention_step(f.state, f.q));
}

void BM_MultistageStep(benchmark::State& st) {
  const Fixture& f = fixture(static_cast<std::size_t>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(multistage_attention_step(f.state, f.q));
}

template <bool kBranchless>
void BM_DecodeSlices(benchmark::State& st) {
  const Fixture& f = fixture(1024);
  const CompressedArena& arena = f.state.k_arena();
  const auto& tree = f.state.k_codebook().decode_tree();
  const BlockLayout layout = f.state.k_layout();
  std::size_t decoded = 0;
  for (auto _ : st) {
    for (std::size_t o = 0; o < arena.block_count(); ++o) {
      const BlockRef ref = parse_block(arena.block_extent(o), layout);
      std::uint32_t off = 0;
      for (std::size_t s = 0; s < ref.slice_count; ++s) {
        const std::uint16_t n = ref.bit_count(s);
        if constexpr (kBranchless) {
          benchmark::DoNotOptimize(decode_slice(ref.payload, off, n, tree, kDim));
        } else {
          benchmark::DoNotOptimize(reference::decode_slice_naive(ref.payload, off, n, tree, kDim));
        }
        off += n;
        decoded += kDim;
      }
    }
  }
  st.SetItemsProcessed(static_cast<std::int64_t>(decoded));
}

#define KVHUFF_CTX_ARGS ->Arg(1024)->Arg(4096)->Unit(benchmark::kMicrosecond)
BENCHMARK(BM_FusedScoresParallel) KVHUFF_CTX_ARGS;
BENCHMARK(BM_FusedScoresSerial) KVHUFF_CTX_ARGS;
BENCHMARK(BM_FusedOutputParallel) KVHUFF_CTX_ARGS;
BENCHMARK(BM_FusedOutputSerial) KVHUFF_CTX_ARGS;
BENCHMARK(BM_ReferenceMatvec) KVHUFF_CTX_ARGS;
BENCHMARK(BM_AttentionStep) KVHUFF_CTX_ARGS;
BENCHMARK(BM_MultistageStep) KVHUFF_CTX_ARGS;
BENCHMARK(BM_DecodeSlices<true>)->Name("BM_DecodeSlicesBranchless")->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_DecodeSlices<false>)->Name("BM_DecodeSlicesNaive")->Unit(benchmark::kMicrosecond);

}  // namespace
}  // namespace kvhuff

BENCHMARK_MAIN();
