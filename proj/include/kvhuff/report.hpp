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

#ifndef KVHUFF_REPORT_HPP_
#define KVHUFF_REPORT_HPP_

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "kvhuff/kvcache.hpp"
#include "kvhuff/quantizer.hpp"
#include "kvhuff/tensor_io.hpp"

namespace kvhuff {

// Original bytes divided by the fused path's excess time over a plain matvec.
// When the fused path is not slower the decompression cost is fully hidden and
// the result is the "fused-faster" sentinel.
struct EquivalentThroughput {
  bool fused_faster = false;
  double bytes_per_second = 0.0;  // valid when !fused_faster

  std::string to_string() const;
};

// Throws ConfigError when either time is not positive.
EquivalentThroughput equivalent_decompression_throughput(std::uint64_t original_bytes,
                                                         double t_fused, double t_reference);

// max over rows of max|a - b| / max|b|, rows of length cols. A zero reference
// row falls back to the absolute difference.
double max_row_relative_error(std::span<const float> a, std::span<const float> b,
                              std::size_t cols);

struct TimingOptions {
  int warmup = 5;
  int iterations = 20;
};

// Median wall-clock seconds of f() over `iterations` runs after `warmup` runs.
template <typename F>
double median_seconds(F&& f, const TimingOptions& opt);

struct BenchRow {
  std::string config;
  std::size_t step = 0;
  std::size_t context_len = 0;
  std::uint64_t original_bytes = 0;
  std::uint64_t compressed_bytes = 0;
  std::uint64_t metadata_bytes = 0;
  double compression_ratio = 0.0;
  double bits_per_value = 0.0;
  double fused_time = 0.0;
  double multistage_time = 0.0;
  double reference_matvec_time = 0.0;
  EquivalentThroughput equivalent;
  double max_rel_diff = 0.0;  // fused vs multistage outputs since the previous row
};

struct SweepRow {
  std::string config;
  std::size_t context_len = 0;
  double rel_scale = 0.0;
  std::uint64_t original_bytes = 0;
  std::uint64_t compressed_bytes = 0;
  std::uint64_t metadata_bytes = 0;
  double compression_ratio = 0.0;
  double bits_per_value = 0.0;
  double k_ratio = 0.0;
  double v_ratio = 0.0;
};

void write_bench_csv(std::ostream& os, std::span<const BenchRow> rows);
void write_sweep_csv(std::ostream& os, std::span<const SweepRow> rows);

struct SynthParams {
  std::size_t head_num = 8;
  std::size_t head_dim = 128;
  double outlier_fraction = 0.05;
  double outlier_magnitude = 10.0;
  double base_std = 1.0;
  DType dtype = DType::kFloat16;
  std::uint64_t seed = 0;
};

struct SimulateOptions {
  std::size_t prompt_len = 1024;
  std::size_t gen_len = 64;
  SynthParams synth;
  QuantConfig cfg_k;
  QuantConfig cfg_v{QuantMode::kVToken, 64, kDefaultRelScaleVToken, 64};
  std::size_t report_every = 0;  // 0: rows at prefill and after the last step only
  TimingOptions timing;
};

// Synthetic decode loop: prefill, then per step attend with a fresh query
// (fused and multistage) and append one token.
std::vector<BenchRow> simulate(const SimulateOptions& opt);

struct SweepOptions {
  std::vector<std::size_t> context_lens;
  std::vector<double> rel_scales;
  SynthParams synth;
  QuantMode k_mode = QuantMode::kKBlock;
  std::uint32_t block_size = 64;
  std::uint32_t buffer_size = 64;
};

// One row per (context_len, rel_scale); the same rel_scale drives K and V.
// Shorter contexts are prefixes of the longest generated tensor.
std::vector<SweepRow> ratio_sweep(const SweepOptions& opt);

std::string describe_config(const QuantConfig& k, const QuantConfig& v);

template <typename F>
double median_seconds(F&& f, const TimingOptions& opt) {
  for (int i = 0; i < opt.warmup; ++i) f();
  std::vector<double> samples;
  samples.reserve(static_cast<std::size_t>(std::max(opt.iterations, 1)));
  for (int i = 0; i < std::max(opt.iterations, 1); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    const auto t1 = std::chrono::steady_clock::now();
    samples.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  std::sort(samples.begin(), samples.end());
  const std::size_t n = samples.size();
  return n % 2 ? samples[n / 2] : 0.5 * (samples[n / 2 - 1] + samples[n / 2]);
}

}  // namespace kvhuff

#endif  // KVHUFF_REPORT_HPP_
