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

#include "kvhuff/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "kvhuff/attention.hpp"
#include "kvhuff/error.hpp"

namespace kvhuff {
namespace {

std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  return buf;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

CacheTensor synth(const SynthParams& p, std::size_t len, std::uint64_t stream) {
  SyntheticSpec s;
  s.shape = {len, p.head_num, p.head_dim};
  s.seed = derive_seed(p.seed, stream);
  s.channel_outlier_fraction = p.outlier_fraction;
  s.outlier_magnitude = p.outlier_magnitude;
  s.base_std = p.base_std;
  s.dtype = p.dtype;
  return generate_synthetic(s);
}

CacheTensor prefix(const CacheTensor& t, std::size_t len) {
  CacheTensor out({len, t.shape.head_num, t.shape.head_dim}, t.dtype);
  const std::size_t n = out.values.size();
  std::copy(t.values.begin(), t.values.begin() + static_cast<std::ptrdiff_t>(n),
            out.values.begin());
  return out;
}

// Clock resolution floor so a sub-tick median never reads as zero.
double floor_time(double t) { return std::max(t, 1e-9); }

}  // namespace

std::string EquivalentThroughput::to_string() const {
  return fused_faster ? "fused-faster" : fmt_double(bytes_per_second);
}

EquivalentThroughput equivalent_decompression_throughput(std::uint64_t original_bytes,
                                                         double t_fused, double t_reference) {
  if (!(t_fused > 0.0) || !(t_reference > 0.0)) {
    throw ConfigError("equivalent throughput: times must be positive");
  }
  EquivalentThroughput r;
  if (t_fused <= t_reference) {
    r.fused_faster = true;
  } else {
    r.bytes_per_second = static_cast<double>(original_bytes) / (t_fused - t_reference);
  }
  return r;
}

double max_row_relative_error(std::span<const float> a, std::span<const float> b,
                              std::size_t cols) {
  if (a.size() != b.size() || cols == 0 || a.size() % cols != 0) {
    throw ConfigError("relative error: shape mismatch");
  }
  double worst = 0.0;
  for (std::size_t r = 0; r < a.size() / cols; ++r) {
    double diff = 0.0, ref = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double x = a[r * cols + c], y = b[r * cols + c];
      diff = std::max(diff, std::abs(x - y));
      ref = std::max(ref, std::abs(y));
    }
    worst = std::max(worst, ref > 0.0 ? diff / ref : diff);
  }
  return worst;
}

void write_bench_csv(std::ostream& os, std::span<const BenchRow> rows) {
  os << "config,context_len,step,original_bytes,compressed_bytes,metadata_bytes,"
        "compression_ratio,bits_per_value,fused_time,multistage_time,"
        "reference_matvec_time,equivalent_decompression_throughput,max_rel_diff\n";
  for (const BenchRow& r : rows) {
    os << r.config << ',' << r.context_len << ',' << r.step << ',' << r.original_bytes << ','
       << r.compressed_bytes << ',' << r.metadata_bytes << ',' << fmt_double(r.compression_ratio)
       << ',' << fmt_double(r.bits_per_value) << ',' << fmt_double(r.fused_time) << ','
       << fmt_double(r.multistage_time) << ',' << fmt_double(r.reference_matvec_time) << ','
       << r.equivalent.to_string() << ',' << fmt_double(r.max_rel_diff) << '\n';
  }
}

void write_sweep_csv(std::ostream& os, std::span<const SweepRow> rows) {
  os << "config,context_len,rel_scale,original_bytes,compressed_bytes,metadata_bytes,"
        "compression_ratio,bits_per_value,k_ratio,v_ratio\n";
  for (const SweepRow& r : rows) {
    os << r.config << ',' << r.context_len << ',' << fmt_double(r.rel_scale) << ','
       << r.original_bytes << ',' << r.compressed_bytes << ',' << r.metadata_bytes << ','
       << fmt_double(r.compression_ratio) << ',' << fmt_double(r.bits_per_value) << ','
       << fmt_double(r.k_ratio) << ',' << fmt_double(r.v_ratio) << '\n';
  }
}

std::string describe_config(const QuantConfig& k, const QuantConfig& v) {
  return std::string(to_string(k.mode)) + ":" + fmt_double(k.rel_quant_scale) + "/" +
         std::string(to_string(v.mode)) + ":" + fmt_double(v.rel_quant_scale) + "/bs" +
         std::to_string(k.block_size) + "/buf" + std::to_string(k.buffer_size);
}

std::vector<BenchRow> simulate(const SimulateOptions& opt) {
  if (opt.prompt_len == 0) throw ConfigError("simulate: prompt_len must be >= 1");
  const SynthParams& p = opt.synth;
  LayerCacheState state = LayerCacheState::prefill(synth(p, opt.prompt_len, 0),
                                                   synth(p, opt.prompt_len, 1), opt.cfg_k,
                                                   opt.cfg_v);
  SynthParams qp = p;
  qp.outlier_fraction = 0.0;
  qp.dtype = DType::kFloat32;
  const CacheTensor queries = synth(qp, opt.gen_len + 1, 2);
  CacheTensor k_new, v_new;
  if (opt.gen_len > 0) {
    k_new = synth(p, opt.gen_len, 3);
    v_new = synth(p, opt.gen_len, 4);
  }

  const std::string config = describe_config(opt.cfg_k, opt.cfg_v);
  const std::size_t d = p.head_dim;
  std::vector<BenchRow> rows;
  double pending_diff = 0.0;

  auto record = [&](std::size_t step) {
    const std::span<const float> q = queries.token(step);
    const AttentionOutput fused = attention_step(state, q);
    const AttentionOutput multi = multistage_attention_step(state, q);
    const auto [km, vm] = state.fetch_dequantized();

    BenchRow row;
    row.config = config;
    row.step = step;
    row.context_len = state.context_len();
    const StorageBreakdown b = state.storage();
    row.original_bytes = b.original_bytes;
    row.compressed_bytes = b.compressed_bytes();
    row.metadata_bytes = b.metadata_bytes;
    row.compression_ratio = b.compression_ratio();
    row.bits_per_value = b.bits_per_value();
    row.fused_time = floor_time(median_seconds([&] { (void)attention_step(state, q); },
                                               opt.timing));
    row.multistage_time = floor_time(
        median_seconds([&] { (void)multistage_attention_step(state, q); }, opt.timing));
    row.reference_matvec_time = floor_time(
        median_seconds([&] { (void)reference_attention(km, vm, q); }, opt.timing));
    row.equivalent = equivalent_decompression_throughput(row.original_bytes, row.fused_time,
                                                         row.reference_matvec_time);
    row.max_rel_diff = std::max(pending_diff, max_row_relative_error(fused.out, multi.out, d));
    pending_diff = 0.0;
    rows.push_back(std::move(row));
  };

  record(0);
  for (std::size_t step = 1; step <= opt.gen_len; ++step) {
    const std::span<const float> q = queries.token(step);
    const AttentionOutput fused = attention_step(state, q);
    const AttentionOutput multi = multistage_attention_step(state, q);
    pending_diff = std::max(pending_diff, max_row_relative_error(fused.out, multi.out, d));
    state.append_token(k_new.token(step - 1), v_new.token(step - 1));
    const bool due = opt.report_every > 0 && step % opt.report_every == 0;
    if (due || step == opt.gen_len) record(step);
  }
  return rows;
}

std::vector<SweepRow> ratio_sweep(const SweepOptions& opt) {
  if (opt.context_lens.empty()) throw ConfigError("ratio-sweep: empty context length list");
  if (opt.rel_scales.empty()) throw ConfigError("ratio-sweep: empty rel scale list");
  const std::size_t longest = *std::max_element(opt.context_lens.begin(), opt.context_lens.end());
  if (longest == 0) throw ConfigError("ratio-sweep: context lengths must be positive");
  const CacheTensor k_all = synth(opt.synth, longest, 0);
  const CacheTensor v_all = synth(opt.synth, longest, 1);

  std::vector<SweepRow> rows;
  for (std::size_t ctx : opt.context_lens) {
    if (ctx == 0) throw ConfigError("ratio-sweep: context lengths must be positive");
    const CacheTensor k = prefix(k_all, ctx);
    const CacheTensor v = prefix(v_all, ctx);
    for (double rel : opt.rel_scales) {
      const QuantConfig ck{opt.k_mode, opt.block_size, rel, opt.buffer_size};
      const QuantConfig cv{QuantMode::kVToken, opt.block_size, rel, opt.buffer_size};
      const LayerCacheState state = LayerCacheState::prefill(k, v, ck, cv);
      const StorageBreakdown b = state.storage();
      SweepRow row;
      row.config = describe_config(ck, cv);
      row.context_len = ctx;
      row.rel_scale = rel;
      row.original_bytes = b.original_bytes;
      row.compressed_bytes = b.compressed_bytes();
      row.metadata_bytes = b.metadata_bytes;
      row.compression_ratio = b.compression_ratio();
      row.bits_per_value = b.bits_per_value();
      row.k_ratio = state.storage(CacheSide::kKey).compression_ratio();
      row.v_ratio = state.storage(CacheSide::kValue).compression_ratio();
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

}  // namespace kvhuff
