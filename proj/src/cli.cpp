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

#include "kvhuff/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "kvhuff/bytes.hpp"
#include "kvhuff/container.hpp"
#include "kvhuff/error.hpp"
#include "kvhuff/kvcache.hpp"
#include "kvhuff/parallel.hpp"
#include "kvhuff/report.hpp"
#include "kvhuff/tensor_io.hpp"

namespace kvhuff::cli {
namespace {

struct CommonFlags {
  std::string mode = "kblock";
  std::uint32_t block_size = 64;
  std::uint32_t buffer_size = 64;
  std::optional<double> rel_k;
  double rel_v = kDefaultRelScaleVToken;
  int threads = 0;
  std::uint64_t seed = 0;
  std::string csv;
};

struct SynthFlags {
  std::size_t head_num = 8;
  std::size_t head_dim = 128;
  double outlier_fraction = 0.05;
  double outlier_magnitude = 10.0;
  std::string dtype = "f16";
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--mode", f.mode, "K quantization granularity")
      ->check(CLI::IsMember({"kblock", "kchannel"}))
      ->capture_default_str();
  cmd->add_option("--block-size", f.block_size, "Tokens per block")->capture_default_str();
  cmd->add_option("--buffer-size", f.buffer_size, "Uncompressed token buffer")
      ->capture_default_str();
  cmd->add_option("--rel-scale-k", f.rel_k, "K relative quantization scale");
  cmd->add_option("--rel-scale-v", f.rel_v, "V relative quantization scale")
      ->capture_default_str();
  cmd->add_option("--threads", f.threads, "Worker threads (0: runtime default)")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--seed", f.seed, "Synthetic data seed")->capture_default_str();
  cmd->add_option("--csv", f.csv, "Write the report CSV here instead of stdout");
}

void add_synth(CLI::App* cmd, SynthFlags& f) {
  cmd->add_option("--head-num", f.head_num)->capture_default_str();
  cmd->add_option("--head-dim", f.head_dim)->capture_default_str();
  cmd->add_option("--outlier-fraction", f.outlier_fraction)->capture_default_str();
  cmd->add_option("--outlier-magnitude", f.outlier_magnitude)->capture_default_str();
  cmd->add_option("--dtype", f.dtype)->check(CLI::IsMember({"f16", "f32"}))
      ->capture_default_str();
}

std::pair<QuantConfig, QuantConfig> configs(const CommonFlags& f) {
  QuantConfig k, v;
  k.mode = parse_quant_mode(f.mode);
  k.block_size = v.block_size = f.block_size;
  k.buffer_size = v.buffer_size = f.buffer_size;
  k.rel_quant_scale = f.rel_k.value_or(k.mode == QuantMode::kKChannel ? kDefaultRelScaleKChannel
                                                                       : kDefaultRelScaleKBlock);
  v.mode = QuantMode::kVToken;
  v.rel_quant_scale = f.rel_v;
  k.validate();
  v.validate();
  return {k, v};
}

SynthParams synth_params(const SynthFlags& s, const CommonFlags& c) {
  SynthParams p;
  p.head_num = s.head_num;
  p.head_dim = s.head_dim;
  p.outlier_fraction = s.outlier_fraction;
  p.outlier_magnitude = s.outlier_magnitude;
  p.dtype = s.dtype == "f16" ? DType::kFloat16 : DType::kFloat32;
  p.seed = c.seed;
  return p;
}

template <typename T>
std::vector<T> parse_list(const std::string& text, const char* what) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) throw UsageError(std::string(what) + ": empty list element");
    std::istringstream is(item);
    T value{};
    if (!(is >> value) || !is.eof()) {
      throw UsageError(std::string(what) + ": cannot parse '" + item + "'");
    }
    out.push_back(value);
  }
  if (out.empty()) throw UsageError(std::string(what) + ": list must not be empty");
  return out;
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", x);
  return buf;
}

// Opens the CSV sink: the --csv file when given, otherwise `out`.
class CsvSink {
 public:
  CsvSink(const std::string& path, std::ostream& out) : os_(&out) {
    if (!path.empty()) {
      file_ = std::make_unique<std::ofstream>(path, std::ios::binary | std::ios::trunc);
      if (!*file_) throw IoError("cannot open " + path + " for writing");
      os_ = file_.get();
    }
  }
  std::ostream& stream() { return *os_; }
  void finish(const std::string& path) {
    os_->flush();
    if (!*os_) throw IoError("write failed: " + (path.empty() ? std::string("stdout") : path));
  }

 private:
  std::unique_ptr<std::ofstream> file_;
  std::ostream* os_;
};

int cmd_compress(const std::string& k_path, const std::string& v_path,
                 const std::string& out_path, const CommonFlags& f, std::ostream& out) {
  const auto [ck, cv] = configs(f);
  const CacheTensor k = read_tensor(k_path);
  const CacheTensor v = read_tensor(v_path);
  if (!(k.shape == v.shape) || k.dtype != v.dtype) {
    throw ConfigError("K and V inputs differ in shape or dtype");
  }
  const LayerCacheState state = LayerCacheState::prefill(k, v, ck, cv);
  write_file(out_path, save_kvcz(state));
  const StorageBreakdown b = state.storage();
  out << "compressed " << state.context_len() << " tokens (" << state.compressed_tokens()
      << " in blocks, " << state.buffered_tokens() << " buffered): ratio "
      << fmt(b.compression_ratio()) << ", bits/value " << fmt(b.bits_per_value()) << '\n';
  return kExitOk;
}

int cmd_decompress(const std::string& in_path, const std::string& k_out,
                   const std::string& v_out, std::ostream& out) {
  const LayerCacheState state = load_kvcz(read_file(in_path));
  const auto [k, v] = state.fetch_dequantized();
  write_tensor(k, k_out);
  write_tensor(v, v_out);
  out << "decompressed " << state.context_len() << " tokens x " << state.head_num()
      << " heads x " << state.head_dim() << " dims\n";
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Quantized Huffman KV cache compression tool", "kvhuff"};
  app.require_subcommand(1);

  CommonFlags common;
  SynthFlags synth;

  std::string k_path, v_path, out_path;
  CLI::App* compress = app.add_subcommand("compress", "Compress K/V tensor files into KVCZ");
  compress->add_option("k", k_path, "K tensor (KVTN)")->required();
  compress->add_option("v", v_path, "V tensor (KVTN)")->required();
  compress->add_option("-o,--output", out_path, "Output KVCZ file")->required();
  add_common(compress, common);

  std::string in_path, k_out, v_out;
  CLI::App* decompress = app.add_subcommand("decompress", "Expand KVCZ to float32 KVTN files");
  decompress->add_option("input", in_path, "KVCZ file")->required();
  decompress->add_option("--k-out", k_out, "K output (KVTN)")->required();
  decompress->add_option("--v-out", v_out, "V output (KVTN)")->required();
  add_common(decompress, common);

  std::size_t prompt_len = 1024, gen_len = 64, report_every = 0;
  TimingOptions timing;
  CLI::App* simulate_cmd = app.add_subcommand("simulate", "Synthetic decode loop benchmark");
  simulate_cmd->add_option("--prompt-len", prompt_len)->capture_default_str();
  simulate_cmd->add_option("--gen-len", gen_len)->capture_default_str();
  simulate_cmd->add_option("--report-every", report_every, "Row interval (0: last step only)")
      ->capture_default_str();
  simulate_cmd->add_option("--warmup", timing.warmup)->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  simulate_cmd->add_option("--iters", timing.iterations)->check(CLI::PositiveNumber)
      ->capture_default_str();
  add_common(simulate_cmd, common);
  add_synth(simulate_cmd, synth);

  std::string ctx_list = "2048,4096,8192,16384", rel_list = "0.05,0.1,0.15,0.2,0.25";
  CLI::App* sweep = app.add_subcommand("ratio-sweep", "Compression ratio over context and scale");
  sweep->add_option("--context-lens", ctx_list, "Comma-separated")->capture_default_str();
  sweep->add_option("--rel-scales", rel_list, "Comma-separated, applied to K and V")
      ->capture_default_str();
  add_common(sweep, common);
  add_synth(sweep, synth);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "kvhuff: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    std::optional<ThreadScope> threads;
    if (common.threads > 0) threads.emplace(common.threads);

    if (*compress) return cmd_compress(k_path, v_path, out_path, common, out);
    if (*decompress) return cmd_decompress(in_path, k_out, v_out, out);
    if (*simulate_cmd) {
      SimulateOptions opt;
      std::tie(opt.cfg_k, opt.cfg_v) = configs(common);
      opt.prompt_len = prompt_len;
      opt.gen_len = gen_len;
      opt.report_every = report_every;
      opt.timing = timing;
      opt.synth = synth_params(synth, common);
      CsvSink sink(common.csv, out);
      const std::vector<BenchRow> rows = simulate(opt);
      write_bench_csv(sink.stream(), rows);
      sink.finish(common.csv);
      return kExitOk;
    }
    if (*sweep) {
      SweepOptions opt;
      opt.context_lens = parse_list<std::size_t>(ctx_list, "--context-lens");
      opt.rel_scales = parse_list<double>(rel_list, "--rel-scales");
      const auto cfgs = configs(common);
      opt.k_mode = cfgs.first.mode;
      opt.block_size = common.block_size;
      opt.buffer_size = common.buffer_size;
      opt.synth = synth_params(synth, common);
      CsvSink sink(common.csv, out);
      const std::vector<SweepRow> rows = ratio_sweep(opt);
      write_sweep_csv(sink.stream(), rows);
      sink.finish(common.csv);
      return kExitOk;
    }
    err << "kvhuff: no command\n";
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "kvhuff: " << e.what() << '\n';
    return kExitUsage;
  } catch (const IoError& e) {
    err << "kvhuff: " << e.what() << '\n';
    return kExitUsage;
  } catch (const FormatError& e) {
    err << "kvhuff: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "kvhuff: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "kvhuff: internal error: " << e.what() << '\n';
    return kExitInternal;
  } catch (...) {
    err << "kvhuff: internal error\n";
    return kExitInternal;
  }
}

}  // namespace kvhuff::cli
