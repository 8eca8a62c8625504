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

// Shared generators for the test binaries.

#ifndef KVHUFF_TESTS_TEST_SUPPORT_HPP_
#define KVHUFF_TESTS_TEST_SUPPORT_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "kvhuff/codebook.hpp"
#include "kvhuff/kvcache.hpp"
#include "kvhuff/quantizer.hpp"
#include "kvhuff/tensor_io.hpp"

namespace kvhuff::test {

// Codes in [0, max_code] with a geometric-ish skew controlled by p.
inline std::vector<std::uint8_t> skewed_codes(std::mt19937_64& rng, std::size_t n,
                                              std::uint32_t max_code, double p = 0.5) {
  std::geometric_distribution<std::uint32_t> g(p);
  std::vector<std::uint8_t> out(n);
  for (auto& c : out) c = static_cast<std::uint8_t>(std::min(g(rng), max_code));
  return out;
}

// A random smoothed codebook covering [0, max_code].
inline HuffmanCodebook random_codebook(std::mt19937_64& rng, std::uint32_t max_code) {
  std::uniform_real_distribution<double> p(0.15, 0.9);
  std::uniform_int_distribution<std::size_t> n(1, 4000);
  const auto sample = skewed_codes(rng, n(rng), max_code, p(rng));
  return build_codebook(smooth_histogram(build_histogram(sample), max_code));
}

inline CacheTensor random_tensor(std::mt19937_64& rng, CacheShape shape,
                                 DType dtype = DType::kFloat16) {
  SyntheticSpec spec;
  spec.shape = shape;
  spec.seed = rng();
  spec.channel_outlier_fraction = std::uniform_real_distribution<double>(0.0, 0.1)(rng);
  spec.outlier_magnitude = 10.0;
  spec.base_std = std::uniform_real_distribution<double>(0.2, 2.0)(rng);
  spec.dtype = dtype;
  return generate_synthetic(spec);
}

inline std::vector<float> random_vector(std::mt19937_64& rng, std::size_t n, double std = 1.0) {
  std::normal_distribution<float> d(0.0f, static_cast<float>(std));
  std::vector<float> out(n);
  for (auto& x : out) x = d(rng);
  return out;
}

inline QuantConfig k_config(QuantMode mode, std::uint32_t block, std::uint32_t buffer,
                            double rel) {
  return {mode, block, rel, buffer};
}
inline QuantConfig v_config(std::uint32_t block, std::uint32_t buffer, double rel) {
  return {QuantMode::kVToken, block, rel, buffer};
}

// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("kvhuff_test_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace kvhuff::test

#endif  // KVHUFF_TESTS_TEST_SUPPORT_HPP_
