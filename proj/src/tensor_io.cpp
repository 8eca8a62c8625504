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

#include "kvhuff/tensor_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "kvhuff/bytes.hpp"
#include "kvhuff/error.hpp"
#include "kvhuff/half.hpp"

namespace kvhuff {

std::size_t CacheShape::element_count() const {
  std::size_t n = context_len;
  for (std::size_t d : {head_num, head_dim}) {
    if (d != 0 && n > std::numeric_limits<std::size_t>::max() / d) {
      throw ConfigError("tensor dimensions overflow");
    }
    n *= d;
  }
  return n;
}

CacheTensor::CacheTensor(CacheShape s, DType d)
    : shape(s), dtype(d), values(s.element_count(), 0.0f) {}

void CacheTensor::validate() const {
  if (shape.context_len == 0 || shape.head_num == 0 || shape.head_dim == 0) {
    throw ConfigError("tensor dimensions must be positive");
  }
  if (values.size() != shape.element_count()) {
    throw ConfigError("tensor value count does not match its shape");
  }
  for (float v : values) {
    if (!std::isfinite(v)) throw FormatError("tensor contains NaN or Inf");
    if (dtype == DType::kFloat16 && round_to_half(v) != v) {
      throw ConfigError("float16 tensor holds a value not representable in binary16");
    }
  }
}

std::vector<std::uint8_t> encode_tensor(const CacheTensor& t) {
  t.validate();
  const std::size_t n = t.values.size();
  std::vector<std::uint8_t> out;
  out.reserve(kTensorHeaderBytes + n * dtype_bytes(t.dtype));
  ByteWriter w(out);
  for (char c : kTensorMagic) w.put<std::uint8_t>(static_cast<std::uint8_t>(c));
  w.put<std::uint8_t>(kTensorVersion);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(t.dtype));
  w.put<std::uint64_t>(t.shape.context_len);
  w.put<std::uint64_t>(t.shape.head_num);
  w.put<std::uint64_t>(t.shape.head_dim);
  if (t.dtype == DType::kFloat16) {
    for (float v : t.values) w.put<std::uint16_t>(float_to_half(v));
  } else {
    for (float v : t.values) w.put_f32(v);
  }
  return out;
}

CacheTensor decode_tensor(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "KVTN");
  auto magic = r.get_bytes(4);
  if (!std::equal(magic.begin(), magic.end(), kTensorMagic)) {
    throw FormatError("KVTN: bad magic");
  }
  const auto version = r.get<std::uint8_t>();
  if (version != kTensorVersion) {
    throw FormatError("KVTN: unsupported version " + std::to_string(version));
  }
  const auto dtype_byte = r.get<std::uint8_t>();
  if (dtype_byte > 1) {
    throw FormatError("KVTN: unsupported dtype " + std::to_string(dtype_byte));
  }
  CacheShape shape;
  shape.context_len = r.get<std::uint64_t>();
  shape.head_num = r.get<std::uint64_t>();
  shape.head_dim = r.get<std::uint64_t>();
  if (shape.context_len == 0 || shape.head_num == 0 || shape.head_dim == 0) {
    throw FormatError("KVTN: zero dimension");
  }
  const DType dtype = static_cast<DType>(dtype_byte);
  const std::size_t n = shape.element_count();
  const std::size_t width = dtype_bytes(dtype);
  if (n > r.remaining() / width) {
    throw FormatError("KVTN: truncated payload");
  }
  if (r.remaining() != n * width) {
    throw FormatError("KVTN: trailing bytes after payload");
  }
  CacheTensor t;
  t.shape = shape;
  t.dtype = dtype;
  t.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const float v = dtype == DType::kFloat16 ? half_to_float(r.get<std::uint16_t>())
                                             : r.get_f32();
    if (!std::isfinite(v)) throw FormatError("KVTN: NaN or Inf in payload");
    t.values[i] = v;
  }
  return t;
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path);
  return bytes;
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

void write_tensor(const CacheTensor& t, const std::filesystem::path& path) {
  write_file(path.string(), encode_tensor(t));
}

CacheTensor read_tensor(const std::filesystem::path& path) {
  return decode_tensor(read_file(path.string()));
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace

std::vector<std::size_t> outlier_channels(const SyntheticSpec& spec) {
  const std::size_t channels = spec.shape.head_num * spec.shape.head_dim;
  const double frac = std::clamp(spec.channel_outlier_fraction, 0.0, 1.0);
  const auto k = static_cast<std::size_t>(std::llround(frac * static_cast<double>(channels)));
  std::vector<std::size_t> ids(channels);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  const std::uint64_t salt = splitmix64(spec.seed ^ 0x6b76687566660001ull);
  auto key = [salt](std::size_t c) { return splitmix64(salt + c); };
  std::sort(ids.begin(), ids.end(), [&](std::size_t a, std::size_t b) {
    const auto ka = key(a), kb = key(b);
    return ka != kb ? ka < kb : a < b;
  });
  ids.resize(k);
  std::sort(ids.begin(), ids.end());
  return ids;
}

CacheTensor generate_synthetic(const SyntheticSpec& spec) {
  if (spec.shape.context_len == 0 || spec.shape.head_num == 0 || spec.shape.head_dim == 0) {
    throw ConfigError("synthetic tensor dimensions must be positive");
  }
  if (!(spec.base_std > 0.0) || !(spec.outlier_magnitude > 0.0) ||
      !(spec.channel_outlier_fraction >= 0.0 && spec.channel_outlier_fraction <= 1.0)) {
    throw ConfigError("invalid synthetic spec parameters");
  }
  CacheTensor t(spec.shape, spec.dtype);
  const std::size_t channels = spec.shape.head_num * spec.shape.head_dim;
  std::vector<double> stddev(channels, spec.base_std);
  for (std::size_t c : outlier_channels(spec)) stddev[c] *= spec.outlier_magnitude;

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t tok = 0; tok < spec.shape.context_len; ++tok) {
    float* row = t.values.data() + tok * channels;
    for (std::size_t c = 0; c < channels; ++c) {
      float v = static_cast<float>(normal(rng) * stddev[c]);
      if (spec.dtype == DType::kFloat16) v = round_to_half(v);
      row[c] = v;
    }
  }
  return t;
}

}  // namespace kvhuff
