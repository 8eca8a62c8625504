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

#ifndef KVHUFF_BYTES_HPP_
#define KVHUFF_BYTES_HPP_

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "kvhuff/error.hpp"

namespace kvhuff {

// Little-endian scalar stores/loads, independent of host byte order.

template <typename U>
inline void store_le(std::uint8_t* dst, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    dst[i] = static_cast<std::uint8_t>(v >> (8 * i));
  }
}

template <typename U>
inline U load_le(const std::uint8_t* src) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    v |= static_cast<U>(static_cast<U>(src[i]) << (8 * i));
  }
  return v;
}

inline void store_f32(std::uint8_t* dst, float f) {
  store_le<std::uint32_t>(dst, std::bit_cast<std::uint32_t>(f));
}
inline float load_f32(const std::uint8_t* src) {
  return std::bit_cast<float>(load_le<std::uint32_t>(src));
}

class ByteWriter {
 public:
  explicit ByteWriter(std::vector<std::uint8_t>& out) : out_(out) {}

  template <typename U>
  void put(U v) {
    const std::size_t at = out_.size();
    out_.resize(at + sizeof(U));
    store_le<U>(out_.data() + at, v);
  }
  void put_f32(float f) { put(std::bit_cast<std::uint32_t>(f)); }
  void put_f64(double f) { put(std::bit_cast<std::uint64_t>(f)); }
  void put_bytes(std::span<const std::uint8_t> b) {
    out_.insert(out_.end(), b.begin(), b.end());
  }

 private:
  std::vector<std::uint8_t>& out_;
};

// Bounds-checked cursor over a byte span. Reading past the end throws
// FormatError naming `what`.
class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> in, std::string what)
      : in_(in), what_(std::move(what)) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    const U v = load_le<U>(in_.data() + pos_);
    pos_ += sizeof(U);
    return v;
  }
  float get_f32() { return std::bit_cast<float>(get<std::uint32_t>()); }
  double get_f64() { return std::bit_cast<double>(get<std::uint64_t>()); }
  std::span<const std::uint8_t> get_bytes(std::size_t n) {
    need(n);
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (n > in_.size() - pos_) {
      throw FormatError(what_ + ": truncated (need " + std::to_string(n) +
                        " bytes at offset " + std::to_string(pos_) + ", have " +
                        std::to_string(in_.size() - pos_) + ")");
    }
  }

  std::span<const std::uint8_t> in_;
  std::string what_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> bytes);

}  // namespace kvhuff

#endif  // KVHUFF_BYTES_HPP_
