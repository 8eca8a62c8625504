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

#include "kvhuff/container.hpp"

#include <algorithm>
#include <string>

#include "kvhuff/bytes.hpp"
#include "kvhuff/error.hpp"

namespace kvhuff {

namespace {

QuantMode mode_from_byte(std::uint8_t b) {
  if (b > 2) throw FormatError("KVCZ: unknown quantization mode " + std::to_string(b));
  return static_cast<QuantMode>(b);
}

}  // namespace

std::vector<std::uint8_t> save_kvcz(const LayerCacheState& s) {
  std::vector<std::uint8_t> out;
  ByteWriter w(out);
  w.put_bytes({reinterpret_cast<const std::uint8_t*>(kContainerMagic), 4});
  w.put<std::uint8_t>(kContainerVersion);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(s.dtype()));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(s.cfg_k().mode));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(s.cfg_v().mode));
  w.put<std::uint64_t>(s.context_len());
  w.put<std::uint64_t>(s.head_num());
  w.put<std::uint64_t>(s.head_dim());
  w.put<std::uint32_t>(s.cfg_k().block_size);
  w.put<std::uint32_t>(s.cfg_k().buffer_size);
  w.put_f64(s.cfg_k().rel_quant_scale);
  w.put_f64(s.cfg_v().rel_quant_scale);
  w.put<std::uint64_t>(s.compressed_tokens());
  w.put_bytes(serialize_codebook(s.k_codebook()));
  w.put_bytes(serialize_codebook(s.v_codebook()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(s.k_arena().block_count()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(s.v_arena().block_count()));
  for (auto o : s.k_arena().block_offsets()) w.put<std::uint32_t>(o);
  for (auto o : s.v_arena().block_offsets()) w.put<std::uint32_t>(o);
  w.put<std::uint64_t>(s.k_arena().write_cursor());
  w.put<std::uint64_t>(s.v_arena().write_cursor());
  w.put<std::uint64_t>(s.buffered_tokens());
  for (const auto& m : s.k_channel_metas()) {
    w.put_f32(m.min_value);
    w.put_f32(m.scale);
  }
  w.put_bytes(s.k_arena().bytes());
  w.put_bytes(s.v_arena().bytes());
  for (float f : s.k_buffer()) w.put_f32(f);
  for (float f : s.v_buffer()) w.put_f32(f);
  return out;
}

KvczHeader parse_kvcz_header(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "KVCZ");
  auto magic = r.get_bytes(4);
  if (!std::equal(magic.begin(), magic.end(), kContainerMagic)) {
    throw FormatError("KVCZ: bad magic");
  }
  const auto version = r.get<std::uint8_t>();
  if (version != kContainerVersion) {
    throw FormatError("KVCZ: unsupported version " + std::to_string(version));
  }
  KvczHeader h;
  const auto dtype = r.get<std::uint8_t>();
  if (dtype > 1) throw FormatError("KVCZ: unsupported dtype");
  h.dtype = static_cast<DType>(dtype);
  h.cfg_k.mode = mode_from_byte(r.get<std::uint8_t>());
  h.cfg_v.mode = mode_from_byte(r.get<std::uint8_t>());
  h.shape.context_len = r.get<std::uint64_t>();
  h.shape.head_num = r.get<std::uint64_t>();
  h.shape.head_dim = r.get<std::uint64_t>();
  h.cfg_k.block_size = h.cfg_v.block_size = r.get<std::uint32_t>();
  h.cfg_k.buffer_size = h.cfg_v.buffer_size = r.get<std::uint32_t>();
  h.cfg_k.rel_quant_scale = r.get_f64();
  h.cfg_v.rel_quant_scale = r.get_f64();
  h.compressed_tokens = r.get<std::uint64_t>();
  auto kl = r.get_bytes(kSerializedCodebookBytes);
  auto vl = r.get_bytes(kSerializedCodebookBytes);
  std::copy(kl.begin(), kl.end(), h.k_lengths.begin());
  std::copy(vl.begin(), vl.end(), h.v_lengths.begin());
  const auto kn = r.get<std::uint32_t>();
  const auto vn = r.get<std::uint32_t>();
  if (std::uint64_t{kn} + vn > r.remaining() / 4) throw FormatError("KVCZ: truncated offsets table");
  h.k_offsets.resize(kn);
  h.v_offsets.resize(vn);
  for (auto& o : h.k_offsets) o = r.get<std::uint32_t>();
  for (auto& o : h.v_offsets) o = r.get<std::uint32_t>();
  h.k_arena_bytes = r.get<std::uint64_t>();
  h.v_arena_bytes = r.get<std::uint64_t>();
  h.buffered_tokens = r.get<std::uint64_t>();
  if (h.shape.head_num == 0 || h.shape.head_dim == 0 || h.shape.head_dim > 2047) {
    throw FormatError("KVCZ: invalid head dimensions");
  }
  if (h.cfg_k.mode == QuantMode::kKChannel) {
    const std::size_t n = h.shape.head_num * h.shape.head_dim;
    if (n > r.remaining() / 8) throw FormatError("KVCZ: truncated channel metas");
    h.k_channel_metas.resize(n);
    for (auto& m : h.k_channel_metas) {
      m.min_value = r.get_f32();
      m.scale = r.get_f32();
    }
  }
  h.arena_begin = r.position();
  return h;
}

LayerCacheState load_kvcz(std::span<const std::uint8_t> bytes) {
  KvczHeader h = parse_kvcz_header(bytes);
  ByteReader r(bytes.subspan(h.arena_begin), "KVCZ body");
  if (h.k_arena_bytes > r.remaining() || h.v_arena_bytes > r.remaining() - h.k_arena_bytes) {
    throw FormatError("KVCZ: truncated arena bytes");
  }
  auto kb = r.get_bytes(h.k_arena_bytes);
  auto vb = r.get_bytes(h.v_arena_bytes);
  const std::uint64_t row = h.shape.head_num * h.shape.head_dim;
  if (h.buffered_tokens > 0xffffffffu || h.buffered_tokens * row * 8 != r.remaining()) {
    throw FormatError("KVCZ: buffer section has the wrong length");
  }
  LayerCacheState::Parts p;
  p.shape = h.shape;
  p.dtype = h.dtype;
  p.cfg_k = h.cfg_k;
  p.cfg_v = h.cfg_v;
  p.compressed_tokens = h.compressed_tokens;
  if (h.compressed_tokens + h.buffered_tokens != h.shape.context_len) {
    throw FormatError("KVCZ: token counts do not add up to context_len");
  }
  try {
    p.k_codebook = deserialize_codebook(h.k_lengths);
    p.v_codebook = deserialize_codebook(h.v_lengths);
    p.k_arena = CompressedArena::from_parts({kb.begin(), kb.end()}, std::move(h.k_offsets));
    p.v_arena = CompressedArena::from_parts({vb.begin(), vb.end()}, std::move(h.v_offsets));
  } catch (const CodecError& e) {
    throw FormatError(std::string("KVCZ: ") + e.what());
  } catch (const FormatError& e) {
    throw FormatError(std::string("KVCZ: ") + e.what());
  }
  p.k_channel_metas = std::move(h.k_channel_metas);
  const std::size_t n = h.buffered_tokens * row;
  p.k_buffer.resize(n);
  p.v_buffer.resize(n);
  for (auto& f : p.k_buffer) f = r.get_f32();
  for (auto& f : p.v_buffer) f = r.get_f32();
  try {
    return LayerCacheState::from_parts(std::move(p));
  } catch (const ConfigError& e) {
    throw FormatError(std::string("KVCZ: ") + e.what());
  }
}

}  // namespace kvhuff
