// Copyright 2026 The apmsqueeze Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// =============================================================================

#include <bit>
#include <cstring>

#include "apmsqueeze/compression.h"
#include "apmsqueeze/errors.h"

namespace apmsqueeze {

namespace {

class Writer {
 public:
  void U8(uint8_t v) { out_.push_back(v); }
  void U32(uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(uint8_t(v >> (8 * i)));
  }
  void U64(uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(uint8_t(v >> (8 * i)));
  }
  void F64(double v) { U64(std::bit_cast<uint64_t>(v)); }
  void Bytes(const std::vector<uint8_t>& b) {
    out_.insert(out_.end(), b.begin(), b.end());
  }
  std::vector<uint8_t> Take() { return std::move(out_); }

 private:
  std::vector<uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const uint8_t> in) : in_(in) {}

  uint8_t U8() { return Need(1)[0]; }
  uint32_t U32() {
    auto b = Need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(b[i]) << (8 * i);
    return v;
  }
  uint64_t U64() {
    auto b = Need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(b[i]) << (8 * i);
    return v;
  }
  double F64() { return std::bit_cast<double>(U64()); }
  std::vector<uint8_t> Bytes(size_t n) {
    auto b = Need(n);
    return {b.begin(), b.end()};
  }
  size_t remaining() const { return in_.size() - pos_; }

 private:
  std::span<const uint8_t> Need(size_t n) {
    if (n > remaining()) throw DecodeError("chunk truncated");
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  std::span<const uint8_t> in_;
  size_t pos_ = 0;
};

std::vector<uint8_t> PackCodes(const std::vector<uint32_t>& codes,
                               uint32_t bits) {
  std::vector<uint8_t> out((codes.size() * bits + 7) / 8, 0);
  size_t bit = 0;
  for (uint32_t c : codes) {
    for (uint32_t b = 0; b < bits; ++b, ++bit) {
      if ((c >> b) & 1u) out[bit / 8] |= uint8_t(1u << (bit % 8));
    }
  }
  return out;
}

std::vector<uint32_t> UnpackCodes(const std::vector<uint8_t>& packed,
                                  size_t count, uint32_t bits) {
  std::vector<uint32_t> out(count, 0);
  size_t bit = 0;
  for (size_t i = 0; i < count; ++i) {
    for (uint32_t b = 0; b < bits; ++b, ++bit) {
      if ((packed[bit / 8] >> (bit % 8)) & 1u) out[i] |= 1u << b;
    }
  }
  return out;
}

}  // namespace

size_t FramingBytes(CompressorKind kind) {
  return 1 + 8 + (kind == CompressorKind::kStochasticQuant ? 4 : 0);
}

std::vector<uint8_t> Serialize(const CompressedChunk& chunk) {
  Writer w;
  w.U8(static_cast<uint8_t>(chunk.kind()));
  w.U64(chunk.original_len);
  if (auto* p = std::get_if<IdentityPayload>(&chunk.payload)) {
    for (double v : p->values) w.F64(v);
  } else if (auto* p = std::get_if<OneBitPayload>(&chunk.payload)) {
    w.F64(p->scale);
    w.Bytes(p->sign_bits);
  } else if (auto* p = std::get_if<TopKPayload>(&chunk.payload)) {
    w.U64(p->indices.size());
    for (size_t j = 0; j < p->indices.size(); ++j) {
      w.U32(p->indices[j]);
      w.F64(p->values[j]);
    }
  } else if (auto* p = std::get_if<QuantPayload>(&chunk.payload)) {
    w.U32(p->levels);
    w.F64(p->lo);
    w.F64(p->hi);
    w.Bytes(PackCodes(p->codes, QuantCodeBits(p->levels)));
  }
  return w.Take();
}

CompressedChunk Deserialize(std::span<const uint8_t> bytes) {
  Reader r(bytes);
  const uint8_t kind = r.U8();
  CompressedChunk chunk;
  chunk.original_len = r.U64();
  const uint64_t n = chunk.original_len;
  // Guards the allocations below against absurd lengths in corrupt input.
  auto require = [&](uint64_t need_bytes) {
    if (need_bytes > r.remaining()) throw DecodeError("chunk truncated");
  };
  switch (kind) {
    case uint8_t(CompressorKind::kIdentity): {
      require(n * 8);
      IdentityPayload p;
      p.values.reserve(n);
      for (uint64_t i = 0; i < n; ++i) p.values.push_back(r.F64());
      chunk.payload = std::move(p);
      break;
    }
    case uint8_t(CompressorKind::kOneBit): {
      OneBitPayload p;
      p.scale = r.F64();
      require((n + 7) / 8);
      p.sign_bits = r.Bytes((n + 7) / 8);
      chunk.payload = std::move(p);
      break;
    }
    case uint8_t(CompressorKind::kTopK): {
      const uint64_t count = r.U64();
      if (count > n) throw DecodeError("topk: more entries than elements");
      require(count * 12);
      TopKPayload p;
      for (uint64_t j = 0; j < count; ++j) {
        p.indices.push_back(r.U32());
        p.values.push_back(r.F64());
      }
      chunk.payload = std::move(p);
      break;
    }
    case uint8_t(CompressorKind::kStochasticQuant): {
      QuantPayload p;
      p.levels = r.U32();
      if (p.levels < 2) throw DecodeError("quant: levels < 2");
      p.lo = r.F64();
      p.hi = r.F64();
      const uint32_t bits = QuantCodeBits(p.levels);
      require((n * bits + 7) / 8);
      p.codes = UnpackCodes(r.Bytes((n * bits + 7) / 8), n, bits);
      chunk.payload = std::move(p);
      break;
    }
    default:
      throw DecodeError("unknown chunk kind " + std::to_string(kind));
  }
  if (r.remaining() != 0) throw DecodeError("trailing bytes after chunk");
  // Validates indices, codes and buffer sizes.
  (void)Decompress(chunk);
  chunk.wire_bits = WireSizeBits(chunk);
  return chunk;
}

}  // namespace apmsqueeze
