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

#ifndef APMSQUEEZE_COMPRESSION_H_
#define APMSQUEEZE_COMPRESSION_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "apmsqueeze/numerics.h"
#include "apmsqueeze/rng.h"

namespace apmsqueeze {

// Values double as the `kind` byte of the serialized chunk header.
enum class CompressorKind : uint8_t {
  kIdentity = 0,
  kOneBit = 1,
  kTopK = 2,
  kStochasticQuant = 3,
};

std::string_view ToString(CompressorKind kind);
// Accepts "identity", "onebit", "topk", "quant" (case-sensitive).
CompressorKind ParseCompressorKind(std::string_view name);

struct CompressorSpec {
  CompressorKind kind = CompressorKind::kIdentity;
  double k_percent = 100.0;  // TopK only, in (0, 100]
  uint32_t levels = 2;       // StochasticQuant only, >= 2
  uint64_t seed = 0;         // stochastic kinds only

  static CompressorSpec Identity() { return {}; }
  static CompressorSpec OneBit() { return {CompressorKind::kOneBit}; }
  static CompressorSpec TopK(double k_percent) {
    return {CompressorKind::kTopK, k_percent};
  }
  static CompressorSpec StochasticQuant(uint32_t levels, uint64_t seed) {
    return {CompressorKind::kStochasticQuant, 100.0, levels, seed};
  }

  bool lossless() const { return kind == CompressorKind::kIdentity; }
  // Throws ConfigError on out-of-range parameters.
  void Validate() const;
  std::string Describe() const;
};

struct IdentityPayload {
  std::vector<double> values;
};

// Sign bits packed LSB-first; a set bit marks a negative element.
struct OneBitPayload {
  double scale = 0.0;
  std::vector<uint8_t> sign_bits;
};

// Indices ascending.
struct TopKPayload {
  std::vector<uint32_t> indices;
  std::vector<double> values;
};

// Element i decodes to lo + codes[i] * (hi - lo) / (levels - 1).
struct QuantPayload {
  double lo = 0.0;
  double hi = 0.0;
  uint32_t levels = 2;
  std::vector<uint32_t> codes;
};

using ChunkPayload =
    std::variant<IdentityPayload, OneBitPayload, TopKPayload, QuantPayload>;

struct CompressedChunk {
  uint64_t original_len = 0;
  ChunkPayload payload;
  uint64_t wire_bits = 0;

  CompressorKind kind() const;
};

/// Encodes `input` with the codec named by `spec`. Only StochasticQuant
/// draws from `rng`. Throws DomainError on non-finite input.
CompressedChunk Compress(const CompressorSpec& spec, const DenseVector& input,
                         RngStream& rng);

// Dense reconstruction. Throws DecodeError on an inconsistent payload.
DenseVector Decompress(const CompressedChunk& chunk);

/// Bits on the wire for the chunk's payload and codec metadata:
///   Identity        64 per element
///   OneBit          1 per element + 64 (scale)
///   TopK            96 per kept entry (u32 index + f64 value) + 64 (count)
///   StochasticQuant ceil(log2 levels) per element + 128 (grid bounds)
/// The framing header of the serialized form is not counted.
uint64_t WireSizeBits(const CompressedChunk& chunk);

// Number of entries TopK keeps: ceil(k_percent / 100 * len), at least one
// for non-empty input and at most len.
size_t TopKCount(double k_percent, size_t len);

// Bits per element of a StochasticQuant code: ceil(log2 levels).
uint32_t QuantCodeBits(uint32_t levels);

/// Unbiased stochastic rounding of `value` onto `levels` uniformly spaced
/// points spanning [lo, hi]. `u` is a uniform draw in [0, 1). Returns the
/// level index; rounding goes up with probability equal to the fractional
/// position between the two neighbouring levels.
uint32_t StochasticLevel(double value, double lo, double hi, uint32_t levels,
                         double u);

/// Compression residual (error-feedback memory) for one chunk stream. The
/// length is fixed at construction.
class ErrorState {
 public:
  ErrorState() = default;
  explicit ErrorState(size_t len) : residual_(len) {}

  const DenseVector& residual() const { return residual_; }
  size_t size() const { return residual_.size(); }
  void Reset() { residual_ = DenseVector(residual_.size()); }

 private:
  friend CompressedChunk CompressWithErrorFeedback(const CompressorSpec&,
                                                   const DenseVector&,
                                                   ErrorState&, RngStream&);
  DenseVector residual_;
};

/// s = input + residual; c = Compress(s); residual = s - Decompress(c).
CompressedChunk CompressWithErrorFeedback(const CompressorSpec& spec,
                                          const DenseVector& input,
                                          ErrorState& state, RngStream& rng);

// Serialized form: kind u8, original_len u64, then the codec payload, all
// little-endian. StochasticQuant additionally frames a u32 level count
// before its grid bounds.
std::vector<uint8_t> Serialize(const CompressedChunk& chunk);
CompressedChunk Deserialize(std::span<const uint8_t> bytes);

// Bytes of framing (header) that precede the payload for a given kind.
size_t FramingBytes(CompressorKind kind);

}  // namespace apmsqueeze

#endif  // APMSQUEEZE_COMPRESSION_H_
