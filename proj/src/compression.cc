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

#include "apmsqueeze/compression.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "apmsqueeze/errors.h"

namespace apmsqueeze {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void RequireFinite(const DenseVector& input) {
  for (size_t i = 0; i < input.size(); ++i) {
    if (!std::isfinite(input[i])) {
      throw DomainError("Compress: non-finite input at index " +
                        std::to_string(i));
    }
  }
}

bool SignBit(const std::vector<uint8_t>& bits, size_t i) {
  return (bits[i / 8] >> (i % 8)) & 1u;
}

CompressedChunk CompressOneBit(const DenseVector& input) {
  const size_t n = input.size();
  OneBitPayload p;
  p.sign_bits.assign((n + 7) / 8, 0);
  for (size_t i = 0; i < n; ++i) {
    // sign(0) = +1, so only strictly negative values set a bit.
    if (input[i] < 0.0) p.sign_bits[i / 8] |= uint8_t(1u << (i % 8));
  }
  // ||sign vector|| = sqrt(n) because every entry is +-1.
  const double norm = L2Norm(input);
  p.scale = norm == 0.0 ? 0.0 : norm / std::sqrt(static_cast<double>(n));
  return {n, std::move(p), 0};
}

CompressedChunk CompressTopK(const DenseVector& input, double k_percent) {
  const size_t n = input.size();
  const size_t kept = TopKCount(k_percent, n);
  std::vector<uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  // Larger magnitude first, lower index on ties.
  auto before = [&](uint32_t a, uint32_t b) {
    const double ma = std::abs(input[a]);
    const double mb = std::abs(input[b]);
    return ma > mb || (ma == mb && a < b);
  };
  if (kept < n) {
    std::nth_element(order.begin(), order.begin() + kept, order.end(), before);
  }
  order.resize(kept);
  std::sort(order.begin(), order.end());
  TopKPayload p;
  p.indices = order;
  p.values.reserve(kept);
  for (uint32_t idx : order) p.values.push_back(input[idx]);
  return {n, std::move(p), 0};
}

CompressedChunk CompressQuant(const DenseVector& input, uint32_t levels,
                              RngStream& rng) {
  double max_abs = 0.0;
  for (double x : input) max_abs = std::max(max_abs, std::abs(x));
  QuantPayload p;
  p.lo = -max_abs;
  p.hi = max_abs;
  p.levels = levels;
  p.codes.reserve(input.size());
  for (double x : input) {
    p.codes.push_back(StochasticLevel(x, p.lo, p.hi, levels, rng.NextUniform()));
  }
  return {input.size(), std::move(p), 0};
}

}  // namespace

std::string_view ToString(CompressorKind kind) {
  switch (kind) {
    case CompressorKind::kIdentity:
      return "identity";
    case CompressorKind::kOneBit:
      return "onebit";
    case CompressorKind::kTopK:
      return "topk";
    case CompressorKind::kStochasticQuant:
      return "quant";
  }
  return "unknown";
}

CompressorKind ParseCompressorKind(std::string_view name) {
  for (auto k : {CompressorKind::kIdentity, CompressorKind::kOneBit,
                 CompressorKind::kTopK, CompressorKind::kStochasticQuant}) {
    if (ToString(k) == name) return k;
  }
  throw ConfigError("unknown compressor '" + std::string(name) + "'");
}

void CompressorSpec::Validate() const {
  switch (kind) {
    case CompressorKind::kTopK:
      if (!(k_percent > 0.0 && k_percent <= 100.0)) {
        throw ConfigError("TopK requires 0 < k_percent <= 100");
      }
      break;
    case CompressorKind::kStochasticQuant:
      if (levels < 2) throw ConfigError("StochasticQuant requires levels >= 2");
      break;
    case CompressorKind::kIdentity:
    case CompressorKind::kOneBit:
      break;
    default:
      throw ConfigError("invalid compressor kind");
  }
}

std::string CompressorSpec::Describe() const {
  std::ostringstream os;
  os << ToString(kind);
  if (kind == CompressorKind::kTopK) os << "(" << k_percent << "%)";
  if (kind == CompressorKind::kStochasticQuant) os << "(" << levels << ")";
  return os.str();
}

CompressorKind CompressedChunk::kind() const {
  return std::visit(
      Overloaded{
          [](const IdentityPayload&) { return CompressorKind::kIdentity; },
          [](const OneBitPayload&) { return CompressorKind::kOneBit; },
          [](const TopKPayload&) { return CompressorKind::kTopK; },
          [](const QuantPayload&) { return CompressorKind::kStochasticQuant; },
      },
      payload);
}

size_t TopKCount(double k_percent, size_t len) {
  if (len == 0) return 0;
  // Multiply before dividing so integral percentages stay exact.
  const double raw = k_percent * static_cast<double>(len) / 100.0;
  auto kept = static_cast<size_t>(std::ceil(raw - 1e-9));
  return std::clamp<size_t>(kept, 1, len);
}

uint32_t QuantCodeBits(uint32_t levels) {
  return levels < 2 ? 0 : static_cast<uint32_t>(std::bit_width(levels - 1));
}

uint32_t StochasticLevel(double value, double lo, double hi, uint32_t levels,
                         double u) {
  if (levels < 2) throw ConfigError("StochasticLevel: levels must be >= 2");
  const double step = (hi - lo) / static_cast<double>(levels - 1);
  if (!(step > 0.0)) return 0;
  const double pos = (value - lo) / step;
  const double top = static_cast<double>(levels - 2);
  const double base = std::clamp(std::floor(pos), 0.0, top);
  const double frac = std::clamp(pos - base, 0.0, 1.0);
  return static_cast<uint32_t>(base) + (u < frac ? 1u : 0u);
}

CompressedChunk Compress(const CompressorSpec& spec, const DenseVector& input,
                         RngStream& rng) {
  spec.Validate();
  RequireFinite(input);
  CompressedChunk out;
  switch (spec.kind) {
    case CompressorKind::kIdentity:
      out = {input.size(), IdentityPayload{input.values()}, 0};
      break;
    case CompressorKind::kOneBit:
      out = CompressOneBit(input);
      break;
    case CompressorKind::kTopK:
      out = CompressTopK(input, spec.k_percent);
      break;
    case CompressorKind::kStochasticQuant:
      out = CompressQuant(input, spec.levels, rng);
      break;
  }
  out.wire_bits = WireSizeBits(out);
  return out;
}

DenseVector Decompress(const CompressedChunk& chunk) {
  const size_t n = chunk.original_len;
  return std::visit(
      Overloaded{
          [&](const IdentityPayload& p) {
            if (p.values.size() != n) throw DecodeError("identity: bad length");
            return DenseVector(p.values);
          },
          [&](const OneBitPayload& p) {
            if (p.sign_bits.size() != (n + 7) / 8) {
              throw DecodeError("onebit: sign buffer size mismatch");
            }
            if (!std::isfinite(p.scale) || p.scale < 0.0) {
              throw DecodeError("onebit: invalid scale");
            }
            DenseVector out(n);
            for (size_t i = 0; i < n; ++i) {
              out[i] = SignBit(p.sign_bits, i) ? -p.scale : p.scale;
            }
            return out;
          },
          [&](const TopKPayload& p) {
            if (p.indices.size() != p.values.size() || p.indices.size() > n) {
              throw DecodeError("topk: inconsistent entry count");
            }
            DenseVector out(n);
            for (size_t j = 0; j < p.indices.size(); ++j) {
              if (p.indices[j] >= n) throw DecodeError("topk: index out of range");
              out[p.indices[j]] = p.values[j];
            }
            return out;
          },
          [&](const QuantPayload& p) {
            if (p.levels < 2 || p.codes.size() != n) {
              throw DecodeError("quant: malformed payload");
            }
            const double step = (p.hi - p.lo) / static_cast<double>(p.levels - 1);
            DenseVector out(n);
            for (size_t i = 0; i < n; ++i) {
              if (p.codes[i] >= p.levels) throw DecodeError("quant: code out of range");
              out[i] = p.lo + static_cast<double>(p.codes[i]) * step;
            }
            return out;
          },
      },
      chunk.payload);
}

uint64_t WireSizeBits(const CompressedChunk& chunk) {
  const uint64_t n = chunk.original_len;
  return std::visit(
      Overloaded{
          [&](const IdentityPayload&) { return n * 64; },
          [&](const OneBitPayload&) { return n + 64; },
          [&](const TopKPayload& p) {
            return static_cast<uint64_t>(p.indices.size()) * (32 + 64) + 64;
          },
          [&](const QuantPayload& p) {
            return n * QuantCodeBits(p.levels) + 128;
          },
      },
      chunk.payload);
}

CompressedChunk CompressWithErrorFeedback(const CompressorSpec& spec,
                                          const DenseVector& input,
                                          ErrorState& state, RngStream& rng) {
  CheckSameLength(input, state.residual_, "CompressWithErrorFeedback");
  DenseVector compensated = input + state.residual_;
  CompressedChunk chunk = Compress(spec, compensated, rng);
  compensated -= Decompress(chunk);
  state.residual_ = std::move(compensated);
  return chunk;
}

}  // namespace apmsqueeze
