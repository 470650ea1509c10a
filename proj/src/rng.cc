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

#include "apmsqueeze/rng.h"

#include <cmath>
#include <numbers>

#include "apmsqueeze/errors.h"

namespace apmsqueeze {

namespace {
constexpr uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}

uint64_t Mix64(uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

RngStream::RngStream(uint64_t seed, std::initializer_list<uint64_t> path) {
  uint64_t k = Mix64(seed + kGolden);
  for (uint64_t p : path) {
    k = Mix64(k ^ Mix64(p + kGolden));
  }
  key_ = k;
}

RngStream::RngStream(uint64_t seed, StreamTag tag, uint64_t a, uint64_t b,
                     uint64_t c)
    : RngStream(seed, {static_cast<uint64_t>(tag), a, b, c}) {}

uint64_t RngStream::NextU64() {
  ++counter_;
  return Mix64(key_ + counter_ * kGolden);
}

double RngStream::NextUniform() {
  return static_cast<double>(NextU64() >> 11) * 0x1.0p-53;
}

double RngStream::NextGaussian() {
  // 1 - u lies in (0, 1], keeping log finite.
  const double u1 = 1.0 - NextUniform();
  const double u2 = NextUniform();
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

uint64_t RngStream::NextBelow(uint64_t bound) {
  if (bound == 0) throw DomainError("NextBelow: bound must be positive");
  // Rejection sampling on the top of the range removes modulo bias.
  const uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  uint64_t r;
  do {
    r = NextU64();
  } while (r >= limit);
  return r % bound;
}

}  // namespace apmsqueeze
