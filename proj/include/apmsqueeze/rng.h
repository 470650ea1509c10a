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

#ifndef APMSQUEEZE_RNG_H_
#define APMSQUEEZE_RNG_H_

#include <cstdint>
#include <initializer_list>

namespace apmsqueeze {

// Stream tags used to derive independent sub-streams from a master seed.
enum class StreamTag : uint64_t {
  kGradientSample = 1,
  kWorkerCompress = 2,
  kServerCompress = 3,
  kVarianceProbe = 4,
  kDataGeneration = 5,
  kTest = 6,
};

/// Counter-based random stream.
///
/// A stream is identified by a master seed and a path of integers (for
/// example tag, worker id, step). Draw `i` of a stream is a pure function of
/// (seed, path, i), so the sequence a worker sees does not depend on how
/// many workers exist or on thread scheduling. The generator is SplitMix64
/// keyed by a hash of the path; conversions to floating point are written
/// out here rather than taken from <random>, whose distributions are not
/// reproducible across standard library implementations.
class RngStream {
 public:
  RngStream(uint64_t seed, std::initializer_list<uint64_t> path);
  RngStream(uint64_t seed, StreamTag tag, uint64_t a = 0, uint64_t b = 0,
            uint64_t c = 0);

  uint64_t NextU64();
  // Uniform on [0, 1) with 53 random bits.
  double NextUniform();
  // Standard normal via Box-Muller; consumes two uniforms per call.
  double NextGaussian();
  // Uniform integer in [0, bound). bound must be > 0.
  uint64_t NextBelow(uint64_t bound);

  uint64_t draws() const { return counter_; }

 private:
  uint64_t key_;
  uint64_t counter_ = 0;
};

// SplitMix64 finalizer.
uint64_t Mix64(uint64_t z);

}  // namespace apmsqueeze

#endif  // APMSQUEEZE_RNG_H_
