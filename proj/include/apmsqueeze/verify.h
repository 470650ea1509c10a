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

#ifndef APMSQUEEZE_VERIFY_H_
#define APMSQUEEZE_VERIFY_H_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "apmsqueeze/compression.h"
#include "apmsqueeze/optimizer.h"
#include "apmsqueeze/problems.h"

namespace apmsqueeze::verify {

// One numeric check: passes when lower <= observed <= upper.
struct Check {
  std::string name;
  double observed = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  bool passed = false;
};

struct Report {
  std::string suite;
  std::vector<Check> checks;

  bool passed() const;
  const Check* first_failure() const;
  void Add(std::string name, double observed, double lower, double upper);
  void Print(std::ostream& out) const;
};

enum class Suite {
  kUpdatingForm,
  kIdentityEquiv,
  kCodecContracts,
  kVarianceScaling,
  kFiniteDiff,
};

std::string_view ToString(Suite s);
// Accepts the snake_case names used on the command line.
Suite ParseSuite(std::string_view name);

// Runs a suite with its default parameters.
Report RunSuite(Suite s);

struct UpdatingFormParams {
  std::vector<CompressorSpec> compressors = {
      CompressorSpec::Identity(), CompressorSpec::OneBit(),
      CompressorSpec::TopK(10.0), CompressorSpec::StochasticQuant(4, 7)};
  std::vector<size_t> workers = {1, 2, 4, 8};
  std::vector<size_t> dims = {7, 64, 1000};
  uint64_t steps = 200;
  double beta1 = 0.9;
  double tolerance = 1e-10;
  uint64_t seed = 2024;
};

/// Drives squeeze steps with random gradients and checks, after every step,
///   m_t = beta m_{t-1} + (1 - beta) mean(g_t) + D_{t-1} - D_t
/// where D is the global residual read back from the live error states.
/// One check per (compressor, n, d) holding the largest deviation.
Report VerifyUpdatingForm(const UpdatingFormParams& p = {});

/// Identity compressor: the allreduce equals the exact mean, and a full run
/// matches an independently written uncompressed preconditioned momentum
/// SGD, with all residuals exactly zero.
Report VerifyIdentityEquivalence(uint64_t total_steps = 2000);

Report VerifyCodecContracts();

struct VarianceScalingParams {
  std::vector<size_t> workers = {2, 4, 8};
  size_t draws = 10000;
  double band = 0.2;  // accept ratio * n in [1 - band, 1 + band]
  uint64_t seed = 99;
};

// Variance of the n-worker averaged stochastic gradient over the
// single-worker variance, for each n.
Report VerifyVarianceScaling(const VarianceScalingParams& p = {});

// Central differences against the analytic gradient for every problem kind.
Report VerifyFiniteDifferences();

/// Uncompressed preconditioned momentum SGD after an Adam warmup, written
/// with plain loops and no collective. Uses the same minibatch streams as
/// Run(). Returns x after every step.
std::vector<DenseVector> ReferencePreconditionedMomentum(
    const OptimizerConfig& cfg, const Problem& problem, uint64_t seed);

}  // namespace apmsqueeze::verify

#endif  // APMSQUEEZE_VERIFY_H_
