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

#ifndef APMSQUEEZE_OPTIMIZER_H_
#define APMSQUEEZE_OPTIMIZER_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "apmsqueeze/collective.h"
#include "apmsqueeze/compression.h"
#include "apmsqueeze/metrics.h"
#include "apmsqueeze/numerics.h"
#include "apmsqueeze/problems.h"

namespace apmsqueeze {

// Constant rate with an optional step decay: base * factor^(t / every).
struct LearningRate {
  double base = 1e-3;
  double decay_factor = 1.0;
  uint64_t decay_every = 0;  // 0 disables decay

  double At(uint64_t t) const;
};

// What the compressed allreduce carries after warmup.
enum class Variant {
  // Error-compensated momentum (the default algorithm).
  kMomentum,
  // Error-compensated gradients through a plain allreduce; momentum is then
  // updated locally from the averaged gradient. Ablation only.
  kGradient,
};

struct OptimizerConfig {
  LearningRate lr;
  double beta1 = 0.9;
  double beta2 = 0.999;
  // Adam denominator constant: sqrt(v_hat) + eta.
  double eta = 1e-8;
  // Floor on sqrt(v_frozen) in the preconditioned update.
  double eta_floor = 1e-8;
  uint64_t t_warmup = 1;
  uint64_t t_total = 2;
  CompressorSpec compressor;
  // Freeze the bias-corrected v_hat instead of the raw v.
  bool freeze_bias_corrected = false;
  Variant variant = Variant::kMomentum;

  void Validate() const;
};

struct OptimizerState {
  DenseVector x;
  DenseVector m;
  DenseVector v;
  std::optional<DenseVector> v_frozen;
  uint64_t t = 0;  // completed steps
  Phase phase = Phase::kWarmup;

  static OptimizerState Init(DenseVector x0);
};

/// One step of full-precision Adam on the exact mean of the workers'
/// gradients, with bias correction. Freezes v and switches to the squeeze
/// phase once t reaches t_warmup.
void AdamWarmupStep(const OptimizerConfig& cfg, OptimizerState& state,
                    std::span<const DenseVector> gradients);

/// One step after warmup. Each worker forms beta1 * m + (1 - beta1) * g_i
/// from the shared momentum m; the compressed allreduce of those candidates
/// becomes the new m, and x moves by lr * m / max(sqrt(v_frozen), eta_floor).
void SqueezeStep(const OptimizerConfig& cfg, OptimizerState& state,
                 CollectiveState& collective,
                 std::span<const DenseVector> gradients);

// Collective matching cfg.variant.
CollectiveState MakeCollective(const OptimizerConfig& cfg, size_t n_workers,
                               size_t dim);

struct RunOptions {
  // Evaluate the full objective, gradient norms and residual probes every
  // step. They only read state.
  bool diagnostics = true;
  bool record_wall_time = false;
  ExecutionMode execution = ExecutionMode::kSequential;
  // Called after every step with the record and the post-step state.
  std::function<void(const MetricsRecord&, const OptimizerState&,
                     const CollectiveState&)>
      observer;
};

struct RunResult {
  OptimizerState state;
  std::vector<MetricsRecord> trajectory;
  uint64_t warmup_bits = 0;
  uint64_t squeeze_bits = 0;
  double final_loss = 0.0;
  double final_grad_norm_sq = 0.0;
  double max_eps_worker = 0.0;
  double max_eps_server = 0.0;
  // Step whose loss was non-finite; the run stops there.
  std::optional<uint64_t> diverged_at;
};

/// Runs t_warmup Adam steps followed by t_total - t_warmup squeeze steps on
/// `problem` with one worker per shard. Worker i's minibatch at step t is
/// drawn from the stream (seed, gradient-sample, i, t).
RunResult Run(const OptimizerConfig& cfg, const Problem& problem, uint64_t seed,
              const RunOptions& options = {});

}  // namespace apmsqueeze

#endif  // APMSQUEEZE_OPTIMIZER_H_
