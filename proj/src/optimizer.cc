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

#include "apmsqueeze/optimizer.h"

#include <chrono>
#include <cmath>
#include <limits>
#include <string>

#include "apmsqueeze/errors.h"
#include "apmsqueeze/rng.h"

namespace apmsqueeze {

namespace {

void CheckGradients(const OptimizerState& state,
                    std::span<const DenseVector> gradients) {
  if (gradients.empty()) throw DimensionError("optimizer: no gradients");
  for (const DenseVector& g : gradients) {
    if (g.size() != state.x.size()) {
      throw DimensionError("optimizer: gradient length " +
                           std::to_string(g.size()) + " != model length " +
                           std::to_string(state.x.size()));
    }
  }
}

}  // namespace

std::string_view ToString(Phase phase) {
  return phase == Phase::kWarmup ? "warmup" : "squeeze";
}

double LearningRate::At(uint64_t t) const {
  if (decay_every == 0 || decay_factor == 1.0) return base;
  return base * std::pow(decay_factor, static_cast<double>(t / decay_every));
}

void OptimizerConfig::Validate() const {
  if (!(lr.base > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(lr.decay_factor > 0.0)) throw ConfigError("lr decay factor must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("beta1 must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must be in [0, 1)");
  if (!(eta >= 0.0)) throw ConfigError("eta must be >= 0");
  if (!(eta_floor > 0.0)) throw ConfigError("eta_floor must be > 0");
  if (t_warmup < 1) throw ConfigError("t_warmup must be >= 1");
  if (t_warmup >= t_total) throw ConfigError("t_warmup must be < t_total");
  compressor.Validate();
}

OptimizerState OptimizerState::Init(DenseVector x0) {
  OptimizerState s;
  const size_t d = x0.size();
  s.x = std::move(x0);
  s.m = DenseVector(d);
  s.v = DenseVector(d);
  return s;
}

void AdamWarmupStep(const OptimizerConfig& cfg, OptimizerState& state,
                    std::span<const DenseVector> gradients) {
  if (state.phase != Phase::kWarmup) {
    throw StateError("AdamWarmupStep called after warmup finished");
  }
  CheckGradients(state, gradients);
  const DenseVector g = Mean(gradients);
  const uint64_t t = state.t + 1;
  const double b1 = cfg.beta1, b2 = cfg.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
  const double lr = cfg.lr.At(state.t);
  for (size_t j = 0; j < g.size(); ++j) {
    state.m[j] = b1 * state.m[j] + (1.0 - b1) * g[j];
    state.v[j] = b2 * state.v[j] + (1.0 - b2) * g[j] * g[j];
    const double m_hat = state.m[j] / c1;
    const double v_hat = state.v[j] / c2;
    state.x[j] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eta);
  }
  state.t = t;
  if (t == cfg.t_warmup) {
    state.v_frozen = cfg.freeze_bias_corrected ? (1.0 / c2) * state.v : state.v;
    state.phase = Phase::kSqueeze;
  }
}

void SqueezeStep(const OptimizerConfig& cfg, OptimizerState& state,
                 CollectiveState& collective,
                 std::span<const DenseVector> gradients) {
  if (state.phase != Phase::kSqueeze || !state.v_frozen) {
    throw StateError("SqueezeStep called before warmup finished");
  }
  CheckGradients(state, gradients);
  if (gradients.size() != collective.n_workers()) {
    throw DimensionError("SqueezeStep: one gradient per worker required");
  }
  const double b1 = cfg.beta1;
  if (cfg.variant == Variant::kMomentum) {
    std::vector<DenseVector> candidates;
    candidates.reserve(gradients.size());
    for (const DenseVector& g : gradients) {
      candidates.push_back(LinearCombination(b1, state.m, 1.0 - b1, g));
    }
    state.m = CompressedAllreduce(collective, candidates);
  } else {
    const DenseVector g = CompressedAllreduce(collective, gradients);
    state.m = LinearCombination(b1, state.m, 1.0 - b1, g);
  }
  const DenseVector step = ElementwiseDivide(
      state.m, ElementwiseSqrt(*state.v_frozen), cfg.eta_floor);
  const double lr = cfg.lr.At(state.t);
  for (size_t j = 0; j < step.size(); ++j) state.x[j] -= lr * step[j];
  ++state.t;
}

CollectiveState MakeCollective(const OptimizerConfig& cfg, size_t n_workers,
                               size_t dim) {
  return CollectiveState(n_workers, dim, cfg.compressor,
                         cfg.variant == Variant::kMomentum
                             ? ServerStage::kCompressWithErrorFeedback
                             : ServerStage::kExact);
}

RunResult Run(const OptimizerConfig& cfg, const Problem& problem, uint64_t seed,
              const RunOptions& options) {
  cfg.Validate();
  const size_t n = problem.n_workers();
  RunResult result;
  result.state = OptimizerState::Init(problem.InitialPoint(seed));
  OptimizerState& state = result.state;
  CollectiveState collective = MakeCollective(cfg, n, problem.dim());
  collective.set_execution_mode(options.execution);
  const uint64_t warmup_step_bits =
      UncompressedAllreduceBits(collective.layout(), n, 64);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  DenseVector precond;  // max(sqrt(v_frozen), eta_floor)

  result.trajectory.reserve(cfg.t_total);
  uint64_t bits_cum = 0;
  std::vector<DenseVector> grads(n);
  for (uint64_t t = 0; t < cfg.t_total; ++t) {
    const auto start = std::chrono::steady_clock::now();
    MetricsRecord rec;
    rec.t = t;
    rec.phase = state.phase;

    double sampled_loss = 0.0;
    for (size_t i = 0; i < n; ++i) {
      RngStream rng(seed, StreamTag::kGradientSample, i, t);
      GradientSample s = problem.SampleGradient(i, state.x, rng);
      sampled_loss += s.loss / static_cast<double>(n);
      grads[i] = std::move(s.gradient);
    }
    rec.stoch_grad_norm = L2Norm(Mean(grads));

    if (options.diagnostics) {
      auto [full_grad, loss] = problem.FullGradientAndLoss(state.x);
      rec.loss = loss;
      rec.grad_norm_sq = SquaredNorm(full_grad);
      if (state.v_frozen) {
        double acc = 0.0;
        for (size_t j = 0; j < full_grad.size(); ++j) {
          acc += full_grad[j] * full_grad[j] / precond[j];
        }
        rec.grad_norm_sq_v = acc;
      } else {
        rec.grad_norm_sq_v = nan;
      }
    } else {
      rec.loss = sampled_loss;
      rec.grad_norm_sq = nan;
      rec.grad_norm_sq_v = nan;
    }
    if (!std::isfinite(rec.loss)) {
      result.diverged_at = t;
      result.trajectory.push_back(rec);
      return result;
    }

    if (state.phase == Phase::kWarmup) {
      AdamWarmupStep(cfg, state, grads);
      rec.bits_step = warmup_step_bits;
      result.warmup_bits += warmup_step_bits;
      if (state.v_frozen) {
        precond = ElementwiseSqrt(*state.v_frozen);
        for (double& p : precond) p = std::max(p, cfg.eta_floor);
      }
    } else {
      SqueezeStep(cfg, state, collective, grads);
      rec.bits_step = BitsForStep(collective);
      result.squeeze_bits += rec.bits_step;
    }
    bits_cum += rec.bits_step;
    rec.bits_cum = bits_cum;

    if (options.diagnostics) {
      for (size_t i = 0; i < n; ++i) {
        rec.eps_worker = std::max(rec.eps_worker, collective.WorkerErrorMagnitude(i));
      }
      rec.eps_server = collective.ServerErrorMagnitude();
      result.max_eps_worker = std::max(result.max_eps_worker, rec.eps_worker);
      result.max_eps_server = std::max(result.max_eps_server, rec.eps_server);
    }
    if (options.record_wall_time) {
      rec.wall_ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - start)
                        .count();
    }
    result.trajectory.push_back(rec);
    if (options.observer) options.observer(rec, state, collective);
  }

  auto [g, loss] = problem.FullGradientAndLoss(state.x);
  result.final_loss = loss;
  result.final_grad_norm_sq = SquaredNorm(g);
  if (!std::isfinite(loss)) result.diverged_at = cfg.t_total;
  return result;
}

}  // namespace apmsqueeze
