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

#include <gtest/gtest.h>

#include <cmath>

#include "apmsqueeze/errors.h"
#include "apmsqueeze/verify.h"

namespace apmsqueeze {
namespace {

OptimizerConfig ScalarConfig() {
  OptimizerConfig cfg;
  cfg.lr.base = 0.1;
  cfg.beta1 = 0.9;
  cfg.beta2 = 0.999;
  cfg.eta = 0.0;
  cfg.t_warmup = 1;
  cfg.t_total = 10;
  return cfg;
}

OptimizerState SqueezeStateFrom(DenseVector x, DenseVector v_frozen) {
  OptimizerState s = OptimizerState::Init(std::move(x));
  s.v_frozen = std::move(v_frozen);
  s.phase = Phase::kSqueeze;
  return s;
}

TEST(AdamWarmupStep, ScalarQuadraticHandTrace) {
  // f(x) = x^2 / 2 at x = 1 has gradient 1.
  OptimizerConfig cfg = ScalarConfig();
  OptimizerState s = OptimizerState::Init({1.0});
  AdamWarmupStep(cfg, s, std::vector<DenseVector>{{1.0}});
  EXPECT_NEAR(s.m[0], 0.1, 1e-15);
  EXPECT_NEAR(s.v[0], 0.001, 1e-15);
  EXPECT_NEAR(s.x[0], 0.9, 1e-15);
  EXPECT_EQ(s.t, 1u);
  EXPECT_EQ(s.phase, Phase::kSqueeze);
  ASSERT_TRUE(s.v_frozen.has_value());
  EXPECT_EQ(*s.v_frozen, s.v);
}

TEST(AdamWarmupStep, ZeroGradientDecaysMoments) {
  OptimizerConfig cfg = ScalarConfig();
  cfg.t_warmup = 5;
  OptimizerState s = OptimizerState::Init({1.0});
  AdamWarmupStep(cfg, s, std::vector<DenseVector>{{1.0}});
  const double m1 = s.m[0], v1 = s.v[0], x1 = s.x[0];
  AdamWarmupStep(cfg, s, std::vector<DenseVector>{{0.0}, {0.0}});
  EXPECT_DOUBLE_EQ(s.m[0], 0.9 * m1);
  EXPECT_DOUBLE_EQ(s.v[0], 0.999 * v1);
  const double m_hat = s.m[0] / (1 - 0.81);
  const double v_hat = s.v[0] / (1 - 0.999 * 0.999);
  EXPECT_DOUBLE_EQ(s.x[0], x1 - 0.1 * m_hat / std::sqrt(v_hat));
  EXPECT_EQ(s.phase, Phase::kWarmup);
}

TEST(AdamWarmupStep, SingleWorkerMatchesPlainAdamBitwise) {
  OptimizerConfig cfg = ScalarConfig();
  cfg.eta = 1e-8;
  cfg.t_warmup = 50;
  cfg.t_total = 51;
  OptimizerState s = OptimizerState::Init({1.0, -2.0, 0.5});
  std::vector<double> x = {1.0, -2.0, 0.5}, m(3, 0.0), v(3, 0.0);
  for (int t = 1; t <= 50; ++t) {
    const DenseVector g{x[0] * 1.0, x[1] * 2.0, x[2] * 0.1};
    AdamWarmupStep(cfg, s, std::vector<DenseVector>{g});
    for (int j = 0; j < 3; ++j) {
      m[j] = 0.9 * m[j] + (1.0 - 0.9) * g[j];
      v[j] = 0.999 * v[j] + (1.0 - 0.999) * g[j] * g[j];
      const double mh = m[j] / (1.0 - std::pow(0.9, t));
      const double vh = v[j] / (1.0 - std::pow(0.999, t));
      x[j] -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
    }
    for (int j = 0; j < 3; ++j) ASSERT_EQ(s.x[j], x[j]) << "t=" << t;
  }
}

TEST(AdamWarmupStep, FreezesBiasCorrectedWhenAsked) {
  OptimizerConfig cfg = ScalarConfig();
  cfg.t_warmup = 2;
  cfg.freeze_bias_corrected = true;
  OptimizerState s = OptimizerState::Init({1.0});
  AdamWarmupStep(cfg, s, std::vector<DenseVector>{{1.0}});
  AdamWarmupStep(cfg, s, std::vector<DenseVector>{{1.0}});
  ASSERT_TRUE(s.v_frozen);
  EXPECT_DOUBLE_EQ((*s.v_frozen)[0], s.v[0] / (1 - 0.999 * 0.999));
}

TEST(AdamWarmupStep, Errors) {
  OptimizerConfig cfg = ScalarConfig();
  OptimizerState s = SqueezeStateFrom({1.0}, {1.0});
  EXPECT_THROW(AdamWarmupStep(cfg, s, std::vector<DenseVector>{{1.0}}), StateError);
  OptimizerState w = OptimizerState::Init({1.0});
  EXPECT_THROW(AdamWarmupStep(cfg, w, std::vector<DenseVector>{{1.0, 2.0}}),
               DimensionError);
}

TEST(SqueezeStep, IdentityMomentumRecursion) {
  OptimizerConfig cfg = ScalarConfig();
  cfg.compressor = CompressorSpec::Identity();
  OptimizerState s = SqueezeStateFrom({0.0}, {1.0});
  CollectiveState c = MakeCollective(cfg, 2, 1);
  const std::vector<DenseVector> g = {{1.0}, {1.0}};
  SqueezeStep(cfg, s, c, g);
  EXPECT_NEAR(s.m[0], 0.1, 1e-15);
  SqueezeStep(cfg, s, c, g);
  EXPECT_NEAR(s.m[0], 0.19, 1e-15);
}

TEST(SqueezeStep, SingleWorkerIdentityIsPreconditionedMomentumSgd) {
  OptimizerConfig cfg = ScalarConfig();
  cfg.compressor = CompressorSpec::Identity();
  OptimizerState s = SqueezeStateFrom({1.0, 1.0}, {4.0, 0.25});
  CollectiveState c = MakeCollective(cfg, 1, 2);
  double m0 = 0, m1 = 0, x0 = 1, x1 = 1;
  for (int t = 0; t < 20; ++t) {
    const DenseVector g{x0, 3 * x1};
    SqueezeStep(cfg, s, c, std::vector<DenseVector>{g});
    m0 = 0.9 * m0 + 0.1 * g[0];
    m1 = 0.9 * m1 + 0.1 * g[1];
    x0 -= 0.1 / 2.0 * m0;
    x1 -= 0.1 / 0.5 * m1;
    EXPECT_NEAR(s.x[0], x0, 1e-15);
    EXPECT_NEAR(s.x[1], x1, 1e-15);
  }
}

TEST(SqueezeStep, OneBitStepFollowsDecodedMomentum) {
  OptimizerConfig cfg = ScalarConfig();
  cfg.compressor = CompressorSpec::OneBit();
  const DenseVector vf{4.0, 1.0, 0.25, 9.0};
  OptimizerState s = SqueezeStateFrom({0, 0, 0, 0}, vf);
  CollectiveState c = MakeCollective(cfg, 2, 4);
  SqueezeStep(cfg, s, c, std::vector<DenseVector>{{1, -2, 3, -4}, {0.5, -1, 2, 1}});
  for (size_t j = 0; j < 4; ++j) {
    EXPECT_NEAR(-s.x[j] * std::sqrt(vf[j]) / cfg.lr.base, s.m[j], 1e-15);
  }
  // Each chunk of the decoded momentum is +-scale.
  EXPECT_DOUBLE_EQ(std::abs(s.m[0]), std::abs(s.m[1]));
  EXPECT_DOUBLE_EQ(std::abs(s.m[2]), std::abs(s.m[3]));
}

TEST(SqueezeStep, ZeroVarianceCoordinateUsesFloor) {
  OptimizerConfig cfg = ScalarConfig();
  cfg.eta_floor = 1e-2;
  OptimizerState s = SqueezeStateFrom({0.0}, {0.0});
  CollectiveState c = MakeCollective(cfg, 1, 1);
  SqueezeStep(cfg, s, c, std::vector<DenseVector>{{1.0}});
  EXPECT_NEAR(s.x[0], -0.1 * 0.1 / 1e-2, 1e-15);
}

TEST(SqueezeStep, Errors) {
  OptimizerConfig cfg = ScalarConfig();
  OptimizerState w = OptimizerState::Init({1.0});
  CollectiveState c = MakeCollective(cfg, 1, 1);
  EXPECT_THROW(SqueezeStep(cfg, w, c, std::vector<DenseVector>{{1.0}}), StateError);
  OptimizerState s = SqueezeStateFrom({1.0}, {1.0});
  EXPECT_THROW(SqueezeStep(cfg, s, c, std::vector<DenseVector>{{1.0, 2.0}}),
               DimensionError);
  EXPECT_THROW(SqueezeStep(cfg, s, c, std::vector<DenseVector>{{1.0}, {1.0}}),
               DimensionError);
}

TEST(SqueezeStep, GradientVariantAveragesCompressedGradients) {
  OptimizerConfig cfg = ScalarConfig();
  cfg.compressor = CompressorSpec::TopK(50);
  cfg.variant = Variant::kGradient;
  OptimizerState s = SqueezeStateFrom({0, 0}, {1, 1});
  CollectiveState c = MakeCollective(cfg, 1, 2);
  EXPECT_EQ(c.server_stage(), ServerStage::kExact);
  SqueezeStep(cfg, s, c, std::vector<DenseVector>{{1.0, 3.0}});
  EXPECT_NEAR(s.m[0], 0.0, 1e-15);
  EXPECT_NEAR(s.m[1], 0.3, 1e-15);
  EXPECT_EQ(c.WorkerResidual(0), (DenseVector{1.0, 0.0}));
}

TEST(OptimizerConfig, Validation) {
  OptimizerConfig cfg;
  EXPECT_NO_THROW(cfg.Validate());
  cfg.t_total = cfg.t_warmup;
  EXPECT_THROW(cfg.Validate(), ConfigError);
  cfg = {};
  cfg.beta1 = 1.0;
  EXPECT_THROW(cfg.Validate(), ConfigError);
  cfg = {};
  cfg.t_warmup = 0;
  EXPECT_THROW(cfg.Validate(), ConfigError);
  cfg = {};
  cfg.compressor = CompressorSpec::TopK(0);
  EXPECT_THROW(cfg.Validate(), ConfigError);
}

TEST(LearningRate, StepDecay) {
  LearningRate lr{1.0, 0.5, 10};
  EXPECT_EQ(lr.At(0), 1.0);
  EXPECT_EQ(lr.At(9), 1.0);
  EXPECT_EQ(lr.At(10), 0.5);
  EXPECT_EQ(lr.At(25), 0.25);
  EXPECT_EQ(LearningRate{0.3}.At(1000), 0.3);
}

Problem SmallLogistic(size_t n_workers) {
  return Problem(ProblemKind::kLogistic,
                 MakeSyntheticDataset({ProblemKind::kLogistic, 400, 12, 0.05, 3}),
                 n_workers, {8, 16, 0.0});
}

TEST(Run, BoundaryCounting) {
  OptimizerConfig cfg;
  cfg.t_warmup = 1;
  cfg.t_total = 2;
  cfg.compressor = CompressorSpec::OneBit();
  const RunResult r = apmsqueeze::Run(cfg, SmallLogistic(2), 1);
  ASSERT_EQ(r.trajectory.size(), 2u);
  EXPECT_EQ(r.trajectory[0].phase, Phase::kWarmup);
  EXPECT_EQ(r.trajectory[1].phase, Phase::kSqueeze);
  EXPECT_EQ(r.state.t, 2u);
  EXPECT_TRUE(std::isnan(r.trajectory[0].grad_norm_sq_v));
  EXPECT_FALSE(std::isnan(r.trajectory[1].grad_norm_sq_v));
}

TEST(Run, ZeroBetaIdentityUsesMeanGradient) {
  OptimizerConfig cfg;
  cfg.beta1 = 0.0;
  cfg.t_warmup = 3;
  cfg.t_total = 10;
  const Problem p = SmallLogistic(3);
  // With beta1 = 0 the momentum equals the averaged gradient of the step.
  OptimizerState state = OptimizerState::Init(p.InitialPoint(1));
  CollectiveState c = MakeCollective(cfg, 3, p.dim());
  for (uint64_t t = 0; t < cfg.t_total; ++t) {
    std::vector<DenseVector> g;
    for (size_t i = 0; i < 3; ++i) {
      RngStream rng(1, StreamTag::kGradientSample, i, t);
      g.push_back(p.SampleGradient(i, state.x, rng).gradient);
    }
    if (state.phase == Phase::kWarmup) {
      AdamWarmupStep(cfg, state, g);
    } else {
      SqueezeStep(cfg, state, c, g);
      EXPECT_LE(MaxAbsDiff(state.m, Mean(g)), 1e-15);
    }
  }
  EXPECT_EQ(apmsqueeze::Run(cfg, p, 1).state.x, state.x);
}

TEST(Run, VarianceFrozenThroughoutSqueeze) {
  OptimizerConfig cfg;
  cfg.lr.base = 0.01;
  cfg.t_warmup = 20;
  cfg.t_total = 200;
  cfg.compressor = CompressorSpec::OneBit();
  std::optional<DenseVector> frozen, v_at_freeze;
  int squeeze_steps = 0;
  RunOptions opts;
  opts.observer = [&](const MetricsRecord& rec, const OptimizerState& s,
                      const CollectiveState&) {
    if (rec.phase == Phase::kWarmup) {
      if (s.v_frozen) {
        frozen = *s.v_frozen;
        v_at_freeze = s.v;
      }
      return;
    }
    ++squeeze_steps;
    ASSERT_TRUE(frozen && s.v_frozen);
    EXPECT_EQ(*s.v_frozen, *frozen);
    EXPECT_EQ(s.v, *v_at_freeze);
  };
  apmsqueeze::Run(cfg, SmallLogistic(4), 2, opts);
  EXPECT_EQ(squeeze_steps, 180);
}

TEST(Run, DiagnosticsDoNotChangeTrajectory) {
  OptimizerConfig cfg;
  cfg.lr.base = 0.01;
  cfg.t_warmup = 10;
  cfg.t_total = 100;
  cfg.compressor = CompressorSpec::StochasticQuant(4, 9);
  const Problem p = SmallLogistic(4);
  RunOptions with, without;
  without.diagnostics = false;
  EXPECT_EQ(apmsqueeze::Run(cfg, p, 5, with).state.x, apmsqueeze::Run(cfg, p, 5, without).state.x);
}

TEST(Run, ThreadedMatchesSequential) {
  OptimizerConfig cfg;
  cfg.lr.base = 0.01;
  cfg.t_warmup = 10;
  cfg.t_total = 60;
  cfg.compressor = CompressorSpec::StochasticQuant(4, 9);
  const Problem p = SmallLogistic(4);
  RunOptions threaded;
  threaded.execution = ExecutionMode::kThreaded;
  EXPECT_EQ(apmsqueeze::Run(cfg, p, 5).state.x, apmsqueeze::Run(cfg, p, 5, threaded).state.x);
}

TEST(Run, IdentityEqualsUncompressedReference) {
  OptimizerConfig cfg;
  cfg.lr.base = 0.01;
  cfg.t_warmup = 30;
  cfg.t_total = 300;
  const Problem p = SmallLogistic(4);
  const auto ref = verify::ReferencePreconditionedMomentum(cfg, p, 8);
  const RunResult r = apmsqueeze::Run(cfg, p, 8);
  EXPECT_LE(MaxAbsDiff(r.state.x, ref.back()), 1e-12);
}

TEST(Run, CumulativeBitsAndSinglePhaseTransition) {
  OptimizerConfig cfg;
  cfg.t_warmup = 5;
  cfg.t_total = 40;
  cfg.compressor = CompressorSpec::TopK(10);
  const RunResult r = apmsqueeze::Run(cfg, SmallLogistic(4), 3);
  int transitions = 0;
  for (size_t t = 1; t < r.trajectory.size(); ++t) {
    EXPECT_GE(r.trajectory[t].bits_cum, r.trajectory[t - 1].bits_cum);
    transitions += r.trajectory[t].phase != r.trajectory[t - 1].phase;
  }
  EXPECT_EQ(transitions, 1);
  EXPECT_EQ(r.trajectory.back().bits_cum, r.warmup_bits + r.squeeze_bits);
}

// Strongly convex least squares driven with exact shard gradients.
std::vector<double> ExactGradientLosses(const CompressorSpec& spec, double lr,
                                        uint64_t t_total) {
  const Problem p(ProblemKind::kLeastSquares,
                  MakeSyntheticDataset({ProblemKind::kLeastSquares, 200, 8, 0.1, 6}),
                  2, {1, 16, 0.0});
  OptimizerConfig cfg;
  cfg.lr.base = lr;
  cfg.t_warmup = 20;
  cfg.t_total = t_total;
  cfg.compressor = spec;
  OptimizerState s = OptimizerState::Init(p.InitialPoint(0));
  CollectiveState c = MakeCollective(cfg, 2, p.dim());
  std::vector<double> losses;
  for (uint64_t t = 0; t < cfg.t_total; ++t) {
    std::vector<DenseVector> g = {p.ShardGradientAndLoss(0, s.x).first,
                                  p.ShardGradientAndLoss(1, s.x).first};
    if (s.phase == Phase::kWarmup) {
      AdamWarmupStep(cfg, s, g);
    } else {
      SqueezeStep(cfg, s, c, g);
    }
    losses.push_back(p.FullGradientAndLoss(s.x).second - *p.known_optimum());
  }
  return losses;
}

TEST(Run, EventualDescentIdentity) {
  const auto gap = ExactGradientLosses(CompressorSpec::Identity(), 1e-3, 3000);
  for (size_t t = 501; t < gap.size(); ++t) {
    // Slack covers rounding in the loss evaluation once the gap is tiny.
    ASSERT_LE(gap[t], gap[t - 1] + 1e-15) << "step " << t;
  }
  EXPECT_LT(gap.back(), 1e-3 * gap[20]);
}

TEST(Run, EventualDescentOneBit) {
  // Sign compression makes single steps oscillate, so descent is checked on
  // means over consecutive 100-step blocks.
  const auto gap = ExactGradientLosses(CompressorSpec::OneBit(), 1e-4, 3020);
  double prev = INFINITY;
  for (size_t start = 20; start + 100 <= gap.size(); start += 100) {
    double block = 0.0;
    for (size_t t = start; t < start + 100; ++t) block += gap[t];
    ASSERT_LT(block, prev) << "block starting at " << start;
    prev = block;
  }
  EXPECT_LT(gap.back(), 0.1 * gap[20]);
}

}  // namespace
}  // namespace apmsqueeze
