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

#include "apmsqueeze/verify.h"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "apmsqueeze/collective.h"
#include "apmsqueeze/errors.h"
#include "apmsqueeze/rng.h"

namespace apmsqueeze::verify {

namespace {

DenseVector RandomVector(RngStream& rng, size_t n, double scale = 1.0) {
  DenseVector v(n);
  for (double& x : v) x = scale * rng.NextGaussian();
  return v;
}

double MaxAbs(const DenseVector& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

bool Report::passed() const {
  return std::all_of(checks.begin(), checks.end(),
                     [](const Check& c) { return c.passed; });
}

const Check* Report::first_failure() const {
  for (const Check& c : checks) {
    if (!c.passed) return &c;
  }
  return nullptr;
}

void Report::Add(std::string name, double observed, double lower,
                 double upper) {
  const bool ok = observed >= lower && observed <= upper;
  checks.push_back({std::move(name), observed, lower, upper, ok});
}

void Report::Print(std::ostream& out) const {
  for (const Check& c : checks) {
    fmt::print(out, "[{}] {}: {} observed={:.6g} bound=[{:.6g}, {:.6g}]\n",
               c.passed ? "PASS" : "FAIL", suite, c.name, c.observed, c.lower,
               c.upper);
  }
}

std::string_view ToString(Suite s) {
  switch (s) {
    case Suite::kUpdatingForm:
      return "updating_form";
    case Suite::kIdentityEquiv:
      return "identity_equiv";
    case Suite::kCodecContracts:
      return "codec_contracts";
    case Suite::kVarianceScaling:
      return "variance_scaling";
    case Suite::kFiniteDiff:
      return "finite_diff";
  }
  return "unknown";
}

Suite ParseSuite(std::string_view name) {
  for (auto s : {Suite::kUpdatingForm, Suite::kIdentityEquiv,
                 Suite::kCodecContracts, Suite::kVarianceScaling,
                 Suite::kFiniteDiff}) {
    if (ToString(s) == name) return s;
  }
  throw ConfigError("unknown verify suite '" + std::string(name) + "'");
}

Report RunSuite(Suite s) {
  switch (s) {
    case Suite::kUpdatingForm:
      return VerifyUpdatingForm();
    case Suite::kIdentityEquiv:
      return VerifyIdentityEquivalence();
    case Suite::kCodecContracts:
      return VerifyCodecContracts();
    case Suite::kVarianceScaling:
      return VerifyVarianceScaling();
    case Suite::kFiniteDiff:
      return VerifyFiniteDifferences();
  }
  throw ConfigError("unknown suite");
}

Report VerifyUpdatingForm(const UpdatingFormParams& p) {
  Report report{"updating_form", {}};
  for (const CompressorSpec& spec : p.compressors) {
    for (size_t n : p.workers) {
      for (size_t d : p.dims) {
        OptimizerConfig cfg;
        cfg.beta1 = p.beta1;
        cfg.lr.base = 1e-3;
        cfg.t_warmup = 1;
        cfg.t_total = p.steps + 1;
        cfg.compressor = spec;

        RngStream init(p.seed, StreamTag::kTest, n, d, 0);
        OptimizerState state = OptimizerState::Init(RandomVector(init, d));
        std::vector<DenseVector> grads(n);
        for (auto& g : grads) g = RandomVector(init, d);
        AdamWarmupStep(cfg, state, grads);

        CollectiveState collective = MakeCollective(cfg, n, d);
        DenseVector residual_prev = collective.GlobalResidual();
        double worst = 0.0;
        for (uint64_t t = 0; t < p.steps; ++t) {
          RngStream rng(p.seed, StreamTag::kTest, n, d, t + 1);
          for (auto& g : grads) g = RandomVector(rng, d);
          const DenseVector m_prev = state.m;
          SqueezeStep(cfg, state, collective, grads);
          const DenseVector residual = collective.GlobalResidual();
          const DenseVector expected =
              LinearCombination(p.beta1, m_prev, 1.0 - p.beta1, Mean(grads)) +
              residual_prev - residual;
          worst = std::max(worst, MaxAbsDiff(state.m, expected));
          if (!state.m.IsFinite()) worst = INFINITY;
          residual_prev = residual;
        }
        report.Add(fmt::format("{} n={} d={} steps={}", spec.Describe(), n, d,
                               p.steps),
                   worst, 0.0, p.tolerance);
      }
    }
  }
  return report;
}

std::vector<DenseVector> ReferencePreconditionedMomentum(
    const OptimizerConfig& cfg, const Problem& problem, uint64_t seed) {
  const size_t n = problem.n_workers();
  const size_t d = problem.dim();
  std::vector<double> x(problem.InitialPoint(seed).values());
  std::vector<double> m(d, 0.0), v(d, 0.0), v_frozen;
  std::vector<DenseVector> xs;
  xs.reserve(cfg.t_total);
  for (uint64_t t = 0; t < cfg.t_total; ++t) {
    std::vector<double> gbar(d, 0.0);
    const DenseVector x_vec(x);
    for (size_t i = 0; i < n; ++i) {
      RngStream rng(seed, StreamTag::kGradientSample, i, t);
      const DenseVector g = problem.SampleGradient(i, x_vec, rng).gradient;
      for (size_t j = 0; j < d; ++j) gbar[j] += g[j];
    }
    for (double& g : gbar) g /= static_cast<double>(n);
    const double lr = cfg.lr.At(t);
    if (t < cfg.t_warmup) {
      const double step = static_cast<double>(t + 1);
      const double c1 = 1.0 - std::pow(cfg.beta1, step);
      const double c2 = 1.0 - std::pow(cfg.beta2, step);
      for (size_t j = 0; j < d; ++j) {
        m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gbar[j];
        v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gbar[j] * gbar[j];
        x[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg.eta);
      }
      if (t + 1 == cfg.t_warmup) {
        v_frozen = v;
        if (cfg.freeze_bias_corrected) {
          for (double& vf : v_frozen) vf /= c2;
        }
      }
    } else {
      for (size_t j = 0; j < d; ++j) {
        m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gbar[j];
        x[j] -= lr * m[j] / std::max(std::sqrt(v_frozen[j]), cfg.eta_floor);
      }
    }
    xs.emplace_back(x);
  }
  return xs;
}

Report VerifyIdentityEquivalence(uint64_t total_steps) {
  Report report{"identity_equiv", {}};

  // Allreduce against the exact mean.
  double worst_mean = 0.0;
  for (size_t n : {1, 2, 3, 4, 8}) {
    for (size_t d : {1, 7, 64, 1000}) {
      CollectiveState c(n, d, CompressorSpec::Identity());
      for (uint64_t step = 0; step < 5; ++step) {
        RngStream rng(11, StreamTag::kTest, n, d, step);
        std::vector<DenseVector> inputs(n);
        for (auto& in : inputs) in = RandomVector(rng, d, 3.0);
        worst_mean = std::max(
            worst_mean, MaxAbsDiff(CompressedAllreduce(c, inputs), Mean(inputs)));
      }
    }
  }
  report.Add("allreduce == exact mean", worst_mean, 0.0, 1e-14);

  // Full run against the uncompressed reference.
  const Problem problem(ProblemKind::kLogistic,
                        MakeSyntheticDataset({ProblemKind::kLogistic, 2000, 50,
                                              0.05, 5}),
                        4, {8, 16, 0.0});
  OptimizerConfig cfg;
  cfg.lr.base = 0.01;
  cfg.t_warmup = 100;
  cfg.t_total = total_steps;
  cfg.compressor = CompressorSpec::Identity();
  const auto reference = ReferencePreconditionedMomentum(cfg, problem, 3);
  double worst_x = 0.0;
  double worst_residual = 0.0;
  RunOptions opts;
  opts.diagnostics = false;
  opts.observer = [&](const MetricsRecord& rec, const OptimizerState& s,
                      const CollectiveState& c) {
    worst_x = std::max(worst_x, MaxAbsDiff(s.x, reference[rec.t]));
    for (size_t i = 0; i < c.n_workers(); ++i) {
      worst_residual = std::max(worst_residual, MaxAbs(c.WorkerResidual(i)));
    }
    worst_residual = std::max(worst_residual, MaxAbs(c.ServerResidual()));
  };
  Run(cfg, problem, 3, opts);
  report.Add(fmt::format("run == uncompressed reference over {} steps",
                         total_steps),
             worst_x, 0.0, 1e-12);
  report.Add("residuals exactly zero", worst_residual, 0.0, 0.0);
  return report;
}

Report VerifyCodecContracts() {
  Report report{"codec_contracts", {}};
  const std::vector<CompressorSpec> specs = {
      CompressorSpec::Identity(), CompressorSpec::OneBit(),
      CompressorSpec::TopK(10.0), CompressorSpec::TopK(50.0),
      CompressorSpec::StochasticQuant(4, 3), CompressorSpec::StochasticQuant(16, 3)};

  for (const CompressorSpec& spec : specs) {
    double worst_ef = 0.0;
    double worst_size = 0.0;
    double worst_roundtrip = 0.0;
    for (size_t len : {0, 1, 5, 64, 333}) {
      ErrorState state(len);
      for (uint64_t step = 0; step < 20; ++step) {
        RngStream rng(5, StreamTag::kTest, len, step);
        const DenseVector input = RandomVector(rng, len);
        const DenseVector before = state.residual();
        const CompressedChunk c = CompressWithErrorFeedback(spec, input, state, rng);
        const DenseVector lhs = Decompress(c) + state.residual();
        worst_ef = std::max(worst_ef, MaxAbsDiff(lhs, input + before));

        const auto bytes = Serialize(c);
        const double expect_bytes =
            static_cast<double>(FramingBytes(spec.kind) + (c.wire_bits + 7) / 8);
        worst_size = std::max(
            worst_size, std::abs(static_cast<double>(bytes.size()) - expect_bytes));
        const CompressedChunk back = Deserialize(bytes);
        worst_roundtrip =
            std::max(worst_roundtrip, MaxAbsDiff(Decompress(back), Decompress(c)));
      }
    }
    report.Add(spec.Describe() + " error-feedback identity", worst_ef, 0.0, 1e-14);
    report.Add(spec.Describe() + " serialized size == framing + wire bits",
               worst_size, 0.0, 0.0);
    report.Add(spec.Describe() + " serialization round-trip", worst_roundtrip,
               0.0, 0.0);
  }

  // TopK keeps exactly ceil(k% len) entries, all at least as large as any
  // dropped entry.
  {
    double count_errors = 0.0, order_errors = 0.0;
    for (double k : {1.0, 10.0, 33.0, 50.0, 100.0}) {
      for (size_t len : {1, 7, 100, 1000}) {
        RngStream rng(8, StreamTag::kTest, len, static_cast<uint64_t>(k));
        const DenseVector in = RandomVector(rng, len);
        const DenseVector out = Decompress(Compress(CompressorSpec::TopK(k), in, rng));
        size_t nonzero = 0;
        double min_kept = INFINITY, max_dropped = 0.0;
        for (size_t i = 0; i < len; ++i) {
          if (out[i] != 0.0) {
            ++nonzero;
            min_kept = std::min(min_kept, std::abs(in[i]));
          } else {
            max_dropped = std::max(max_dropped, std::abs(in[i]));
          }
        }
        if (nonzero != TopKCount(k, len)) count_errors += 1.0;
        if (nonzero < len && min_kept < max_dropped) order_errors += 1.0;
      }
    }
    report.Add("topk nonzero count == ceil(k% len)", count_errors, 0.0, 0.0);
    report.Add("topk keeps the largest magnitudes", order_errors, 0.0, 0.0);
  }

  // 1-bit preserves every nonzero sign.
  {
    double wrong = 0.0;
    RngStream rng(9, StreamTag::kTest);
    for (int trial = 0; trial < 50; ++trial) {
      const DenseVector in = RandomVector(rng, 37);
      const DenseVector out = Decompress(Compress(CompressorSpec::OneBit(), in, rng));
      for (size_t i = 0; i < in.size(); ++i) {
        if (in[i] != 0.0 && (in[i] > 0.0) != (out[i] > 0.0)) wrong += 1.0;
      }
    }
    report.Add("onebit sign agreement (mismatches)", wrong, 0.0, 0.0);
  }

  // Stochastic quantization is unbiased: per-element mean within 3 SE.
  {
    const DenseVector x{0.7, -0.35, 0.05, -1.0, 0.0, 0.62};
    const size_t draws = 100000;
    std::vector<double> sum(x.size(), 0.0), sum_sq(x.size(), 0.0);
    const CompressorSpec spec = CompressorSpec::StochasticQuant(4, 17);
    for (size_t d = 0; d < draws; ++d) {
      RngStream rng(17, StreamTag::kTest, d);
      const DenseVector out = Decompress(Compress(spec, x, rng));
      for (size_t i = 0; i < x.size(); ++i) {
        sum[i] += out[i];
        sum_sq[i] += out[i] * out[i];
      }
    }
    double worst_z = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
      const double mean = sum[i] / draws;
      const double var = std::max(sum_sq[i] / draws - mean * mean, 0.0);
      const double se = std::sqrt(var / draws);
      const double err = std::abs(mean - x[i]);
      worst_z = std::max(worst_z, se > 0.0 ? err / se : (err > 1e-12 ? INFINITY : 0.0));
    }
    report.Add("quant unbiased (max |mean - x| / SE)", worst_z, 0.0, 3.0);
  }

  // Volume at d = 1e5 over 8 workers against a float32 identity exchange.
  {
    CollectiveState c(8, 100000, CompressorSpec::OneBit());
    RngStream rng(21, StreamTag::kTest);
    std::vector<DenseVector> inputs(8);
    for (auto& in : inputs) in = RandomVector(rng, 100000);
    CompressedAllreduce(c, inputs);
    const double ratio =
        static_cast<double>(BitsForStep(c)) /
        static_cast<double>(UncompressedAllreduceBits(c.layout(), 8, 32));
    report.Add("onebit bits / float32 identity bits (d=1e5, n=8)", ratio, 0.0, 0.035);
  }
  return report;
}

Report VerifyVarianceScaling(const VarianceScalingParams& p) {
  Report report{"variance_scaling", {}};
  const Dataset data =
      MakeSyntheticDataset({ProblemKind::kLogistic, 4000, 20, 0.05, 13});
  const ProblemOptions opts{4, 16, 0.0};
  const Problem single(ProblemKind::kLogistic, data, 1, opts);
  RngStream rng(p.seed, StreamTag::kTest);
  const DenseVector x = RandomVector(rng, single.dim(), 0.3);
  const double base = MeasureAveragedVariance(single, x, p.draws, p.seed);
  for (size_t n : p.workers) {
    const Problem multi(ProblemKind::kLogistic, data, n, opts);
    const double var = MeasureAveragedVariance(multi, x, p.draws, p.seed + n);
    const double inv_n = 1.0 / static_cast<double>(n);
    report.Add(fmt::format("Var[avg of {} workers] / Var[single]", n),
               var / base, (1.0 - p.band) * inv_n, (1.0 + p.band) * inv_n);
  }
  return report;
}

Report VerifyFiniteDifferences() {
  Report report{"finite_diff", {}};
  const double h = 1e-5;
  for (ProblemKind kind : {ProblemKind::kLeastSquares, ProblemKind::kLogistic,
                           ProblemKind::kTinyMLP}) {
    const Problem problem(kind, MakeSyntheticDataset({kind, 60, 6, 0.1, 4}), 3,
                          {5, 4, 0.01});
    RngStream rng(31, StreamTag::kTest, static_cast<uint64_t>(kind));
    const DenseVector x = RandomVector(rng, problem.dim(), 0.5);
    const auto [grad, loss] = problem.FullGradientAndLoss(x);
    double worst = 0.0;
    for (size_t j = 0; j < problem.dim(); ++j) {
      DenseVector xp = x, xm = x;
      xp[j] += h;
      xm[j] -= h;
      const double fd = (problem.FullGradientAndLoss(xp).second -
                         problem.FullGradientAndLoss(xm).second) /
                        (2.0 * h);
      worst = std::max(worst, std::abs(fd - grad[j]) / std::max(1.0, std::abs(grad[j])));
    }
    report.Add(fmt::format("{} central difference (relative)", ToString(kind)),
               worst, 0.0, 1e-5);

    // Full gradient equals the mean of per-sample gradients.
    DenseVector mean(problem.dim());
    for (size_t i = 0; i < problem.data().n_samples; ++i) {
      mean += problem.SampleLossGradient(i, x).first;
    }
    mean *= 1.0 / static_cast<double>(problem.data().n_samples);
    report.Add(fmt::format("{} full gradient == mean per-sample", ToString(kind)),
               MaxAbsDiff(mean, grad), 0.0, 1e-12);
  }
  return report;
}

}  // namespace apmsqueeze::verify
