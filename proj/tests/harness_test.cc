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

#include "apmsqueeze/harness.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "apmsqueeze/errors.h"

namespace apmsqueeze::harness {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path FreshDir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("apmsqueeze_harness_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string Slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig SmallConfig() {
  return RunConfig::FromJson(json{{"problem", "logistic"},
                                  {"n_samples", 400},
                                  {"n_features", 16},
                                  {"n_workers", 4},
                                  {"batch_size", 8},
                                  {"compressor", "onebit"},
                                  {"lr", 0.01},
                                  {"t_warmup", 10},
                                  {"t_total", 60},
                                  {"seed", 3}});
}

TEST(RunConfig, ParsesKeysAndDefaults) {
  const RunConfig c = SmallConfig();
  EXPECT_EQ(c.problem, ProblemKind::kLogistic);
  EXPECT_EQ(c.n_features, 16u);
  EXPECT_EQ(c.optimizer.compressor.kind, CompressorKind::kOneBit);
  EXPECT_EQ(c.optimizer.compressor.seed, 3u);
  EXPECT_EQ(c.optimizer.lr.base, 0.01);
  EXPECT_EQ(c.optimizer.beta1, 0.9);
  EXPECT_EQ(c.optimizer.eta_floor, 1e-8);
  EXPECT_FALSE(c.optimizer.freeze_bias_corrected);
  EXPECT_EQ(c.eval_every, 1u);
}

TEST(RunConfig, JsonRoundTrip) {
  const RunConfig c = SmallConfig();
  EXPECT_EQ(RunConfig::FromJson(c.ToJson()).ToJson(), c.ToJson());
}

TEST(RunConfig, RejectsBadInput) {
  EXPECT_THROW(RunConfig::FromJson(json{{"learning_rate", 0.1}}), ConfigError);
  EXPECT_THROW(RunConfig::FromJson(json{{"t_warmup", 10}, {"t_total", 10}}),
               ConfigError);
  EXPECT_THROW(RunConfig::FromJson(json{{"compressor", "zstd"}}), ConfigError);
  EXPECT_THROW(RunConfig::FromJson(json{{"lr", "fast"}}), ConfigError);
  EXPECT_THROW(RunConfig::FromJson(json{{"n_workers", 0}}), ConfigError);
  EXPECT_THROW(RunConfig::FromJson(json{{"variant", "adam"}}), ConfigError);
  EXPECT_THROW(RunConfig::FromJson(json::array()), ConfigError);
  EXPECT_THROW(LoadRunConfig("/nonexistent/config.json"), ConfigError);
}

TEST(Metrics, CsvSchema) {
  const ExperimentResult r = RunExperiment(SmallConfig());
  std::ostringstream out;
  WriteMetricsCsv(out, r.run.trajectory, 1);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, kMetricsCsvHeader);
  size_t rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 9) << line;
  }
  EXPECT_EQ(rows, 60u);
}

TEST(Metrics, EvalEveryKeepsLastRow) {
  const ExperimentResult r = RunExperiment(SmallConfig());
  std::ostringstream out;
  WriteMetricsCsv(out, r.run.trajectory, 25);
  const std::string s = out.str();
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 1 + 3 + 1);  // 0, 25, 50, 59
}

TEST(Summary, BitAccounting) {
  RunConfig c = SmallConfig();
  const ExperimentResult r = RunExperiment(c);
  const json& s = r.summary;
  EXPECT_EQ(s["bits_total"].get<uint64_t>(),
            s["bits_warmup"].get<uint64_t>() + s["bits_squeeze"].get<uint64_t>());
  EXPECT_EQ(s["baseline_bits_squeeze_float64"].get<uint64_t>(),
            2 * s["baseline_bits_squeeze_float32"].get<uint64_t>());
  // d = 16 over 4 workers: every chunk message is 4 sign bits plus a 64-bit
  // scale, sent 2 * 4 * 3 times per step, against 2 * 3 * 16 * 32 bits.
  EXPECT_EQ(s["bits_squeeze"].get<uint64_t>(), 50u * 2 * 4 * 3 * 68);
  EXPECT_DOUBLE_EQ(s["bits_ratio_float32"].get<double>(), 1632.0 / 3072.0);
  EXPECT_TRUE(s["diverged_at"].is_null());
  EXPECT_GT(s["v_min"].get<double>(), 0.0);

  c.optimizer.compressor = CompressorSpec::TopK(10);
  c.optimizer.compressor.seed = c.seed;
  EXPECT_TRUE(RunExperiment(c).summary.contains("topk_note"));
}

TEST(RunAndWrite, WritesFilesAndIsReproducible) {
  const RunConfig c = SmallConfig();
  const fs::path a = FreshDir("a"), b = FreshDir("b");
  std::ostringstream log;
  ASSERT_EQ(RunAndWrite(c, a, log), 0);
  ASSERT_EQ(RunAndWrite(c, b, log), 0);
  EXPECT_TRUE(fs::exists(a / "summary.json"));
  EXPECT_FALSE(fs::exists(a / "diagnostics.json"));
  EXPECT_EQ(Slurp(a / "metrics.csv"), Slurp(b / "metrics.csv"));
  EXPECT_EQ(Slurp(a / "summary.json"), Slurp(b / "summary.json"));
}

TEST(RunAndWrite, DivergenceWritesDiagnostics) {
  RunConfig c = SmallConfig();
  c.problem = ProblemKind::kLeastSquares;
  c.optimizer.compressor = CompressorSpec::Identity();
  c.optimizer.lr.base = 1e6;
  c.optimizer.eta_floor = 1e-300;
  c.optimizer.t_total = 2000;
  const fs::path dir = FreshDir("diverge");
  std::ostringstream log;
  EXPECT_EQ(RunAndWrite(c, dir, log), 3);
  EXPECT_TRUE(fs::exists(dir / "diagnostics.json"));
  EXPECT_NE(log.str().find("non-finite"), std::string::npos);
}

TEST(OutputDir, EnvironmentOverridesConfig) {
  RunConfig c = SmallConfig();
  c.output_dir = "from_config";
  unsetenv(kOutputDirEnv);
  EXPECT_EQ(ResolveOutputDir(c), fs::path("from_config"));
  setenv(kOutputDirEnv, "/tmp/from_env", 1);
  EXPECT_EQ(ResolveOutputDir(c), fs::path("/tmp/from_env"));
  unsetenv(kOutputDirEnv);
}

TEST(Compare, VariantsShareDataAndSeeds) {
  const RunConfig base = SmallConfig();
  const std::vector<CompareVariant> variants = {
      CompareVariant::kIdentity, CompareVariant::kOneBit,
      CompareVariant::kGradientCompression};
  const Comparison cmp = CompareVariants(base, variants);
  ASSERT_EQ(cmp.results.size(), 3u);
  // Warmup is uncompressed, so every variant agrees bitwise until T_w.
  for (uint64_t t = 0; t <= base.optimizer.t_warmup; ++t) {
    EXPECT_EQ(cmp.results[0].run.trajectory[t].loss,
              cmp.results[1].run.trajectory[t].loss);
    EXPECT_EQ(cmp.results[1].run.trajectory[t].loss,
              cmp.results[2].run.trajectory[t].loss);
  }
  EXPECT_NE(cmp.results[1].run.state.x, cmp.results[2].run.state.x);
  EXPECT_EQ(cmp.summary["reference"], "identity");
  EXPECT_EQ(cmp.summary["variants"][0]["relative_loss_gap"].get<double>(), 0.0);

  std::ostringstream csv;
  WriteComparisonCsv(csv, cmp);
  EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')),
            "t,phase,loss_identity,loss_onebit,loss_gradient");
}

TEST(Compare, GradientVariantConfig) {
  RunConfig base = SmallConfig();
  base.optimizer.compressor = CompressorSpec::Identity();
  const RunConfig g = ConfigForVariant(base, CompareVariant::kGradientCompression);
  EXPECT_EQ(g.optimizer.variant, Variant::kGradient);
  EXPECT_EQ(g.optimizer.compressor.kind, CompressorKind::kOneBit);
  EXPECT_EQ(ConfigForVariant(base, CompareVariant::kTopK).optimizer.compressor.kind,
            CompressorKind::kTopK);
  EXPECT_THROW(ParseCompareVariant("bogus"), ConfigError);
  EXPECT_THROW(CompareVariants(base, std::vector<CompareVariant>{
                                         CompareVariant::kOneBit}),
               ConfigError);
}

}  // namespace
}  // namespace apmsqueeze::harness
