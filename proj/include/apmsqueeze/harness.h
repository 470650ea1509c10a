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

#ifndef APMSQUEEZE_HARNESS_H_
#define APMSQUEEZE_HARNESS_H_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "apmsqueeze/metrics.h"
#include "apmsqueeze/optimizer.h"
#include "apmsqueeze/problems.h"

namespace apmsqueeze::harness {

// Environment variable that, when set, replaces RunConfig::output_dir.
inline constexpr const char* kOutputDirEnv = "APMSQUEEZE_OUTPUT_DIR";

inline constexpr std::string_view kMetricsCsvHeader =
    "t,phase,loss,grad_norm_sq,grad_norm_sq_V,bits_step,bits_cum,"
    "eps_worker,eps_server,wall_ms";

/// Flat experiment description, parsed from JSON. Every key is optional;
/// unknown keys are rejected.
struct RunConfig {
  // Problem.
  ProblemKind problem = ProblemKind::kLogistic;
  std::string dataset_csv;  // empty: synthetic data
  size_t n_samples = 4000;
  size_t n_features = 200;
  double noise = 0.05;
  uint64_t data_seed = 1;
  size_t batch_size = 16;
  size_t hidden_units = 16;
  double l2 = 0.0;

  // Optimizer and communication.
  size_t n_workers = 8;
  OptimizerConfig optimizer;

  // Run control.
  uint64_t seed = 42;
  uint64_t eval_every = 1;
  std::string output_dir = "out";
  bool record_wall_time = false;
  bool diagnostics = true;
  size_t variance_draws = 0;  // 0 disables the sigma^2 probe
  bool threads = false;

  static RunConfig FromJson(const nlohmann::json& j);
  nlohmann::json ToJson() const;
  void Validate() const;
};

RunConfig LoadRunConfig(const std::filesystem::path& path);

Problem BuildProblem(const RunConfig& cfg);

// Output directory after applying the environment override.
std::filesystem::path ResolveOutputDir(const RunConfig& cfg);

// Writes the header and every record with t % eval_every == 0 plus the last.
void WriteMetricsCsv(std::ostream& out, std::span<const MetricsRecord> records,
                     uint64_t eval_every);

struct ExperimentResult {
  RunResult run;
  nlohmann::json summary;
};

/// Builds the problem, runs the optimizer and assembles the summary. Does
/// not touch the filesystem.
ExperimentResult RunExperiment(const RunConfig& cfg);

/// RunExperiment plus metrics.csv and summary.json under `output_dir`. On
/// divergence also writes diagnostics.json. Returns the process exit code.
int RunAndWrite(const RunConfig& cfg, const std::filesystem::path& output_dir,
                std::ostream& log);

enum class CompareVariant { kIdentity, kOneBit, kTopK, kGradientCompression };

std::string_view ToString(CompareVariant v);
// Accepts "identity", "onebit", "topk", "gradient".
CompareVariant ParseCompareVariant(std::string_view name);

// The configuration a variant runs with, derived from the base config.
RunConfig ConfigForVariant(const RunConfig& base, CompareVariant v);

struct Comparison {
  std::vector<CompareVariant> variants;
  std::vector<ExperimentResult> results;
  nlohmann::json summary;
};

// Runs every variant with identical seeds and warmup. Needs >= 2 variants.
Comparison CompareVariants(const RunConfig& base,
                           std::span<const CompareVariant> variants);

// Aligned per-step loss columns: t,phase,loss_<variant>...
void WriteComparisonCsv(std::ostream& out, const Comparison& cmp);

}  // namespace apmsqueeze::harness

#endif  // APMSQUEEZE_HARNESS_H_
