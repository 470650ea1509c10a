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

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <ostream>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "apmsqueeze/errors.h"

namespace apmsqueeze::harness {

using nlohmann::json;

namespace {

template <class T>
void Read(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) {
    try {
      out = it->get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
  }
}

std::string Num(double v) { return fmt::format("{:.17g}", v); }

double MinPreconditioner(const OptimizerState& s, double floor) {
  if (!s.v_frozen || s.v_frozen->empty()) return std::nan("");
  double m = INFINITY;
  for (double v : *s.v_frozen) m = std::min(m, std::max(std::sqrt(v), floor));
  return m;
}

}  // namespace

RunConfig RunConfig::FromJson(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const char* kKeys[] = {
      "problem",     "dataset_csv",   "n_samples",     "n_features",
      "noise",       "data_seed",     "batch_size",    "hidden_units",
      "l2",          "n_workers",     "compressor",    "k_percent",
      "levels",      "lr",            "lr_decay_factor", "lr_decay_every",
      "beta1",       "beta2",         "eta",           "eta_floor",
      "t_warmup",    "t_total",       "freeze_bias_corrected", "variant",
      "seed",        "eval_every",    "output_dir",    "record_wall_time",
      "diagnostics", "variance_draws", "threads"};
  for (const auto& [key, value] : j.items()) {
    if (std::find_if(std::begin(kKeys), std::end(kKeys), [&](const char* k) {
          return key == k;
        }) == std::end(kKeys)) {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }

  RunConfig c;
  std::string s;
  if (j.contains("problem")) {
    Read(j, "problem", s);
    c.problem = ParseProblemKind(s);
  }
  Read(j, "dataset_csv", c.dataset_csv);
  Read(j, "n_samples", c.n_samples);
  Read(j, "n_features", c.n_features);
  Read(j, "noise", c.noise);
  Read(j, "data_seed", c.data_seed);
  Read(j, "batch_size", c.batch_size);
  Read(j, "hidden_units", c.hidden_units);
  Read(j, "l2", c.l2);
  Read(j, "n_workers", c.n_workers);

  OptimizerConfig& o = c.optimizer;
  if (j.contains("compressor")) {
    Read(j, "compressor", s);
    o.compressor.kind = ParseCompressorKind(s);
  }
  Read(j, "k_percent", o.compressor.k_percent);
  Read(j, "levels", o.compressor.levels);
  Read(j, "lr", o.lr.base);
  Read(j, "lr_decay_factor", o.lr.decay_factor);
  Read(j, "lr_decay_every", o.lr.decay_every);
  Read(j, "beta1", o.beta1);
  Read(j, "beta2", o.beta2);
  Read(j, "eta", o.eta);
  Read(j, "eta_floor", o.eta_floor);
  Read(j, "t_warmup", o.t_warmup);
  Read(j, "t_total", o.t_total);
  Read(j, "freeze_bias_corrected", o.freeze_bias_corrected);
  if (j.contains("variant")) {
    Read(j, "variant", s);
    if (s == "momentum") {
      o.variant = Variant::kMomentum;
    } else if (s == "gradient") {
      o.variant = Variant::kGradient;
    } else {
      throw ConfigError("variant must be 'momentum' or 'gradient'");
    }
  }

  Read(j, "seed", c.seed);
  Read(j, "eval_every", c.eval_every);
  Read(j, "output_dir", c.output_dir);
  Read(j, "record_wall_time", c.record_wall_time);
  Read(j, "diagnostics", c.diagnostics);
  Read(j, "variance_draws", c.variance_draws);
  Read(j, "threads", c.threads);
  o.compressor.seed = c.seed;
  c.Validate();
  return c;
}

json RunConfig::ToJson() const {
  const OptimizerConfig& o = optimizer;
  return json{
      {"problem", ToString(problem)},
      {"dataset_csv", dataset_csv},
      {"n_samples", n_samples},
      {"n_features", n_features},
      {"noise", noise},
      {"data_seed", data_seed},
      {"batch_size", batch_size},
      {"hidden_units", hidden_units},
      {"l2", l2},
      {"n_workers", n_workers},
      {"compressor", ToString(o.compressor.kind)},
      {"k_percent", o.compressor.k_percent},
      {"levels", o.compressor.levels},
      {"lr", o.lr.base},
      {"lr_decay_factor", o.lr.decay_factor},
      {"lr_decay_every", o.lr.decay_every},
      {"beta1", o.beta1},
      {"beta2", o.beta2},
      {"eta", o.eta},
      {"eta_floor", o.eta_floor},
      {"t_warmup", o.t_warmup},
      {"t_total", o.t_total},
      {"freeze_bias_corrected", o.freeze_bias_corrected},
      {"variant", o.variant == Variant::kMomentum ? "momentum" : "gradient"},
      {"seed", seed},
      {"eval_every", eval_every},
      {"output_dir", output_dir},
      {"record_wall_time", record_wall_time},
      {"diagnostics", diagnostics},
      {"variance_draws", variance_draws},
      {"threads", threads},
  };
}

void RunConfig::Validate() const {
  if (n_workers == 0) throw ConfigError("n_workers must be >= 1");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (eval_every == 0) throw ConfigError("eval_every must be >= 1");
  if (dataset_csv.empty() && (n_samples == 0 || n_features == 0)) {
    throw ConfigError("n_samples and n_features must be >= 1");
  }
  if (dataset_csv.empty() && n_samples < n_workers) {
    throw ConfigError("every worker needs at least one sample");
  }
  if (variance_draws == 1) throw ConfigError("variance_draws must be 0 or >= 2");
  optimizer.Validate();
}

RunConfig LoadRunConfig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " +
                      e.what());
  }
  return RunConfig::FromJson(j);
}

Problem BuildProblem(const RunConfig& cfg) {
  Dataset data = cfg.dataset_csv.empty()
                     ? MakeSyntheticDataset({cfg.problem, cfg.n_samples,
                                             cfg.n_features, cfg.noise,
                                             cfg.data_seed})
                     : LoadCsvDataset(cfg.dataset_csv);
  if (data.n_samples < cfg.n_workers) {
    throw ConfigError("dataset has fewer samples than workers");
  }
  return Problem(cfg.problem, std::move(data), cfg.n_workers,
                 {cfg.batch_size, cfg.hidden_units, cfg.l2});
}

std::filesystem::path ResolveOutputDir(const RunConfig& cfg) {
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) return env;
  return cfg.output_dir;
}

void WriteMetricsCsv(std::ostream& out, std::span<const MetricsRecord> records,
                     uint64_t eval_every) {
  out << kMetricsCsvHeader << '\n';
  for (size_t r = 0; r < records.size(); ++r) {
    const MetricsRecord& m = records[r];
    if (m.t % eval_every != 0 && r + 1 != records.size()) continue;
    fmt::print(out, "{},{},{},{},{},{},{},{},{},{}\n", m.t, ToString(m.phase),
               Num(m.loss), Num(m.grad_norm_sq), Num(m.grad_norm_sq_v),
               m.bits_step, m.bits_cum, Num(m.eps_worker), Num(m.eps_server),
               Num(m.wall_ms));
  }
}

ExperimentResult RunExperiment(const RunConfig& cfg) {
  cfg.Validate();
  const Problem problem = BuildProblem(cfg);
  RunOptions options;
  options.diagnostics = cfg.diagnostics;
  options.record_wall_time = cfg.record_wall_time;
  options.execution =
      cfg.threads ? ExecutionMode::kThreaded : ExecutionMode::kSequential;

  ExperimentResult out;
  out.run = Run(cfg.optimizer, problem, cfg.seed, options);
  const RunResult& r = out.run;
  const OptimizerConfig& o = cfg.optimizer;

  const ChunkLayout layout = MakeChunkLayout(problem.dim(), cfg.n_workers);
  const uint64_t squeeze_steps = o.t_total - o.t_warmup;
  const uint64_t base32 =
      squeeze_steps * UncompressedAllreduceBits(layout, cfg.n_workers, 32);
  const uint64_t base64 = 2 * base32;
  auto ratio = [](uint64_t a, uint64_t b) {
    return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b);
  };

  json s;
  s["problem"] = ToString(cfg.problem);
  s["compressor"] = o.compressor.Describe();
  s["variant"] = o.variant == Variant::kMomentum ? "momentum" : "gradient";
  s["n_workers"] = cfg.n_workers;
  s["dim"] = problem.dim();
  s["t_warmup"] = o.t_warmup;
  s["t_total"] = o.t_total;
  s["seed"] = cfg.seed;
  s["final_loss"] = r.final_loss;
  s["final_grad_norm_sq"] = r.final_grad_norm_sq;
  if (auto f = problem.known_optimum()) s["known_optimum"] = *f;
  s["bits_total"] = r.warmup_bits + r.squeeze_bits;
  s["bits_warmup"] = r.warmup_bits;
  s["bits_squeeze"] = r.squeeze_bits;
  s["baseline_bits_squeeze_float32"] = base32;
  s["baseline_bits_squeeze_float64"] = base64;
  s["bits_ratio_float32"] = ratio(r.squeeze_bits, base32);
  s["bits_ratio_float64"] = ratio(r.squeeze_bits, base64);
  if (o.compressor.kind == CompressorKind::kTopK) {
    s["topk_element_fraction"] = o.compressor.k_percent / 100.0;
    s["topk_note"] =
        "TopK keeps k% of elements but each kept entry costs a 32-bit index "
        "plus a 64-bit value, so the bit ratio exceeds the element fraction";
  }
  s["v_min"] = MinPreconditioner(r.state, o.eta_floor);
  s["eps_worker_max"] = r.max_eps_worker;
  s["eps_server_max"] = r.max_eps_server;
  if (auto l = problem.SmoothnessBound()) s["smoothness_bound"] = *l;
  if (cfg.variance_draws >= 2) {
    s["sigma_sq"] = MeasureVariance(problem, r.state.x, cfg.variance_draws,
                                    cfg.seed);
  }
  s["diverged_at"] = r.diverged_at ? json(*r.diverged_at) : json(nullptr);
  out.summary = std::move(s);
  return out;
}

int RunAndWrite(const RunConfig& cfg, const std::filesystem::path& output_dir,
                std::ostream& log) {
  ExperimentResult res = RunExperiment(cfg);
  std::filesystem::create_directories(output_dir);
  {
    std::ofstream csv(output_dir / "metrics.csv");
    WriteMetricsCsv(csv, res.run.trajectory, cfg.eval_every);
  }
  {
    std::ofstream js(output_dir / "summary.json");
    js << res.summary.dump(2) << '\n';
  }
  if (res.run.diverged_at) {
    const OptimizerState& st = res.run.state;
    json diag{
        {"diverged_at", *res.run.diverged_at},
        {"phase", ToString(st.phase)},
        {"x_norm", L2Norm(st.x)},
        {"m_norm", L2Norm(st.m)},
        {"v_norm", L2Norm(st.v)},
        {"x_finite", st.x.IsFinite()},
        {"m_finite", st.m.IsFinite()},
        {"config", cfg.ToJson()},
    };
    std::ofstream js(output_dir / "diagnostics.json");
    js << diag.dump(2) << '\n';
    log << "error: non-finite loss at step " << *res.run.diverged_at
        << "; diagnostics written to " << (output_dir / "diagnostics.json")
        << '\n';
    return 3;
  }
  log << "final_loss " << Num(res.run.final_loss) << "\n"
      << "bits_ratio_float32 " << Num(res.summary["bits_ratio_float32"].get<double>())
      << "\n";
  return 0;
}

std::string_view ToString(CompareVariant v) {
  switch (v) {
    case CompareVariant::kIdentity:
      return "identity";
    case CompareVariant::kOneBit:
      return "onebit";
    case CompareVariant::kTopK:
      return "topk";
    case CompareVariant::kGradientCompression:
      return "gradient";
  }
  return "unknown";
}

CompareVariant ParseCompareVariant(std::string_view name) {
  for (auto v : {CompareVariant::kIdentity, CompareVariant::kOneBit,
                 CompareVariant::kTopK, CompareVariant::kGradientCompression}) {
    if (ToString(v) == name) return v;
  }
  throw ConfigError("unknown variant '" + std::string(name) + "'");
}

RunConfig ConfigForVariant(const RunConfig& base, CompareVariant v) {
  RunConfig c = base;
  CompressorSpec& spec = c.optimizer.compressor;
  c.optimizer.variant = Variant::kMomentum;
  switch (v) {
    case CompareVariant::kIdentity:
      spec.kind = CompressorKind::kIdentity;
      break;
    case CompareVariant::kOneBit:
      spec.kind = CompressorKind::kOneBit;
      break;
    case CompareVariant::kTopK:
      spec.kind = CompressorKind::kTopK;
      break;
    case CompareVariant::kGradientCompression:
      // Same codec as the base config; a lossless base falls back to 1-bit
      // so the ablation actually compresses.
      if (spec.lossless()) spec.kind = CompressorKind::kOneBit;
      c.optimizer.variant = Variant::kGradient;
      break;
  }
  return c;
}

Comparison CompareVariants(const RunConfig& base,
                           std::span<const CompareVariant> variants) {
  if (variants.size() < 2) throw ConfigError("compare needs at least 2 variants");
  Comparison cmp;
  cmp.variants.assign(variants.begin(), variants.end());
  for (CompareVariant v : variants) {
    cmp.results.push_back(RunExperiment(ConfigForVariant(base, v)));
  }
  // Gaps are relative to identity when present, else to the first variant.
  size_t ref = 0;
  for (size_t i = 0; i < variants.size(); ++i) {
    if (variants[i] == CompareVariant::kIdentity) {
      ref = i;
      break;
    }
  }
  const double ref_loss = cmp.results[ref].run.final_loss;
  json s;
  s["reference"] = ToString(variants[ref]);
  for (size_t i = 0; i < variants.size(); ++i) {
    const auto& r = cmp.results[i];
    s["variants"].push_back({
        {"name", ToString(variants[i])},
        {"final_loss", r.run.final_loss},
        {"final_grad_norm_sq", r.run.final_grad_norm_sq},
        {"relative_loss_gap", (r.run.final_loss - ref_loss) / std::abs(ref_loss)},
        {"bits_ratio_float32", r.summary["bits_ratio_float32"]},
    });
  }
  cmp.summary = std::move(s);
  return cmp;
}

void WriteComparisonCsv(std::ostream& out, const Comparison& cmp) {
  out << "t,phase";
  for (CompareVariant v : cmp.variants) out << ",loss_" << ToString(v);
  out << '\n';
  size_t rows = 0;
  for (const auto& r : cmp.results) {
    rows = std::max(rows, r.run.trajectory.size());
  }
  for (size_t t = 0; t < rows; ++t) {
    const auto& first = cmp.results.front().run.trajectory;
    out << t << ',' << (t < first.size() ? ToString(first[t].phase) : "");
    for (const auto& r : cmp.results) {
      out << ',';
      if (t < r.run.trajectory.size()) out << Num(r.run.trajectory[t].loss);
    }
    out << '\n';
  }
}

}  // namespace apmsqueeze::harness
