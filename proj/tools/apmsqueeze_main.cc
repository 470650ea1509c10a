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

// Command-line entry point: run, verify and compare subcommands.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "apmsqueeze/errors.h"
#include "apmsqueeze/harness.h"
#include "apmsqueeze/verify.h"

namespace fs = std::filesystem;
using namespace apmsqueeze;

int main(int argc, char** argv) {
  CLI::App app{"Adam-preconditioned momentum SGD with compressed allreduce"};
  app.require_subcommand(1);

  std::string run_config;
  auto* run = app.add_subcommand("run", "Run one experiment from a JSON config");
  run->add_option("config", run_config, "Path to config.json")
      ->required()
      ->check(CLI::ExistingFile);

  std::string suite_name;
  auto* verify_cmd = app.add_subcommand("verify", "Run an invariant suite");
  verify_cmd
      ->add_option("suite", suite_name,
                   "updating_form | identity_equiv | codec_contracts | "
                   "variance_scaling | finite_diff")
      ->required();

  std::string compare_config;
  std::vector<std::string> variant_names;
  auto* compare = app.add_subcommand("compare", "Run several variants side by side");
  compare->add_option("config", compare_config, "Path to config.json")
      ->required()
      ->check(CLI::ExistingFile);
  compare->add_option("--variants", variant_names,
                      "identity | onebit | topk | gradient (at least two)")
      ->required()
      ->expected(2, -1);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      const harness::RunConfig cfg = harness::LoadRunConfig(run_config);
      const fs::path out = harness::ResolveOutputDir(cfg);
      const int rc = harness::RunAndWrite(cfg, out, std::cout);
      if (rc == 0) std::cout << "wrote " << (out / "metrics.csv") << '\n';
      return rc;
    }
    if (*verify_cmd) {
      const verify::Suite suite = verify::ParseSuite(suite_name);
      const verify::Report report = verify::RunSuite(suite);
      report.Print(std::cout);
      if (const verify::Check* bad = report.first_failure()) {
        std::cerr << "verify " << report.suite << " failed: " << bad->name
                  << '\n';
        return 1;
      }
      return 0;
    }
    if (*compare) {
      const harness::RunConfig cfg = harness::LoadRunConfig(compare_config);
      std::vector<harness::CompareVariant> variants;
      for (const auto& v : variant_names) {
        variants.push_back(harness::ParseCompareVariant(v));
      }
      const harness::Comparison cmp = harness::CompareVariants(cfg, variants);
      const fs::path out = harness::ResolveOutputDir(cfg);
      fs::create_directories(out);
      {
        std::ofstream csv(out / "comparison.csv");
        harness::WriteComparisonCsv(csv, cmp);
      }
      {
        std::ofstream js(out / "comparison.json");
        js << cmp.summary.dump(2) << '\n';
      }
      std::cout << cmp.summary.dump(2) << '\n';
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
