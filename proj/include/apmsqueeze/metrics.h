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

#ifndef APMSQUEEZE_METRICS_H_
#define APMSQUEEZE_METRICS_H_

#include <cstdint>
#include <string_view>

namespace apmsqueeze {

enum class Phase { kWarmup, kSqueeze };

std::string_view ToString(Phase phase);

// One row of the per-step trajectory. Quantities that describe the model
// (loss, gradient norms) are evaluated at x_t, before the step is applied;
// communication and residual measurements describe the step itself.
struct MetricsRecord {
  uint64_t t = 0;
  Phase phase = Phase::kWarmup;
  double loss = 0.0;
  double grad_norm_sq = 0.0;
  // ||grad f(x_t)||^2 weighted by 1/sqrt(v_frozen); NaN during warmup.
  double grad_norm_sq_v = 0.0;
  uint64_t bits_step = 0;
  uint64_t bits_cum = 0;
  // max_i sum_k ||delta^(i,k)||
  double eps_worker = 0.0;
  // sum_i ||server delta^(:,i)||
  double eps_server = 0.0;
  double wall_ms = 0.0;
  // ||(1/n) sum_i g_i||; not part of the CSV.
  double stoch_grad_norm = 0.0;
};

}  // namespace apmsqueeze

#endif  // APMSQUEEZE_METRICS_H_
