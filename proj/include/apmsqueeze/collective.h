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

#ifndef APMSQUEEZE_COLLECTIVE_H_
#define APMSQUEEZE_COLLECTIVE_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "apmsqueeze/compression.h"
#include "apmsqueeze/numerics.h"

namespace apmsqueeze {

// How the chunk owner treats the average it computes.
enum class ServerStage {
  // Recompress with the server-side error state before broadcasting.
  kCompressWithErrorFeedback,
  // Broadcast the exact float64 average (a plain allreduce reduction).
  kExact,
};

enum class ExecutionMode {
  kSequential,
  // One thread per worker inside each phase. Results are bitwise identical
  // to kSequential.
  kThreaded,
};

/// Simulated compressed gather-scatter allreduce over n workers.
///
/// Worker i owns chunk i of the vector. Each step runs three barrier
/// phases: every worker compresses each of its chunks with its own error
/// state and sends chunk k to worker k; each owner averages the decoded
/// pieces and recompresses the average with the owner's error state; each
/// owner broadcasts the result, which every worker decodes into the same
/// output vector. Traffic between distinct workers is counted in bits;
/// a worker's own chunk is encoded and decoded but costs nothing.
class CollectiveState {
 public:
  CollectiveState(size_t n_workers, size_t total_len, CompressorSpec compressor,
                  ServerStage server_stage = ServerStage::kCompressWithErrorFeedback);

  size_t n_workers() const { return n_workers_; }
  const ChunkLayout& layout() const { return layout_; }
  const CompressorSpec& compressor() const { return compressor_; }
  ServerStage server_stage() const { return server_stage_; }

  void set_execution_mode(ExecutionMode mode) { mode_ = mode; }

  // delta^(i,k): residual of worker i for chunk k.
  const ErrorState& worker_error(size_t worker, size_t chunk) const;
  // Owner-side residual for chunk i.
  const ErrorState& server_error(size_t chunk) const;

  // Worker i's residuals laid out as a full-length vector.
  DenseVector WorkerResidual(size_t worker) const;
  // Owner residuals laid out as a full-length vector.
  DenseVector ServerResidual() const;
  // (1/n) sum_i WorkerResidual(i) + ServerResidual().
  DenseVector GlobalResidual() const;

  // sum_k ||delta^(i,k)|| for one worker.
  double WorkerErrorMagnitude(size_t worker) const;
  // sum_i ||server residual of chunk i||.
  double ServerErrorMagnitude() const;

  uint64_t bits_sent_total() const { return bits_sent_total_; }
  uint64_t steps() const { return steps_; }

  // Count of compressed entries each chunk transmitted during the most
  // recent step, indexed [worker][chunk]; useful for TopK accounting.
  const std::vector<std::vector<uint64_t>>& last_entries_sent() const {
    return last_entries_sent_;
  }

 private:
  friend DenseVector CompressedAllreduce(CollectiveState&,
                                         std::span<const DenseVector>);
  friend uint64_t BitsForStep(const CollectiveState&);

  size_t n_workers_;
  ChunkLayout layout_;
  CompressorSpec compressor_;
  ServerStage server_stage_;
  ExecutionMode mode_ = ExecutionMode::kSequential;
  std::vector<std::vector<ErrorState>> worker_errors_;
  std::vector<ErrorState> server_errors_;
  uint64_t bits_sent_total_ = 0;
  std::optional<uint64_t> last_step_bits_;
  uint64_t steps_ = 0;
  std::vector<std::vector<uint64_t>> last_entries_sent_;
};

/// Runs one compressed allreduce over `inputs` (one vector per worker) and
/// returns the vector every worker ends up holding. Mutates error states
/// and bit counters.
DenseVector CompressedAllreduce(CollectiveState& state,
                                std::span<const DenseVector> inputs);

// Bits sent during the most recent step. Throws StateError before the
// first step.
uint64_t BitsForStep(const CollectiveState& state);

// Bits an uncompressed gather-scatter allreduce of `layout` over n workers
// moves when every element costs `bits_per_element`.
uint64_t UncompressedAllreduceBits(const ChunkLayout& layout, size_t n_workers,
                                   uint64_t bits_per_element);

}  // namespace apmsqueeze

#endif  // APMSQUEEZE_COLLECTIVE_H_
