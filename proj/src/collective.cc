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

#include "apmsqueeze/collective.h"

#include <functional>
#include <string>
#include <thread>

#include "apmsqueeze/errors.h"
#include "apmsqueeze/rng.h"

namespace apmsqueeze {

namespace {

uint64_t EntriesSent(const CompressedChunk& c) {
  if (auto* p = std::get_if<TopKPayload>(&c.payload)) return p->indices.size();
  return c.original_len;
}

// Runs body(i) for i in [0, n), either inline or on one thread per index.
void ForEachWorker(size_t n, ExecutionMode mode,
                   const std::function<void(size_t)>& body) {
  if (mode == ExecutionMode::kSequential || n <= 1) {
    for (size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  {
    std::vector<std::jthread> threads;
    threads.reserve(n);
    for (size_t i = 0; i < n; ++i) {
      threads.emplace_back([&, i] {
        try {
          body(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

CollectiveState::CollectiveState(size_t n_workers, size_t total_len,
                                 CompressorSpec compressor,
                                 ServerStage server_stage)
    : n_workers_(n_workers),
      compressor_(compressor),
      server_stage_(server_stage) {
  if (n_workers == 0) throw ConfigError("CollectiveState: n_workers must be >= 1");
  compressor_.Validate();
  layout_ = MakeChunkLayout(total_len, n_workers);
  worker_errors_.resize(n_workers);
  for (auto& row : worker_errors_) {
    for (const ChunkRange& c : layout_.chunks()) row.emplace_back(c.length);
  }
  for (const ChunkRange& c : layout_.chunks()) server_errors_.emplace_back(c.length);
}

const ErrorState& CollectiveState::worker_error(size_t worker,
                                                size_t chunk) const {
  return worker_errors_.at(worker).at(chunk);
}

const ErrorState& CollectiveState::server_error(size_t chunk) const {
  return server_errors_.at(chunk);
}

DenseVector CollectiveState::WorkerResidual(size_t worker) const {
  DenseVector out(layout_.total_len());
  for (size_t k = 0; k < n_workers_; ++k) {
    layout_.Scatter(worker_error(worker, k).residual(), k, out);
  }
  return out;
}

DenseVector CollectiveState::ServerResidual() const {
  DenseVector out(layout_.total_len());
  for (size_t k = 0; k < n_workers_; ++k) {
    layout_.Scatter(server_errors_[k].residual(), k, out);
  }
  return out;
}

DenseVector CollectiveState::GlobalResidual() const {
  DenseVector sum(layout_.total_len());
  for (size_t i = 0; i < n_workers_; ++i) sum += WorkerResidual(i);
  sum *= 1.0 / static_cast<double>(n_workers_);
  return sum + ServerResidual();
}

double CollectiveState::WorkerErrorMagnitude(size_t worker) const {
  double s = 0.0;
  for (const ErrorState& e : worker_errors_.at(worker)) s += L2Norm(e.residual());
  return s;
}

double CollectiveState::ServerErrorMagnitude() const {
  double s = 0.0;
  for (const ErrorState& e : server_errors_) s += L2Norm(e.residual());
  return s;
}

DenseVector CompressedAllreduce(CollectiveState& state,
                                std::span<const DenseVector> inputs) {
  const size_t n = state.n_workers_;
  const ChunkLayout& layout = state.layout_;
  if (inputs.size() != n) {
    throw DimensionError("CompressedAllreduce: expected " + std::to_string(n) +
                         " inputs, got " + std::to_string(inputs.size()));
  }
  for (const DenseVector& in : inputs) {
    if (in.size() != layout.total_len()) {
      throw DimensionError("CompressedAllreduce: input length " +
                           std::to_string(in.size()) + " != " +
                           std::to_string(layout.total_len()));
    }
  }
  const uint64_t step = state.steps_;
  const CompressorSpec& spec = state.compressor_;

  // Scatter: sent[i][k] is worker i's encoding of its chunk k.
  std::vector<std::vector<CompressedChunk>> sent(n);
  ForEachWorker(n, state.mode_, [&](size_t i) {
    sent[i].reserve(n);
    for (size_t k = 0; k < n; ++k) {
      RngStream rng(spec.seed, StreamTag::kWorkerCompress, i, k, step);
      sent[i].push_back(CompressWithErrorFeedback(
          spec, layout.Slice(inputs[i], k), state.worker_errors_[i][k], rng));
    }
  });

  // Average and recompress at each owner.
  std::vector<CompressedChunk> owned(n);
  ForEachWorker(n, state.mode_, [&](size_t owner) {
    DenseVector avg(layout.chunk(owner).length);
    for (size_t j = 0; j < n; ++j) avg += Decompress(sent[j][owner]);
    avg *= 1.0 / static_cast<double>(n);
    RngStream rng(spec.seed, StreamTag::kServerCompress, owner, step);
    if (state.server_stage_ == ServerStage::kCompressWithErrorFeedback) {
      owned[owner] = CompressWithErrorFeedback(spec, avg,
                                               state.server_errors_[owner], rng);
    } else {
      owned[owner] = Compress(CompressorSpec::Identity(), avg, rng);
    }
  });

  // Gather: each owner broadcasts to the n - 1 other workers.
  uint64_t bits = 0;
  state.last_entries_sent_.assign(n, std::vector<uint64_t>(n, 0));
  for (size_t i = 0; i < n; ++i) {
    for (size_t k = 0; k < n; ++k) {
      state.last_entries_sent_[i][k] = EntriesSent(sent[i][k]);
      if (i != k) bits += sent[i][k].wire_bits;
    }
  }
  std::vector<DenseVector> pieces;
  pieces.reserve(n);
  for (size_t owner = 0; owner < n; ++owner) {
    bits += (n - 1) * owned[owner].wire_bits;
    pieces.push_back(Decompress(owned[owner]));
  }

  state.last_step_bits_ = bits;
  state.bits_sent_total_ += bits;
  ++state.steps_;
  return layout.Concatenate(pieces);
}

uint64_t BitsForStep(const CollectiveState& state) {
  if (!state.last_step_bits_) {
    throw StateError("BitsForStep: no allreduce has completed");
  }
  return *state.last_step_bits_;
}

uint64_t UncompressedAllreduceBits(const ChunkLayout& layout, size_t n_workers,
                                   uint64_t bits_per_element) {
  if (n_workers == 0) return 0;
  // Scatter and gather each move every element across n - 1 links.
  return 2 * (n_workers - 1) * layout.total_len() * bits_per_element;
}

}  // namespace apmsqueeze
