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

#ifndef APMSQUEEZE_PROBLEMS_H_
#define APMSQUEEZE_PROBLEMS_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "apmsqueeze/numerics.h"
#include "apmsqueeze/rng.h"

namespace apmsqueeze {

enum class ProblemKind { kLeastSquares, kLogistic, kTinyMLP };

std::string_view ToString(ProblemKind kind);
// Accepts "least_squares", "logistic", "mlp".
ProblemKind ParseProblemKind(std::string_view name);

// Row-major feature matrix with one label per row.
struct Dataset {
  size_t n_samples = 0;
  size_t n_features = 0;
  std::vector<double> features;
  std::vector<double> labels;

  std::span<const double> row(size_t i) const {
    return std::span<const double>(features).subspan(i * n_features,
                                                     n_features);
  }
};

// Each row holds the features followed by the label in the last column.
// A first line that does not parse as numbers is treated as a header.
Dataset LoadCsvDataset(const std::string& path);

struct SyntheticSpec {
  ProblemKind kind = ProblemKind::kLogistic;
  size_t n_samples = 1000;
  size_t n_features = 10;
  // Gaussian label noise for least squares; label flip probability for the
  // classification problems.
  double noise = 0.1;
  uint64_t seed = 1;
};

// Gaussian features and labels from a planted ground-truth model.
Dataset MakeSyntheticDataset(const SyntheticSpec& spec);

struct ProblemOptions {
  size_t batch_size = 1;
  // Hidden width of the tiny MLP (<= 64).
  size_t hidden_units = 16;
  // Optional ridge term (l2 / 2) * ||x||^2 added to every sample's loss.
  double l2 = 0.0;
};

struct GradientSample {
  DenseVector gradient;
  double loss = 0.0;
  std::vector<size_t> batch_indices;  // indices into the full dataset
};

/// Objective f(x) = mean over all samples of a per-sample loss, with the
/// samples split into n disjoint contiguous shards, one per worker.
class Problem {
 public:
  Problem(ProblemKind kind, Dataset data, size_t n_workers,
          ProblemOptions options = {});

  ProblemKind kind() const { return kind_; }
  size_t dim() const { return dim_; }
  size_t n_workers() const { return shards_.n_chunks(); }
  size_t batch_size() const { return options_.batch_size; }
  const Dataset& data() const { return data_; }
  const ChunkLayout& shards() const { return shards_; }
  std::optional<double> known_optimum() const { return known_optimum_; }

  /// Minibatch gradient for `worker`: batch_size indices drawn uniformly
  /// with replacement from the worker's shard.
  GradientSample SampleGradient(size_t worker, const DenseVector& x,
                                RngStream& rng) const;

  // Exact loss and gradient over the union of all shards.
  std::pair<DenseVector, double> FullGradientAndLoss(const DenseVector& x) const;
  // Exact loss and gradient over one worker's shard.
  std::pair<DenseVector, double> ShardGradientAndLoss(
      size_t worker, const DenseVector& x) const;
  // Loss and gradient of a single sample (index into the full dataset).
  std::pair<DenseVector, double> SampleLossGradient(size_t index,
                                                    const DenseVector& x) const;

  // Zero for the convex problems; small Gaussian weights for the MLP.
  DenseVector InitialPoint(uint64_t seed) const;

  // Upper bound on the gradient Lipschitz constant for the convex problems.
  std::optional<double> SmoothnessBound() const;

 private:
  double Accumulate(size_t index, const DenseVector& x, DenseVector& grad) const;
  void CheckPoint(const DenseVector& x) const;

  ProblemKind kind_;
  Dataset data_;
  ProblemOptions options_;
  ChunkLayout shards_;
  size_t dim_ = 0;
  std::optional<double> known_optimum_;
};

/// Per-worker estimate of E||g - grad f_i(x)||^2 from `draws` independent
/// minibatches.
std::vector<double> MeasureVariance(const Problem& problem,
                                    const DenseVector& x, size_t draws,
                                    uint64_t seed);

/// Estimate of E||(1/n) sum_i g_i - grad f(x)||^2 where each g_i is one
/// minibatch gradient from worker i.
double MeasureAveragedVariance(const Problem& problem, const DenseVector& x,
                               size_t draws, uint64_t seed);

}  // namespace apmsqueeze

#endif  // APMSQUEEZE_PROBLEMS_H_
