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

#include "apmsqueeze/problems.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "apmsqueeze/errors.h"

namespace apmsqueeze {

namespace {

constexpr size_t kMaxHiddenUnits = 64;
constexpr size_t kMaxMlpParams = 5000;

double Sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
double Softplus(double z) {
  return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

double RowDot(std::span<const double> row, const DenseVector& x,
              size_t offset = 0) {
  double s = 0.0;
  for (size_t j = 0; j < row.size(); ++j) s += row[j] * x[offset + j];
  return s;
}

bool ParseRow(const std::string& line, std::vector<double>& out) {
  out.clear();
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    auto first = cell.find_first_not_of(" \t\r");
    auto last = cell.find_last_not_of(" \t\r");
    if (first == std::string::npos) return false;
    double v = 0.0;
    const char* b = cell.data() + first;
    const char* e = cell.data() + last + 1;
    auto [ptr, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || ptr != e) return false;
    out.push_back(v);
  }
  return !out.empty();
}

// Solves (H) x = r for symmetric positive definite H (row-major, n x n).
std::optional<DenseVector> CholeskySolve(std::vector<double> h, DenseVector r) {
  const size_t n = r.size();
  for (size_t j = 0; j < n; ++j) {
    double d = h[j * n + j];
    for (size_t k = 0; k < j; ++k) d -= h[j * n + k] * h[j * n + k];
    if (!(d > 0.0)) return std::nullopt;
    const double l = std::sqrt(d);
    h[j * n + j] = l;
    for (size_t i = j + 1; i < n; ++i) {
      double s = h[i * n + j];
      for (size_t k = 0; k < j; ++k) s -= h[i * n + k] * h[j * n + k];
      h[i * n + j] = s / l;
    }
  }
  for (size_t i = 0; i < n; ++i) {
    double s = r[i];
    for (size_t k = 0; k < i; ++k) s -= h[i * n + k] * r[k];
    r[i] = s / h[i * n + i];
  }
  for (size_t i = n; i-- > 0;) {
    double s = r[i];
    for (size_t k = i + 1; k < n; ++k) s -= h[k * n + i] * r[k];
    r[i] = s / h[i * n + i];
  }
  return r;
}

}  // namespace

std::string_view ToString(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::kLeastSquares:
      return "least_squares";
    case ProblemKind::kLogistic:
      return "logistic";
    case ProblemKind::kTinyMLP:
      return "mlp";
  }
  return "unknown";
}

ProblemKind ParseProblemKind(std::string_view name) {
  for (auto k : {ProblemKind::kLeastSquares, ProblemKind::kLogistic,
                 ProblemKind::kTinyMLP}) {
    if (ToString(k) == name) return k;
  }
  throw ConfigError("unknown problem '" + std::string(name) + "'");
}

Dataset LoadCsvDataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open dataset '" + path + "'");
  Dataset data;
  std::string line;
  std::vector<double> row;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (!ParseRow(line, row)) {
      if (data.n_samples == 0 && line_no == 1) continue;  // header
      throw ConfigError(path + ":" + std::to_string(line_no) +
                        ": not a numeric row");
    }
    if (row.size() < 2) {
      throw ConfigError(path + ":" + std::to_string(line_no) +
                        ": need at least one feature and a label");
    }
    if (data.n_samples == 0) {
      data.n_features = row.size() - 1;
    } else if (row.size() - 1 != data.n_features) {
      throw ConfigError(path + ":" + std::to_string(line_no) +
                        ": inconsistent column count");
    }
    data.features.insert(data.features.end(), row.begin(), row.end() - 1);
    data.labels.push_back(row.back());
    ++data.n_samples;
  }
  if (data.n_samples == 0) throw ConfigError("dataset '" + path + "' is empty");
  return data;
}

Dataset MakeSyntheticDataset(const SyntheticSpec& spec) {
  if (spec.n_samples == 0 || spec.n_features == 0) {
    throw ConfigError("synthetic dataset needs samples and features");
  }
  Dataset data;
  data.n_samples = spec.n_samples;
  data.n_features = spec.n_features;
  data.features.resize(spec.n_samples * spec.n_features);
  data.labels.resize(spec.n_samples);

  RngStream planted_rng(spec.seed, StreamTag::kDataGeneration, 0);
  const double w_scale = 2.0 / std::sqrt(static_cast<double>(spec.n_features));
  std::vector<double> planted(spec.n_features);
  for (double& w : planted) w = w_scale * planted_rng.NextGaussian();

  for (size_t i = 0; i < spec.n_samples; ++i) {
    RngStream rng(spec.seed, StreamTag::kDataGeneration, 1, i);
    double z = 0.0;
    for (size_t j = 0; j < spec.n_features; ++j) {
      const double a = rng.NextGaussian();
      data.features[i * spec.n_features + j] = a;
      z += a * planted[j];
    }
    if (spec.kind == ProblemKind::kLeastSquares) {
      data.labels[i] = z + spec.noise * rng.NextGaussian();
    } else {
      double y = rng.NextUniform() < Sigmoid(z) ? 1.0 : 0.0;
      if (rng.NextUniform() < spec.noise) y = 1.0 - y;
      data.labels[i] = y;
    }
  }
  return data;
}

Problem::Problem(ProblemKind kind, Dataset data, size_t n_workers,
                 ProblemOptions options)
    : kind_(kind), data_(std::move(data)), options_(options) {
  if (n_workers == 0) throw ConfigError("Problem: n_workers must be >= 1");
  if (options_.batch_size == 0) throw ConfigError("Problem: batch_size must be >= 1");
  if (data_.n_samples == 0 || data_.n_features == 0) {
    throw ConfigError("Problem: empty dataset");
  }
  if (data_.features.size() != data_.n_samples * data_.n_features ||
      data_.labels.size() != data_.n_samples) {
    throw ConfigError("Problem: dataset buffers do not match its shape");
  }
  shards_ = MakeChunkLayout(data_.n_samples, n_workers);
  switch (kind_) {
    case ProblemKind::kLeastSquares:
    case ProblemKind::kLogistic:
      dim_ = data_.n_features;
      break;
    case ProblemKind::kTinyMLP: {
      const size_t h = options_.hidden_units;
      if (h == 0 || h > kMaxHiddenUnits) {
        throw ConfigError("TinyMLP: hidden_units must be in [1, 64]");
      }
      dim_ = h * data_.n_features + 2 * h + 1;
      if (dim_ > kMaxMlpParams) {
        throw ConfigError("TinyMLP: more than 5000 parameters");
      }
      break;
    }
  }

  if (kind_ == ProblemKind::kLeastSquares) {
    // Normal equations (A^T A / N + l2 I) x = A^T b / N.
    const size_t p = dim_;
    const double inv_n = 1.0 / static_cast<double>(data_.n_samples);
    std::vector<double> h(p * p, 0.0);
    DenseVector r(p);
    for (size_t i = 0; i < data_.n_samples; ++i) {
      auto a = data_.row(i);
      for (size_t j = 0; j < p; ++j) {
        r[j] += a[j] * data_.labels[i] * inv_n;
        for (size_t k = 0; k <= j; ++k) h[j * p + k] += a[j] * a[k] * inv_n;
      }
    }
    for (size_t j = 0; j < p; ++j) {
      h[j * p + j] += options_.l2;
      for (size_t k = 0; k < j; ++k) h[k * p + j] = h[j * p + k];
    }
    if (auto opt = CholeskySolve(std::move(h), std::move(r))) {
      known_optimum_ = FullGradientAndLoss(*opt).second;
    }
  }
}

void Problem::CheckPoint(const DenseVector& x) const {
  if (x.size() != dim_) {
    throw DimensionError("Problem: point has length " + std::to_string(x.size()) +
                         ", expected " + std::to_string(dim_));
  }
}

double Problem::Accumulate(size_t index, const DenseVector& x,
                           DenseVector& grad) const {
  auto a = data_.row(index);
  const double y = data_.labels[index];
  double loss = 0.0;
  switch (kind_) {
    case ProblemKind::kLeastSquares: {
      const double r = RowDot(a, x) - y;
      for (size_t j = 0; j < a.size(); ++j) grad[j] += r * a[j];
      loss = 0.5 * r * r;
      break;
    }
    case ProblemKind::kLogistic: {
      const double z = RowDot(a, x);
      const double dz = Sigmoid(z) - y;
      for (size_t j = 0; j < a.size(); ++j) grad[j] += dz * a[j];
      loss = Softplus(z) - y * z;
      break;
    }
    case ProblemKind::kTinyMLP: {
      // Layout: W1 (h x p, row-major), b1 (h), w2 (h), b2.
      const size_t p = data_.n_features;
      const size_t h = options_.hidden_units;
      const size_t b1 = h * p, w2 = b1 + h, b2 = w2 + h;
      std::vector<double> act(h);
      double out = x[b2];
      for (size_t u = 0; u < h; ++u) {
        act[u] = std::tanh(RowDot(a, x, u * p) + x[b1 + u]);
        out += x[w2 + u] * act[u];
      }
      const double dout = Sigmoid(out) - y;
      grad[b2] += dout;
      for (size_t u = 0; u < h; ++u) {
        grad[w2 + u] += dout * act[u];
        const double dz = dout * x[w2 + u] * (1.0 - act[u] * act[u]);
        grad[b1 + u] += dz;
        for (size_t j = 0; j < p; ++j) grad[u * p + j] += dz * a[j];
      }
      loss = Softplus(out) - y * out;
      break;
    }
  }
  if (options_.l2 != 0.0) {
    for (size_t j = 0; j < dim_; ++j) grad[j] += options_.l2 * x[j];
    loss += 0.5 * options_.l2 * SquaredNorm(x);
  }
  return loss;
}

GradientSample Problem::SampleGradient(size_t worker, const DenseVector& x,
                                       RngStream& rng) const {
  CheckPoint(x);
  if (worker >= n_workers()) throw DimensionError("SampleGradient: bad worker");
  const ChunkRange& shard = shards_.chunk(worker);
  if (shard.length == 0) {
    throw ConfigError("SampleGradient: worker " + std::to_string(worker) +
                      " has an empty shard");
  }
  GradientSample s;
  s.gradient = DenseVector(dim_);
  s.batch_indices.reserve(options_.batch_size);
  for (size_t b = 0; b < options_.batch_size; ++b) {
    const size_t idx = shard.start + rng.NextBelow(shard.length);
    s.batch_indices.push_back(idx);
    s.loss += Accumulate(idx, x, s.gradient);
  }
  const double inv = 1.0 / static_cast<double>(options_.batch_size);
  s.gradient *= inv;
  s.loss *= inv;
  return s;
}

std::pair<DenseVector, double> Problem::FullGradientAndLoss(
    const DenseVector& x) const {
  CheckPoint(x);
  DenseVector grad(dim_);
  double loss = 0.0;
  for (size_t i = 0; i < data_.n_samples; ++i) loss += Accumulate(i, x, grad);
  const double inv = 1.0 / static_cast<double>(data_.n_samples);
  grad *= inv;
  return {std::move(grad), loss * inv};
}

std::pair<DenseVector, double> Problem::ShardGradientAndLoss(
    size_t worker, const DenseVector& x) const {
  CheckPoint(x);
  const ChunkRange& shard = shards_.chunk(worker);
  if (shard.length == 0) throw ConfigError("ShardGradientAndLoss: empty shard");
  DenseVector grad(dim_);
  double loss = 0.0;
  for (size_t i = shard.start; i < shard.start + shard.length; ++i) {
    loss += Accumulate(i, x, grad);
  }
  const double inv = 1.0 / static_cast<double>(shard.length);
  grad *= inv;
  return {std::move(grad), loss * inv};
}

std::pair<DenseVector, double> Problem::SampleLossGradient(
    size_t index, const DenseVector& x) const {
  CheckPoint(x);
  if (index >= data_.n_samples) throw DimensionError("sample index out of range");
  DenseVector grad(dim_);
  const double loss = Accumulate(index, x, grad);
  return {std::move(grad), loss};
}

DenseVector Problem::InitialPoint(uint64_t seed) const {
  DenseVector x(dim_);
  if (kind_ != ProblemKind::kTinyMLP) return x;
  const size_t p = data_.n_features;
  const size_t h = options_.hidden_units;
  RngStream rng(seed, StreamTag::kDataGeneration, 2);
  const double s1 = 1.0 / std::sqrt(static_cast<double>(p));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(h));
  for (size_t j = 0; j < h * p; ++j) x[j] = s1 * rng.NextGaussian();
  for (size_t u = 0; u < h; ++u) x[h * p + h + u] = s2 * rng.NextGaussian();
  return x;
}

std::optional<double> Problem::SmoothnessBound() const {
  if (kind_ == ProblemKind::kTinyMLP) return std::nullopt;
  // Largest eigenvalue of A^T A / N by power iteration.
  DenseVector v(dim_, 1.0 / std::sqrt(static_cast<double>(dim_)));
  double lambda = 0.0;
  for (int it = 0; it < 200; ++it) {
    DenseVector w(dim_);
    for (size_t i = 0; i < data_.n_samples; ++i) {
      auto a = data_.row(i);
      const double z = RowDot(a, v);
      for (size_t j = 0; j < dim_; ++j) w[j] += z * a[j];
    }
    w *= 1.0 / static_cast<double>(data_.n_samples);
    const double norm = L2Norm(w);
    if (norm == 0.0) break;
    lambda = norm;
    v = (1.0 / norm) * std::move(w);
  }
  const double curvature = kind_ == ProblemKind::kLogistic ? 0.25 : 1.0;
  return curvature * lambda + options_.l2;
}

std::vector<double> MeasureVariance(const Problem& problem,
                                    const DenseVector& x, size_t draws,
                                    uint64_t seed) {
  if (draws < 2) throw ConfigError("MeasureVariance: draws must be >= 2");
  std::vector<double> out(problem.n_workers(), 0.0);
  for (size_t i = 0; i < problem.n_workers(); ++i) {
    const DenseVector mean = problem.ShardGradientAndLoss(i, x).first;
    double acc = 0.0;
    for (size_t d = 0; d < draws; ++d) {
      RngStream rng(seed, StreamTag::kVarianceProbe, i, d);
      acc += SquaredNorm(problem.SampleGradient(i, x, rng).gradient - mean);
    }
    out[i] = acc / static_cast<double>(draws);
  }
  return out;
}

double MeasureAveragedVariance(const Problem& problem, const DenseVector& x,
                               size_t draws, uint64_t seed) {
  if (draws < 2) throw ConfigError("MeasureAveragedVariance: draws must be >= 2");
  const size_t n = problem.n_workers();
  // Centre on the mean of shard gradients, the expectation of the average.
  DenseVector centre(problem.dim());
  for (size_t i = 0; i < n; ++i) centre += problem.ShardGradientAndLoss(i, x).first;
  centre *= 1.0 / static_cast<double>(n);
  double acc = 0.0;
  for (size_t d = 0; d < draws; ++d) {
    DenseVector avg(problem.dim());
    for (size_t i = 0; i < n; ++i) {
      RngStream rng(seed, StreamTag::kVarianceProbe, i, d);
      avg += problem.SampleGradient(i, x, rng).gradient;
    }
    avg *= 1.0 / static_cast<double>(n);
    acc += SquaredNorm(avg - centre);
  }
  return acc / static_cast<double>(draws);
}

}  // namespace apmsqueeze
