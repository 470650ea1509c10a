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

#ifndef APMSQUEEZE_NUMERICS_H_
#define APMSQUEEZE_NUMERICS_H_

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace apmsqueeze {

/// Flat float64 buffer carrying parameters, gradients, momenta, variances
/// and compression residuals.
class DenseVector {
 public:
  DenseVector() = default;
  explicit DenseVector(size_t len, double fill = 0.0) : data_(len, fill) {}
  DenseVector(std::initializer_list<double> values) : data_(values) {}
  explicit DenseVector(std::vector<double> values) : data_(std::move(values)) {}
  explicit DenseVector(std::span<const double> values)
      : data_(values.begin(), values.end()) {}

  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator[](size_t i) { return data_[i]; }
  double operator[](size_t i) const { return data_[i]; }

  std::span<double> span() { return data_; }
  std::span<const double> span() const { return data_; }
  const std::vector<double>& values() const { return data_; }

  auto begin() { return data_.begin(); }
  auto end() { return data_.end(); }
  auto begin() const { return data_.begin(); }
  auto end() const { return data_.end(); }

  bool IsFinite() const;

  DenseVector& operator+=(const DenseVector& other);
  DenseVector& operator-=(const DenseVector& other);
  DenseVector& operator*=(double s);

  friend bool operator==(const DenseVector&, const DenseVector&) = default;

 private:
  std::vector<double> data_;
};

DenseVector operator+(DenseVector a, const DenseVector& b);
DenseVector operator-(DenseVector a, const DenseVector& b);
DenseVector operator*(double s, DenseVector a);

// a * alpha + b * beta, elementwise.
DenseVector LinearCombination(double alpha, const DenseVector& a, double beta,
                              const DenseVector& b);

// result[i] = a[i] / max(b[i], floor). floor must be positive.
DenseVector ElementwiseDivide(const DenseVector& a, const DenseVector& b,
                              double floor);
DenseVector ElementwiseMultiply(const DenseVector& a, const DenseVector& b);
DenseVector ElementwiseSquare(const DenseVector& a);
// Throws DomainError on any negative element.
DenseVector ElementwiseSqrt(const DenseVector& a);

double Dot(const DenseVector& a, const DenseVector& b);
double SquaredNorm(const DenseVector& a);
double L2Norm(const DenseVector& a);
// Largest |a[i] - b[i]|; 0 for empty operands.
double MaxAbsDiff(const DenseVector& a, const DenseVector& b);

// Arithmetic mean of equal-length vectors, accumulated in index order.
DenseVector Mean(std::span<const DenseVector> vectors);

// Throws DimensionError unless a and b have equal lengths.
void CheckSameLength(const DenseVector& a, const DenseVector& b,
                     const char* what);

struct ChunkRange {
  size_t start = 0;
  size_t length = 0;
};

/// Contiguous partition of [0, total_len) into n chunks whose lengths differ
/// by at most one; the first total_len % n chunks carry the extra element.
class ChunkLayout {
 public:
  ChunkLayout() = default;

  size_t total_len() const { return total_len_; }
  size_t n_chunks() const { return chunks_.size(); }
  const ChunkRange& chunk(size_t k) const { return chunks_.at(k); }
  const std::vector<ChunkRange>& chunks() const { return chunks_; }

  DenseVector Slice(const DenseVector& v, size_t k) const;
  // Writes `piece` into chunk k of `target`.
  void Scatter(const DenseVector& piece, size_t k, DenseVector& target) const;
  DenseVector Concatenate(std::span<const DenseVector> pieces) const;

 private:
  friend ChunkLayout MakeChunkLayout(size_t total_len, size_t n_chunks);

  size_t total_len_ = 0;
  std::vector<ChunkRange> chunks_;
};

// Throws ConfigError when n_chunks == 0.
ChunkLayout MakeChunkLayout(size_t total_len, size_t n_chunks);

}  // namespace apmsqueeze

#endif  // APMSQUEEZE_NUMERICS_H_
