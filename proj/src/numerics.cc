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

#include "apmsqueeze/numerics.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "apmsqueeze/errors.h"

namespace apmsqueeze {

void CheckSameLength(const DenseVector& a, const DenseVector& b,
                     const char* what) {
  if (a.size() != b.size()) {
    throw DimensionError(std::string(what) + ": length mismatch (" +
                         std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()) + ")");
  }
}

bool DenseVector::IsFinite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double x) { return std::isfinite(x); });
}

DenseVector& DenseVector::operator+=(const DenseVector& other) {
  CheckSameLength(*this, other, "operator+=");
  for (size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

DenseVector& DenseVector::operator-=(const DenseVector& other) {
  CheckSameLength(*this, other, "operator-=");
  for (size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

DenseVector& DenseVector::operator*=(double s) {
  for (double& x : data_) x *= s;
  return *this;
}

DenseVector operator+(DenseVector a, const DenseVector& b) { return a += b; }
DenseVector operator-(DenseVector a, const DenseVector& b) { return a -= b; }
DenseVector operator*(double s, DenseVector a) { return a *= s; }

DenseVector LinearCombination(double alpha, const DenseVector& a, double beta,
                              const DenseVector& b) {
  CheckSameLength(a, b, "LinearCombination");
  DenseVector out(a.size());
  for (size_t i = 0; i < a.size(); ++i) out[i] = alpha * a[i] + beta * b[i];
  return out;
}

DenseVector ElementwiseDivide(const DenseVector& a, const DenseVector& b,
                              double floor) {
  CheckSameLength(a, b, "ElementwiseDivide");
  if (!(floor > 0.0)) throw DomainError("ElementwiseDivide: floor must be > 0");
  DenseVector out(a.size());
  for (size_t i = 0; i < a.size(); ++i) out[i] = a[i] / std::max(b[i], floor);
  return out;
}

DenseVector ElementwiseMultiply(const DenseVector& a, const DenseVector& b) {
  CheckSameLength(a, b, "ElementwiseMultiply");
  DenseVector out(a.size());
  for (size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

DenseVector ElementwiseSquare(const DenseVector& a) {
  DenseVector out(a.size());
  for (size_t i = 0; i < a.size(); ++i) out[i] = a[i] * a[i];
  return out;
}

DenseVector ElementwiseSqrt(const DenseVector& a) {
  DenseVector out(a.size());
  for (size_t i = 0; i < a.size(); ++i) {
    if (!(a[i] >= 0.0)) {
      throw DomainError("ElementwiseSqrt: negative element at index " +
                        std::to_string(i));
    }
    out[i] = std::sqrt(a[i]);
  }
  return out;
}

double Dot(const DenseVector& a, const DenseVector& b) {
  CheckSameLength(a, b, "Dot");
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double SquaredNorm(const DenseVector& a) { return Dot(a, a); }

double L2Norm(const DenseVector& a) { return std::sqrt(SquaredNorm(a)); }

double MaxAbsDiff(const DenseVector& a, const DenseVector& b) {
  CheckSameLength(a, b, "MaxAbsDiff");
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

DenseVector Mean(std::span<const DenseVector> vectors) {
  if (vectors.empty()) throw DimensionError("Mean: no operands");
  DenseVector sum = vectors.front();
  for (size_t j = 1; j < vectors.size(); ++j) sum += vectors[j];
  sum *= 1.0 / static_cast<double>(vectors.size());
  return sum;
}

ChunkLayout MakeChunkLayout(size_t total_len, size_t n_chunks) {
  if (n_chunks == 0) throw ConfigError("MakeChunkLayout: n_chunks must be >= 1");
  ChunkLayout layout;
  layout.total_len_ = total_len;
  layout.chunks_.reserve(n_chunks);
  const size_t base = total_len / n_chunks;
  const size_t remainder = total_len % n_chunks;
  size_t start = 0;
  for (size_t k = 0; k < n_chunks; ++k) {
    const size_t len = base + (k < remainder ? 1 : 0);
    layout.chunks_.push_back({start, len});
    start += len;
  }
  return layout;
}

DenseVector ChunkLayout::Slice(const DenseVector& v, size_t k) const {
  if (v.size() != total_len_) {
    throw DimensionError("ChunkLayout::Slice: vector length " +
                         std::to_string(v.size()) + " != layout length " +
                         std::to_string(total_len_));
  }
  const ChunkRange& c = chunk(k);
  return DenseVector(v.span().subspan(c.start, c.length));
}

void ChunkLayout::Scatter(const DenseVector& piece, size_t k,
                          DenseVector& target) const {
  const ChunkRange& c = chunk(k);
  if (piece.size() != c.length || target.size() != total_len_) {
    throw DimensionError("ChunkLayout::Scatter: length mismatch");
  }
  std::copy(piece.begin(), piece.end(),
            target.begin() + static_cast<std::ptrdiff_t>(c.start));
}

DenseVector ChunkLayout::Concatenate(std::span<const DenseVector> pieces) const {
  if (pieces.size() != chunks_.size()) {
    throw DimensionError("ChunkLayout::Concatenate: wrong number of chunks");
  }
  DenseVector out(total_len_);
  for (size_t k = 0; k < pieces.size(); ++k) Scatter(pieces[k], k, out);
  return out;
}

}  // namespace apmsqueeze
