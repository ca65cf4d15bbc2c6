// Copyright 2026 The FedPass Lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef FEDPASS_TENSOR_H_
#define FEDPASS_TENSOR_H_

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fedpass/errors.h"

namespace fedpass {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename Scalar>
using RowMatrix =
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using ColVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

inline Index NumElements(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1},
                         std::multiplies<Index>());
}

inline std::string ShapeString(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

// Dense row-major n-dimensional array. Storage is an Eigen column vector so
// that every tensor can be viewed as a matrix or vector without copying.
template <typename Scalar>
class BasicTensor {
 public:
  using Vector = ColVector<Scalar>;
  using MatrixMap = Eigen::Map<RowMatrix<Scalar>>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix<Scalar>>;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape)
      : shape_(std::move(shape)), data_(Vector::Zero(CheckedSize(shape_))) {}

  BasicTensor(Shape shape, Vector data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (CheckedSize(shape_) != data_.size()) {
      throw ShapeError("tensor of shape " + ShapeString(shape_) + " given " +
                       std::to_string(data_.size()) + " values");
    }
  }

  BasicTensor(Shape shape, std::initializer_list<Scalar> values)
      : BasicTensor(std::move(shape),
                    Vector(Eigen::Map<const Vector>(
                        values.begin(), static_cast<Index>(values.size())))) {}

  static BasicTensor Zeros(Shape shape) { return BasicTensor(std::move(shape)); }

  static BasicTensor Constant(Shape shape, Scalar value) {
    BasicTensor t(std::move(shape));
    t.data_.setConstant(value);
    return t;
  }

  const Shape& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index dim(Index axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  Index size() const { return data_.size(); }
  bool empty() const { return shape_.empty(); }

  Vector& vec() { return data_; }
  const Vector& vec() const { return data_; }
  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  std::span<Scalar> values() { return {data_.data(), static_cast<std::size_t>(data_.size())}; }
  std::span<const Scalar> values() const {
    return {data_.data(), static_cast<std::size_t>(data_.size())};
  }

  Scalar& operator[](Index i) { return data_[i]; }
  Scalar operator[](Index i) const { return data_[i]; }

  // Leading axis as rows, everything else flattened into columns.
  MatrixMap matrix() { return MatrixMap(data_.data(), LeadingDim(), TrailingSize()); }
  ConstMatrixMap matrix() const {
    return ConstMatrixMap(data_.data(), LeadingDim(), TrailingSize());
  }
  MatrixMap matrix(Index rows, Index cols) {
    CheckView(rows, cols);
    return MatrixMap(data_.data(), rows, cols);
  }
  ConstMatrixMap matrix(Index rows, Index cols) const {
    CheckView(rows, cols);
    return ConstMatrixMap(data_.data(), rows, cols);
  }

  BasicTensor Reshaped(Shape shape) const { return BasicTensor(std::move(shape), data_); }

  // Copies sample `i` along the leading axis.
  BasicTensor Row(Index i) const {
    Shape s(shape_.begin() + 1, shape_.end());
    Shape out{1};
    out.insert(out.end(), s.begin(), s.end());
    return BasicTensor(out, data_.segment(i * RowStride(), RowStride()));
  }

  bool AllFinite() const { return data_.allFinite(); }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  static Index CheckedSize(const Shape& shape) {
    for (Index d : shape) {
      if (d <= 0) throw ShapeError("non-positive dimension in " + ShapeString(shape));
    }
    return NumElements(shape);
  }

  Index LeadingDim() const { return shape_.empty() ? 0 : shape_.front(); }
  Index TrailingSize() const {
    return shape_.empty() ? 0 : data_.size() / shape_.front();
  }
  Index RowStride() const { return TrailingSize(); }

  void CheckView(Index rows, Index cols) const {
    if (rows * cols != data_.size()) {
      throw ShapeError("cannot view " + ShapeString(shape_) + " as " +
                       std::to_string(rows) + "x" + std::to_string(cols));
    }
  }

  Shape shape_;
  Vector data_;
};

using Tensor = BasicTensor<double>;
using Matrix = RowMatrix<double>;
using Vector = ColVector<double>;

template <typename Scalar>
Scalar MaxAbsDiff(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("MaxAbsDiff: " + ShapeString(a.shape()) + " vs " +
                     ShapeString(b.shape()));
  }
  if (a.size() == 0) return Scalar(0);
  return (a.vec() - b.vec()).cwiseAbs().maxCoeff();
}

// Gathers rows `indices` of the leading axis into a new tensor.
template <typename Scalar>
BasicTensor<Scalar> GatherRows(const BasicTensor<Scalar>& t,
                               std::span<const Index> indices) {
  const Index stride = t.size() / t.dim(0);
  Shape shape = t.shape();
  shape[0] = static_cast<Index>(indices.size());
  BasicTensor<Scalar> out(shape);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const Index i = indices[r];
    if (i < 0 || i >= t.dim(0)) {
      throw InvalidArgument("row index " + std::to_string(i) + " out of range");
    }
    out.vec().segment(static_cast<Index>(r) * stride, stride) =
        t.vec().segment(i * stride, stride);
  }
  return out;
}

}  // namespace fedpass

#endif  // FEDPASS_TENSOR_H_
