#pragma once

#include <algorithm>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mslabel/error.hpp"

namespace mslabel {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

std::string shape_string(const Shape& shape);

/// Dense row-major tensor. Activations use (channels, height, width); conv
/// weights use (out, in, k, k); vectors use (n).
template <typename Scalar>
class Tensor {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatrixMap = Eigen::Map<RowMatrix>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix>;

  Tensor() = default;
  explicit Tensor(Shape shape, Scalar fill = Scalar(0)) : shape_(std::move(shape)) {
    for (auto d : shape_) require(d >= 0, ErrorCategory::shape, "negative tensor dimension");
    data_ = Array::Constant(product(shape_), fill);
  }

  static Tensor chw(Index c, Index h, Index w, Scalar fill = Scalar(0)) {
    return Tensor({c, h, w}, fill);
  }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  Index dim(int i) const { return shape_.at(i); }
  Index size() const { return data_.size(); }

  Index channels() const { return shape_.at(0); }
  Index height() const { return shape_.at(1); }
  Index width() const { return shape_.at(2); }
  Index plane_size() const { return shape_.at(1) * shape_.at(2); }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  Array& array() { return data_; }
  const Array& array() const { return data_; }

  Scalar& operator()(Index c, Index y, Index x) { return data_[(c * shape_[1] + y) * shape_[2] + x]; }
  Scalar operator()(Index c, Index y, Index x) const {
    return data_[(c * shape_[1] + y) * shape_[2] + x];
  }

  /// View as a matrix with dim(0) rows and everything else flattened.
  MatrixMap matrix() { return MatrixMap(data(), shape_.at(0), size() / std::max<Index>(1, shape_.at(0))); }
  ConstMatrixMap matrix() const {
    return ConstMatrixMap(data(), shape_.at(0), size() / std::max<Index>(1, shape_.at(0)));
  }

  template <typename To>
  Tensor<To> cast() const {
    Tensor<To> out(shape_);
    out.array() = data_.template cast<To>();
    return out;
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  static Index product(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
  }

 private:
  Shape shape_;
  Array data_;
};

inline std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

}  // namespace mslabel
