#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace stadv {

using Index = Eigen::Index;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using RowMatrixXd = RowMatrix<double>;

using Shape = std::vector<Index>;

inline Index shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// Dense row-major tensor. Storage is a 2-D matrix view of the logical shape:
// rows = product of all but the last dimension, cols = last dimension
// (rank 0 is 1x1, rank 1 is 1xk).
template <typename Scalar>
class Tensor {
 public:
  using Matrix = RowMatrix<Scalar>;

  Tensor() : shape_{}, values_(Matrix::Zero(1, 1)) {}

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    const auto [r, c] = view_dims(shape_);
    values_ = Matrix::Zero(r, c);
  }

  Tensor(Shape shape, Matrix values) : shape_(std::move(shape)), values_(std::move(values)) {
    const auto [r, c] = view_dims(shape_);
    if (values_.size() != shape_size(shape_)) {
      throw std::invalid_argument("Tensor: shape " + shape_string(shape_) + " does not match " +
                                  std::to_string(values_.size()) + " values");
    }
    if (values_.rows() != r || values_.cols() != c) values_.resize(r, c);
  }

  template <typename Derived>
  static Tensor from_matrix(const Eigen::MatrixBase<Derived>& m) {
    return Tensor({m.rows(), m.cols()}, Matrix(m));
  }

  static Tensor scalar(Scalar v) {
    Matrix m(1, 1);
    m(0, 0) = v;
    return Tensor(Shape{}, std::move(m));
  }

  static Tensor vector(const std::vector<Scalar>& v) {
    Matrix m(1, static_cast<Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) m(0, static_cast<Index>(i)) = v[i];
    return Tensor({static_cast<Index>(v.size())}, std::move(m));
  }

  const Shape& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index size() const { return values_.size(); }
  Index rows() const { return values_.rows(); }
  Index cols() const { return values_.cols(); }

  const Matrix& matrix() const { return values_; }
  Matrix& matrix() { return values_; }

  const Scalar* data() const { return values_.data(); }
  Scalar* data() { return values_.data(); }

  Scalar operator[](Index i) const { return values_.data()[i]; }
  Scalar& operator[](Index i) { return values_.data()[i]; }

  Scalar item() const {
    if (size() != 1) throw std::invalid_argument("Tensor::item on shape " + shape_string(shape_));
    return values_(0, 0);
  }

  bool all_finite() const { return values_.allFinite(); }

  Tensor reshaped(Shape shape) const {
    if (shape_size(shape) != size()) {
      throw std::invalid_argument("reshape: " + shape_string(shape_) + " -> " + shape_string(shape));
    }
    const auto [r, c] = view_dims(shape);
    Matrix m = Eigen::Map<const Matrix>(values_.data(), r, c);
    return Tensor(std::move(shape), std::move(m));
  }

  static std::pair<Index, Index> view_dims(const Shape& shape) {
    if (shape.empty()) return {1, 1};
    const Index cols = shape.back();
    Index rows = 1;
    for (std::size_t i = 0; i + 1 < shape.size(); ++i) rows *= shape[i];
    return {rows, cols};
  }

 private:
  Shape shape_;
  Matrix values_;
};

using TensorD = Tensor<double>;

}  // namespace stadv
