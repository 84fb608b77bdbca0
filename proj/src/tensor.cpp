#include "tilenet/tensor.hpp"

#include <Eigen/Core>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace tilenet {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

ConstMap view(const Tensor& t) { return ConstMap(t.data(), t.rows(), t.cols()); }
MutMap view(Tensor& t) { return MutMap(t.data(), t.rows(), t.cols()); }

std::size_t extent_product(const Shape& shape) {
  if (shape.empty()) return 0;
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void check_shape(const Shape& shape) {
  for (auto e : shape) {
    if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_string(shape));
  }
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(extent_product(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  check_shape(shape_);
  if (extent_product(shape_) != data_.size()) {
    throw ShapeError("shape " + shape_string(shape_) + " does not match " +
                     std::to_string(data_.size()) + " values");
  }
}

Tensor Tensor::row(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({1, n}, std::move(values));
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void Tensor::add_in_place(const Tensor& other) {
  if (other.size() != size()) {
    throw ShapeError("add_in_place: " + shape_string(shape_) + " vs " +
                     shape_string(other.shape_));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
}

Tensor Tensor::reshaped(Shape shape) const {
  return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void matmul_into(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + shape_string(a.shape()) + " * " + shape_string(b.shape()));
  }
  if (!accumulate || c.empty()) {
    if (c.rows() != a.rows() || c.cols() != b.cols() || c.empty()) c = Tensor::matrix(a.rows(), b.cols());
    view(c).noalias() = view(a) * view(b);
  } else {
    view(c).noalias() += view(a) * view(b);
  }
}

void matmul_tn_into(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_tn: " + shape_string(a.shape()) + " * " + shape_string(b.shape()));
  }
  if (accumulate) {
    view(c).noalias() += view(a).transpose() * view(b);
  } else {
    view(c).noalias() = view(a).transpose() * view(b);
  }
}

void matmul_nt_into(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: " + shape_string(a.shape()) + " * " + shape_string(b.shape()));
  }
  if (accumulate) {
    view(c).noalias() += view(a) * view(b).transpose();
  } else {
    view(c).noalias() = view(a) * view(b).transpose();
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  Tensor c;
  matmul_into(a, b, c, false);
  return c;
}

}  // namespace tilenet
