#ifndef FLOWFORGE_TENSOR_HPP
#define FLOWFORGE_TENSOR_HPP

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "flowforge/grid.hpp"

namespace flowforge {

/// N x H x W x C, row-major.
struct Shape {
  int n = 1;
  int h = 1;
  int w = 1;
  int c = 1;

  Eigen::Index size() const { return static_cast<Eigen::Index>(n) * h * w * c; }
  Eigen::Index item_size() const { return static_cast<Eigen::Index>(h) * w * c; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& s);

/// Batched activation/gradient carrier: a Grid with a leading batch axis.
/// Parameters reuse the same layout, e.g. a conv weight is (k, k, Cin, Cout).
template <typename Scalar>
class Tensor {
 public:
  using value_type = Scalar;
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  Tensor() = default;
  explicit Tensor(Shape shape) : shape_(shape), data_(Array::Zero(shape.size())) {}
  Tensor(Shape shape, Array data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.size()) throw Error(ErrorCode::ShapeMismatch, "tensor data/shape size mismatch");
  }

  static Tensor from_grid(const Grid<Scalar>& g) {
    return Tensor({1, g.height(), g.width(), g.channels()}, g.data());
  }

  static Tensor from_grids(std::span<const Grid<Scalar>> grids) {
    if (grids.empty()) throw Error(ErrorCode::ShapeMismatch, "cannot batch zero grids");
    const auto& g0 = grids.front();
    Tensor t({static_cast<int>(grids.size()), g0.height(), g0.width(), g0.channels()});
    for (std::size_t i = 0; i < grids.size(); ++i) {
      if (!grids[i].same_shape(g0)) throw Error(ErrorCode::ShapeMismatch, "batched grids differ in shape");
      t.data_.segment(static_cast<Eigen::Index>(i) * t.shape_.item_size(), t.shape_.item_size()) = grids[i].data();
    }
    return t;
  }

  Grid<Scalar> item(int n) const {
    return Grid<Scalar>(shape_.h, shape_.w, shape_.c, data_.segment(n * shape_.item_size(), shape_.item_size()));
  }

  void set_item(int n, const Grid<Scalar>& g) {
    data_.segment(n * shape_.item_size(), shape_.item_size()) = g.data();
  }

  const Shape& shape() const { return shape_; }
  int n() const { return shape_.n; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  int c() const { return shape_.c; }
  Eigen::Index size() const { return data_.size(); }

  Eigen::Index index(int n, int y, int x, int c) const {
    return ((static_cast<Eigen::Index>(n) * shape_.h + y) * shape_.w + x) * shape_.c + c;
  }
  Scalar& operator()(int n, int y, int x, int c) { return data_[index(n, y, x, c)]; }
  Scalar operator()(int n, int y, int x, int c) const { return data_[index(n, y, x, c)]; }

  Array& data() { return data_; }
  const Array& data() const { return data_; }
  Scalar* item_ptr(int n) { return data_.data() + n * shape_.item_size(); }
  const Scalar* item_ptr(int n) const { return data_.data() + n * shape_.item_size(); }

  /// (h*w) x c view of batch item n.
  Eigen::Map<RowMatrix<Scalar>> item_matrix(int n) {
    return {item_ptr(n), static_cast<Eigen::Index>(shape_.h) * shape_.w, shape_.c};
  }
  Eigen::Map<const RowMatrix<Scalar>> item_matrix(int n) const {
    return {item_ptr(n), static_cast<Eigen::Index>(shape_.h) * shape_.w, shape_.c};
  }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, data_.template cast<Other>());
  }

 private:
  Shape shape_{0, 0, 0, 0};
  Array data_;
};

inline std::string to_string(const Shape& s) {
  return std::to_string(s.n) + "x" + std::to_string(s.h) + "x" + std::to_string(s.w) + "x" + std::to_string(s.c);
}

}  // namespace flowforge

#endif  // FLOWFORGE_TENSOR_HPP
