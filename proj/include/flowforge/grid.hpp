#ifndef FLOWFORGE_GRID_HPP
#define FLOWFORGE_GRID_HPP

#include <Eigen/Dense>

#include <cstddef>
#include <utility>

#include "flowforge/error.hpp"

namespace flowforge {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense height x width x channels array, row-major and channel-interleaved.
/// Images, feature maps, flow fields and their gradients all use this carrier.
template <typename Scalar>
class Grid {
 public:
  using Storage = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  Grid() = default;

  Grid(int height, int width, int channels) : height_(height), width_(width), channels_(channels) {
    check_dims(height, width, channels);
    data_ = Storage::Zero(static_cast<Eigen::Index>(height) * width * channels);
  }

  Grid(int height, int width, int channels, Storage data)
      : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
    check_dims(height, width, channels);
    if (data_.size() != static_cast<Eigen::Index>(height) * width * channels) {
      throw Error(ErrorCode::BadDims, "grid data length does not match height*width*channels");
    }
  }

  static Grid constant(int height, int width, int channels, Scalar value) {
    Grid g(height, width, channels);
    g.data_.setConstant(value);
    return g;
  }

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  Eigen::Index pixels() const { return static_cast<Eigen::Index>(height_) * width_; }
  Eigen::Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  Eigen::Index index(int y, int x, int c) const {
    return (static_cast<Eigen::Index>(y) * width_ + x) * channels_ + c;
  }

  Scalar& operator()(int y, int x, int c = 0) { return data_[index(y, x, c)]; }
  Scalar operator()(int y, int x, int c = 0) const { return data_[index(y, x, c)]; }

  Storage& data() { return data_; }
  const Storage& data() const { return data_; }

  /// (height*width) x channels row-major view.
  Eigen::Map<RowMatrix<Scalar>> matrix() { return {data_.data(), pixels(), channels_}; }
  Eigen::Map<const RowMatrix<Scalar>> matrix() const { return {data_.data(), pixels(), channels_}; }

  bool same_shape(const Grid& other) const {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }
  bool same_extent(const Grid& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

  bool all_finite() const { return data_.isFinite().all(); }

  template <typename Other>
  Grid<Other> cast() const {
    return Grid<Other>(height_, width_, channels_, data_.template cast<Other>());
  }

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.same_shape(b) && (a.data_ == b.data_).all();
  }

 private:
  static void check_dims(int height, int width, int channels) {
    if (height < 1 || width < 1 || channels < 1) {
      throw Error(ErrorCode::BadDims, "grid dimensions must be positive");
    }
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  Storage data_;
};

/// Per-pixel displacement (u, v) in pixels; u grows rightward, v downward.
template <typename Scalar>
class FlowField {
 public:
  FlowField() = default;
  FlowField(int height, int width) : grid_(height, width, 2) {}
  explicit FlowField(Grid<Scalar> grid) : grid_(std::move(grid)) {
    if (grid_.channels() != 2) {
      throw Error(ErrorCode::BadDims, "flow field requires exactly 2 channels");
    }
  }

  int height() const { return grid_.height(); }
  int width() const { return grid_.width(); }

  Scalar& u(int y, int x) { return grid_(y, x, 0); }
  Scalar u(int y, int x) const { return grid_(y, x, 0); }
  Scalar& v(int y, int x) { return grid_(y, x, 1); }
  Scalar v(int y, int x) const { return grid_(y, x, 1); }

  Grid<Scalar>& grid() { return grid_; }
  const Grid<Scalar>& grid() const { return grid_; }

  friend bool operator==(const FlowField& a, const FlowField& b) { return a.grid_ == b.grid_; }

 private:
  Grid<Scalar> grid_;
};

/// The set of valid sample coordinates of an image: 0 <= x <= W-1, 0 <= y <= H-1.
struct ValidRegion {
  int height = 0;
  int width = 0;

  template <typename Real>
  bool contains(Real x, Real y) const {
    return x >= Real(0) && y >= Real(0) && x <= Real(width - 1) && y <= Real(height - 1);
  }
};

using Gridf = Grid<float>;
using Gridd = Grid<double>;
using FlowFieldf = FlowField<float>;
using FlowFieldd = FlowField<double>;

}  // namespace flowforge

#endif  // FLOWFORGE_GRID_HPP
