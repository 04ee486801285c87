#ifndef FLOWFORGE_RESAMPLE_HPP
#define FLOWFORGE_RESAMPLE_HPP

#include "flowforge/grid.hpp"

namespace flowforge {

/// Nearest-neighbor upsampling by an integer factor. Flow values are copied,
/// not rescaled.
template <typename Scalar>
Grid<Scalar> upsample_nn(const Grid<Scalar>& grid, int factor) {
  if (factor < 1) throw Error(ErrorCode::BadDims, "upsample factor must be >= 1");
  const int c = grid.channels();
  Grid<Scalar> out(grid.height() * factor, grid.width() * factor, c);
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      for (int k = 0; k < c; ++k) out(y, x, k) = grid(y / factor, x / factor, k);
    }
  }
  return out;
}

/// Box average over non-overlapping factor x factor blocks. Throws BadDims when
/// the grid is not divisible by the factor.
template <typename Scalar>
Grid<Scalar> downsample_avg(const Grid<Scalar>& grid, int factor) {
  if (factor < 1 || grid.height() % factor != 0 || grid.width() % factor != 0) {
    throw Error(ErrorCode::BadDims, "grid dimensions not divisible by downsample factor");
  }
  const int c = grid.channels();
  Grid<Scalar> out(grid.height() / factor, grid.width() / factor, c);
  const double inv = 1.0 / (static_cast<double>(factor) * factor);
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      for (int k = 0; k < c; ++k) {
        double sum = 0.0;
        for (int dy = 0; dy < factor; ++dy) {
          for (int dx = 0; dx < factor; ++dx) sum += grid(y * factor + dy, x * factor + dx, k);
        }
        out(y, x, k) = static_cast<Scalar>(sum * inv);
      }
    }
  }
  return out;
}

/// Start of the source bin that output cell `i` of `out` averages over.
inline int bin_start(int i, int in, int out) {
  return static_cast<int>((static_cast<long long>(i) * in) / out);
}

/// Box average onto an arbitrary smaller resolution. Output cell i covers the
/// source rows [floor(i*H/h), floor((i+1)*H/h)); identical to downsample_avg
/// when the sizes divide evenly.
template <typename Scalar>
Grid<Scalar> downsample_to(const Grid<Scalar>& grid, int out_height, int out_width) {
  if (out_height < 1 || out_width < 1 || out_height > grid.height() || out_width > grid.width()) {
    throw Error(ErrorCode::BadDims, "downsample target must be positive and not larger than the source");
  }
  const int c = grid.channels();
  Grid<Scalar> out(out_height, out_width, c);
  for (int y = 0; y < out_height; ++y) {
    const int y0 = bin_start(y, grid.height(), out_height);
    const int y1 = bin_start(y + 1, grid.height(), out_height);
    for (int x = 0; x < out_width; ++x) {
      const int x0 = bin_start(x, grid.width(), out_width);
      const int x1 = bin_start(x + 1, grid.width(), out_width);
      const double inv = 1.0 / (static_cast<double>(y1 - y0) * (x1 - x0));
      for (int k = 0; k < c; ++k) {
        double sum = 0.0;
        for (int sy = y0; sy < y1; ++sy) {
          for (int sx = x0; sx < x1; ++sx) sum += grid(sy, sx, k);
        }
        out(y, x, k) = static_cast<Scalar>(sum * inv);
      }
    }
  }
  return out;
}

}  // namespace flowforge

#endif  // FLOWFORGE_RESAMPLE_HPP
