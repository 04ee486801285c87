#ifndef FLOWFORGE_WARP_HPP
#define FLOWFORGE_WARP_HPP

#include <algorithm>
#include <cmath>

#include "flowforge/grid.hpp"

namespace flowforge {

/// Bilinear interpolation coefficients for a sample point (x, y).
///
/// theta is the fractional part, theta_bar its complement. The ceil indices
/// are floor + 1 clamped to the last row/column: at the right or bottom edge
/// (x == W-1 exactly) theta is 0, so the clamped neighbor carries no weight.
/// The same floor + 1 neighbor gives the from-above directional derivative at
/// integer coordinates.
template <typename Real>
struct SampleCoeffs {
  Real theta_x;
  Real theta_y;
  Real theta_x_bar;
  Real theta_y_bar;
  int floor_x;
  int floor_y;
  int ceil_x;
  int ceil_y;
};

template <typename Real>
SampleCoeffs<Real> sample_coeffs(Real x, Real y, int width, int height) {
  SampleCoeffs<Real> s;
  const Real fx = std::floor(x);
  const Real fy = std::floor(y);
  s.floor_x = static_cast<int>(fx);
  s.floor_y = static_cast<int>(fy);
  s.theta_x = x - fx;
  s.theta_y = y - fy;
  s.theta_x_bar = Real(1) - s.theta_x;
  s.theta_y_bar = Real(1) - s.theta_y;
  s.ceil_x = std::min(s.floor_x + 1, width - 1);
  s.ceil_y = std::min(s.floor_y + 1, height - 1);
  return s;
}

/// Continuous image value at (x, y), one entry per channel.
/// Throws OutOfRange when (x, y) lies outside the valid region.
template <typename Scalar>
Eigen::Array<Scalar, Eigen::Dynamic, 1> bilinear_sample(const Grid<Scalar>& image, Scalar x, Scalar y) {
  const ValidRegion region{image.height(), image.width()};
  if (!region.contains(x, y)) {
    throw Error(ErrorCode::OutOfRange, "bilinear sample point outside the image");
  }
  const auto s = sample_coeffs(x, y, image.width(), image.height());
  Eigen::Array<Scalar, Eigen::Dynamic, 1> out(image.channels());
  for (int c = 0; c < image.channels(); ++c) {
    out[c] = s.theta_x_bar * s.theta_y_bar * image(s.floor_y, s.floor_x, c) +
             s.theta_x * s.theta_y_bar * image(s.floor_y, s.ceil_x, c) +
             s.theta_x_bar * s.theta_y * image(s.ceil_y, s.floor_x, c) +
             s.theta_x * s.theta_y * image(s.ceil_y, s.ceil_x, c);
  }
  return out;
}

template <typename Scalar>
struct WarpResult {
  Grid<Scalar> warped;
  Grid<Scalar> inside_mask;
};

template <typename Scalar>
struct WarpGradients {
  Grid<Scalar> grad_image;
  FlowField<Scalar> grad_flow;
};

namespace detail {

template <typename Scalar>
void check_warp_inputs(const Grid<Scalar>& image, const FlowField<Scalar>& flow) {
  if (image.height() != flow.height() || image.width() != flow.width()) {
    throw Error(ErrorCode::DimMismatch, "image and flow must share height and width");
  }
}

}  // namespace detail

/// J(x) = I~(x + w(x)) where x + w(x) lies in the image, 0 elsewhere.
template <typename Scalar>
WarpResult<Scalar> warp_forward(const Grid<Scalar>& image, const FlowField<Scalar>& flow) {
  detail::check_warp_inputs(image, flow);
  const int h = image.height();
  const int w = image.width();
  const int channels = image.channels();
  const ValidRegion region{h, w};
  WarpResult<Scalar> result{Grid<Scalar>(h, w, channels), Grid<Scalar>(h, w, 1)};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Scalar p = static_cast<Scalar>(x) + flow.u(y, x);
      const Scalar q = static_cast<Scalar>(y) + flow.v(y, x);
      if (!region.contains(p, q)) continue;
      result.inside_mask(y, x) = Scalar(1);
      const auto s = sample_coeffs(p, q, w, h);
      for (int c = 0; c < channels; ++c) {
        result.warped(y, x, c) = s.theta_x_bar * s.theta_y_bar * image(s.floor_y, s.floor_x, c) +
                                 s.theta_x * s.theta_y_bar * image(s.floor_y, s.ceil_x, c) +
                                 s.theta_x_bar * s.theta_y * image(s.ceil_y, s.floor_x, c) +
                                 s.theta_x * s.theta_y * image(s.ceil_y, s.ceil_x, c);
      }
    }
  }
  return result;
}

/// Reverse-mode derivative of warp_forward given the upstream gradient of the
/// warped image. Output pixels are visited in row-major order, so the scatter
/// into grad_image is bit-reproducible.
template <typename Scalar>
WarpGradients<Scalar> warp_backward(const Grid<Scalar>& image, const FlowField<Scalar>& flow,
                                    const Grid<Scalar>& upstream) {
  detail::check_warp_inputs(image, flow);
  if (!upstream.same_shape(image)) {
    throw Error(ErrorCode::DimMismatch, "upstream gradient must match the warped image shape");
  }
  const int h = image.height();
  const int w = image.width();
  const int channels = image.channels();
  const ValidRegion region{h, w};
  WarpGradients<Scalar> g{Grid<Scalar>(h, w, channels), FlowField<Scalar>(h, w)};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Scalar p = static_cast<Scalar>(x) + flow.u(y, x);
      const Scalar q = static_cast<Scalar>(y) + flow.v(y, x);
      if (!region.contains(p, q)) continue;
      const auto s = sample_coeffs(p, q, w, h);
      double du = 0.0;
      double dv = 0.0;
      for (int c = 0; c < channels; ++c) {
        const Scalar up = upstream(y, x, c);
        const Scalar i00 = image(s.floor_y, s.floor_x, c);
        const Scalar i10 = image(s.floor_y, s.ceil_x, c);
        const Scalar i01 = image(s.ceil_y, s.floor_x, c);
        const Scalar i11 = image(s.ceil_y, s.ceil_x, c);
        du += static_cast<double>(up) * (-s.theta_y_bar * i00 + s.theta_y_bar * i10 -
                                         s.theta_y * i01 + s.theta_y * i11);
        dv += static_cast<double>(up) * (-s.theta_x_bar * i00 - s.theta_x * i10 +
                                         s.theta_x_bar * i01 + s.theta_x * i11);
        g.grad_image(s.floor_y, s.floor_x, c) += s.theta_x_bar * s.theta_y_bar * up;
        g.grad_image(s.floor_y, s.ceil_x, c) += s.theta_x * s.theta_y_bar * up;
        g.grad_image(s.ceil_y, s.floor_x, c) += s.theta_x_bar * s.theta_y * up;
        g.grad_image(s.ceil_y, s.ceil_x, c) += s.theta_x * s.theta_y * up;
      }
      g.grad_flow.u(y, x) = static_cast<Scalar>(du);
      g.grad_flow.v(y, x) = static_cast<Scalar>(dv);
    }
  }
  return g;
}

/// Per-pixel Euclidean distance over channels between `warped` and `i1`, or
/// its square when `squared` is set.
template <typename Scalar>
Grid<Scalar> brightness_error(const Grid<Scalar>& i1, const Grid<Scalar>& warped, bool squared = false) {
  if (!i1.same_shape(warped)) {
    throw Error(ErrorCode::DimMismatch, "brightness error inputs must have identical shape");
  }
  Grid<Scalar> out(i1.height(), i1.width(), 1);
  const auto a = i1.matrix();
  const auto b = warped.matrix();
  for (Eigen::Index i = 0; i < out.pixels(); ++i) {
    double sum = 0.0;
    for (int c = 0; c < i1.channels(); ++c) {
      const double d = static_cast<double>(b(i, c)) - static_cast<double>(a(i, c));
      sum += d * d;
    }
    out.data()[i] = static_cast<Scalar>(squared ? sum : std::sqrt(sum));
  }
  return out;
}

}  // namespace flowforge

#endif  // FLOWFORGE_WARP_HPP
