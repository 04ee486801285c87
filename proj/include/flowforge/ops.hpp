#ifndef FLOWFORGE_OPS_HPP
#define FLOWFORGE_OPS_HPP

#include <cmath>
#include <span>
#include <vector>

#include "flowforge/graph.hpp"
#include "flowforge/resample.hpp"
#include "flowforge/warp.hpp"

namespace flowforge {

/// Geometry of a square-kernel cross-correlation.
struct ConvGeometry {
  int kernel = 3;
  int stride = 1;
  int pad = 1;

  int out_size(int in) const { return (in + 2 * pad - kernel) / stride + 1; }
  /// Output size of the transposed operation (the input size that out_size maps back).
  int transposed_out_size(int in) const { return (in - 1) * stride - 2 * pad + kernel; }
};

namespace detail {

/// Unfolds an (h x w x c) image into rows of kernel patches: (ho*wo) x (k*k*c).
template <typename Scalar>
void im2col(const Scalar* in, int h, int w, int c, const ConvGeometry& g, int ho, int wo, RowMatrix<Scalar>& col) {
  const int k = g.kernel;
  col.resize(static_cast<Eigen::Index>(ho) * wo, static_cast<Eigen::Index>(k) * k * c);
  for (int oy = 0; oy < ho; ++oy) {
    for (int ox = 0; ox < wo; ++ox) {
      Scalar* row = col.data() + (static_cast<Eigen::Index>(oy) * wo + ox) * col.cols();
      for (int ky = 0; ky < k; ++ky) {
        const int iy = oy * g.stride - g.pad + ky;
        for (int kx = 0; kx < k; ++kx) {
          const int ix = ox * g.stride - g.pad + kx;
          Scalar* dst = row + (ky * k + kx) * c;
          if (iy < 0 || iy >= h || ix < 0 || ix >= w) {
            std::fill(dst, dst + c, Scalar(0));
          } else {
            const Scalar* src = in + (static_cast<Eigen::Index>(iy) * w + ix) * c;
            std::copy(src, src + c, dst);
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: scatters patch rows back onto an (h x w x c) image.
template <typename Scalar>
void col2im(const RowMatrix<Scalar>& col, int h, int w, int c, const ConvGeometry& g, int ho, int wo, Scalar* out) {
  const int k = g.kernel;
  for (int oy = 0; oy < ho; ++oy) {
    for (int ox = 0; ox < wo; ++ox) {
      const Scalar* row = col.data() + (static_cast<Eigen::Index>(oy) * wo + ox) * col.cols();
      for (int ky = 0; ky < k; ++ky) {
        const int iy = oy * g.stride - g.pad + ky;
        if (iy < 0 || iy >= h) continue;
        for (int kx = 0; kx < k; ++kx) {
          const int ix = ox * g.stride - g.pad + kx;
          if (ix < 0 || ix >= w) continue;
          const Scalar* src = row + (ky * k + kx) * c;
          Scalar* dst = out + (static_cast<Eigen::Index>(iy) * w + ix) * c;
          for (int ch = 0; ch < c; ++ch) dst[ch] += src[ch];
        }
      }
    }
  }
}

template <typename Scalar>
Eigen::Map<const RowMatrix<Scalar>> as_matrix(const Tensor<Scalar>& t, Eigen::Index rows, Eigen::Index cols) {
  return {t.data().data(), rows, cols};
}

template <typename Scalar>
Eigen::Map<RowMatrix<Scalar>> as_matrix(Tensor<Scalar>& t, Eigen::Index rows, Eigen::Index cols) {
  return {t.data().data(), rows, cols};
}

inline void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::ShapeMismatch, what);
}

}  // namespace detail

/// Cross-correlation with a (k, k, Cin, Cout) weight and Cout bias.
/// Output spatial size is (in + 2*pad - k) / stride + 1.
template <typename Scalar>
Var conv2d(Graph<Scalar>& g, Var x, Var weight, Var bias, int stride, int pad) {
  const auto& xs = g.value(x).shape();
  const auto& ws = g.value(weight).shape();
  detail::require(ws.n == ws.h, "conv weight must be square (k,k,Cin,Cout)");
  detail::require(ws.w == xs.c, "conv weight Cin " + std::to_string(ws.w) + " != input channels " + std::to_string(xs.c));
  detail::require(g.value(bias).size() == ws.c, "conv bias length must equal Cout");
  const ConvGeometry geo{ws.n, stride, pad};
  const int ho = geo.out_size(xs.h);
  const int wo = geo.out_size(xs.w);
  detail::require(ho >= 1 && wo >= 1, "conv output would be empty");
  const Eigen::Index kk = static_cast<Eigen::Index>(ws.n) * ws.n * ws.w;

  Tensor<Scalar> out({xs.n, ho, wo, ws.c});
  {
    const auto& xv = g.value(x);
    const auto W = detail::as_matrix(g.value(weight), kk, ws.c);
    const auto b = detail::as_matrix(g.value(bias), 1, ws.c);
    RowMatrix<Scalar> col;
    for (int n = 0; n < xs.n; ++n) {
      detail::im2col(xv.item_ptr(n), xs.h, xs.w, xs.c, geo, ho, wo, col);
      auto y = out.item_matrix(n);
      y.noalias() = col * W;
      y.rowwise() += b.row(0);
    }
  }

  return g.record(std::move(out), {x, weight, bias}, [=](Graph<Scalar>& gr, Var self) {
    const auto& gy = gr.grad_buffer(self);
    const auto& xv = gr.value(x);
    const auto W = detail::as_matrix(gr.value(weight), kk, ws.c);
    RowMatrix<Scalar> col;
    RowMatrix<Scalar> dcol;
    for (int n = 0; n < xs.n; ++n) {
      const auto dy = gy.item_matrix(n);
      if (gr.requires_grad(weight)) {
        detail::im2col(xv.item_ptr(n), xs.h, xs.w, xs.c, geo, ho, wo, col);
        detail::as_matrix(gr.grad_buffer(weight), kk, ws.c).noalias() += col.transpose() * dy;
      }
      if (gr.requires_grad(bias)) {
        detail::as_matrix(gr.grad_buffer(bias), 1, ws.c) += dy.colwise().sum();
      }
      if (gr.requires_grad(x)) {
        dcol.noalias() = dy * W.transpose();
        detail::col2im(dcol, xs.h, xs.w, xs.c, geo, ho, wo, gr.grad_buffer(x).item_ptr(n));
      }
    }
  });
}

/// Transposed convolution ("upconvolution"). `weight` has shape
/// (k, k, Cout, Cin): it is the weight of the stride-`stride` convolution
/// this op is the adjoint of, so forward here equals that conv's input
/// gradient. Output spatial size is (in - 1) * stride - 2*pad + k.
template <typename Scalar>
Var upconv2d(Graph<Scalar>& g, Var x, Var weight, Var bias, int stride, int pad) {
  const auto& xs = g.value(x).shape();
  const auto& ws = g.value(weight).shape();
  detail::require(ws.n == ws.h, "upconv weight must be square (k,k,Cout,Cin)");
  detail::require(ws.c == xs.c, "upconv weight Cin " + std::to_string(ws.c) + " != input channels " + std::to_string(xs.c));
  detail::require(g.value(bias).size() == ws.w, "upconv bias length must equal Cout");
  const ConvGeometry geo{ws.n, stride, pad};
  const int ho = geo.transposed_out_size(xs.h);
  const int wo = geo.transposed_out_size(xs.w);
  detail::require(geo.out_size(ho) == xs.h && geo.out_size(wo) == xs.w, "upconv geometry is not invertible");
  const int cout = ws.w;
  const Eigen::Index kk = static_cast<Eigen::Index>(ws.n) * ws.n * cout;

  Tensor<Scalar> out({xs.n, ho, wo, cout});
  {
    const auto& xv = g.value(x);
    const auto W = detail::as_matrix(g.value(weight), kk, xs.c);
    const auto b = detail::as_matrix(g.value(bias), 1, cout);
    RowMatrix<Scalar> col;
    for (int n = 0; n < xs.n; ++n) {
      col.noalias() = xv.item_matrix(n) * W.transpose();
      detail::col2im(col, ho, wo, cout, geo, xs.h, xs.w, out.item_ptr(n));
      out.item_matrix(n).rowwise() += b.row(0);
    }
  }

  return g.record(std::move(out), {x, weight, bias}, [=](Graph<Scalar>& gr, Var self) {
    const auto& gy = gr.grad_buffer(self);
    const auto& xv = gr.value(x);
    const auto W = detail::as_matrix(gr.value(weight), kk, xs.c);
    RowMatrix<Scalar> dcol;
    for (int n = 0; n < xs.n; ++n) {
      detail::im2col(gy.item_ptr(n), ho, wo, cout, geo, xs.h, xs.w, dcol);
      if (gr.requires_grad(x)) gr.grad_buffer(x).item_matrix(n).noalias() += dcol * W;
      if (gr.requires_grad(weight)) {
        detail::as_matrix(gr.grad_buffer(weight), kk, xs.c).noalias() += dcol.transpose() * xv.item_matrix(n);
      }
      if (gr.requires_grad(bias)) {
        detail::as_matrix(gr.grad_buffer(bias), 1, cout) += gy.item_matrix(n).colwise().sum();
      }
    }
  });
}

template <typename Scalar>
Var leaky_relu(Graph<Scalar>& g, Var x, Scalar slope) {
  if (!(slope >= Scalar(0) && slope < Scalar(1))) throw Error(ErrorCode::BadParams, "leaky slope must lie in [0,1)");
  const auto& xv = g.value(x);
  Tensor<Scalar> out(xv.shape(), (xv.data() >= Scalar(0)).select(xv.data(), slope * xv.data()));
  return g.record(std::move(out), {x}, [=](Graph<Scalar>& gr, Var self) {
    const auto& in = gr.value(x).data();
    const auto& gy = gr.grad_buffer(self).data();
    gr.grad_buffer(x).data() += (in >= Scalar(0)).select(gy, slope * gy);
  });
}

/// Channel concatenation in argument order.
template <typename Scalar>
Var concat(Graph<Scalar>& g, std::span<const Var> inputs) {
  detail::require(!inputs.empty(), "concat needs at least one input");
  const Shape s0 = g.value(inputs[0]).shape();
  int channels = 0;
  std::vector<int> offsets;
  for (Var v : inputs) {
    const auto& s = g.value(v).shape();
    detail::require(s.n == s0.n && s.h == s0.h && s.w == s0.w,
                    "concat inputs differ in N/H/W: " + to_string(s) + " vs " + to_string(s0));
    offsets.push_back(channels);
    channels += s.c;
  }
  Tensor<Scalar> out({s0.n, s0.h, s0.w, channels});
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto& t = g.value(inputs[i]);
    for (int n = 0; n < s0.n; ++n) out.item_matrix(n).middleCols(offsets[i], t.c()) = t.item_matrix(n);
  }
  std::vector<Var> ins(inputs.begin(), inputs.end());
  return g.record(std::move(out), ins, [ins, offsets](Graph<Scalar>& gr, Var self) {
    const auto& gy = gr.grad_buffer(self);
    for (std::size_t i = 0; i < ins.size(); ++i) {
      if (!gr.requires_grad(ins[i])) continue;
      auto& gx = gr.grad_buffer(ins[i]);
      for (int n = 0; n < gy.n(); ++n) gx.item_matrix(n) += gy.item_matrix(n).middleCols(offsets[i], gx.c());
    }
  });
}

template <typename Scalar>
Var concat(Graph<Scalar>& g, std::initializer_list<Var> inputs) {
  return concat(g, std::span<const Var>(inputs.begin(), inputs.size()));
}

/// Keeps the top-left (h x w) window.
template <typename Scalar>
Var crop(Graph<Scalar>& g, Var x, int h, int w) {
  const Shape s = g.value(x).shape();
  detail::require(h >= 1 && w >= 1 && h <= s.h && w <= s.w, "crop window exceeds input");
  if (h == s.h && w == s.w) return x;
  Tensor<Scalar> out({s.n, h, w, s.c});
  const auto& xv = g.value(x);
  for (int n = 0; n < s.n; ++n) {
    for (int y = 0; y < h; ++y) {
      for (int xx = 0; xx < w; ++xx) {
        for (int c = 0; c < s.c; ++c) out(n, y, xx, c) = xv(n, y, xx, c);
      }
    }
  }
  return g.record(std::move(out), {x}, [=](Graph<Scalar>& gr, Var self) {
    const auto& gy = gr.grad_buffer(self);
    auto& gx = gr.grad_buffer(x);
    for (int n = 0; n < s.n; ++n) {
      for (int y = 0; y < h; ++y) {
        for (int xx = 0; xx < w; ++xx) {
          for (int c = 0; c < s.c; ++c) gx(n, y, xx, c) += gy(n, y, xx, c);
        }
      }
    }
  });
}

/// Nearest-neighbor upsampling; values are copied, not rescaled.
template <typename Scalar>
Var upsample_nn(Graph<Scalar>& g, Var x, int factor) {
  if (factor == 1) return x;
  const Shape s = g.value(x).shape();
  Tensor<Scalar> out({s.n, s.h * factor, s.w * factor, s.c});
  for (int n = 0; n < s.n; ++n) out.set_item(n, upsample_nn(g.value(x).item(n), factor));
  return g.record(std::move(out), {x}, [=](Graph<Scalar>& gr, Var self) {
    const auto& gy = gr.grad_buffer(self);
    auto& gx = gr.grad_buffer(x);
    for (int n = 0; n < s.n; ++n) {
      for (int y = 0; y < s.h * factor; ++y) {
        for (int xx = 0; xx < s.w * factor; ++xx) {
          for (int c = 0; c < s.c; ++c) gx(n, y / factor, xx / factor, c) += gy(n, y, xx, c);
        }
      }
    }
  });
}

/// Box average onto (h x w); see downsample_to on Grid.
template <typename Scalar>
Var downsample_to(Graph<Scalar>& g, Var x, int h, int w) {
  const Shape s = g.value(x).shape();
  if (h == s.h && w == s.w) return x;
  Tensor<Scalar> out({s.n, h, w, s.c});
  for (int n = 0; n < s.n; ++n) out.set_item(n, downsample_to(g.value(x).item(n), h, w));
  return g.record(std::move(out), {x}, [=](Graph<Scalar>& gr, Var self) {
    const auto& gy = gr.grad_buffer(self);
    auto& gx = gr.grad_buffer(x);
    for (int n = 0; n < s.n; ++n) {
      for (int y = 0; y < h; ++y) {
        const int y0 = bin_start(y, s.h, h), y1 = bin_start(y + 1, s.h, h);
        for (int xx = 0; xx < w; ++xx) {
          const int x0 = bin_start(xx, s.w, w), x1 = bin_start(xx + 1, s.w, w);
          const Scalar inv = Scalar(1.0 / (static_cast<double>(y1 - y0) * (x1 - x0)));
          for (int c = 0; c < s.c; ++c) {
            const Scalar share = gy(n, y, xx, c) * inv;
            for (int sy = y0; sy < y1; ++sy) {
              for (int sx = x0; sx < x1; ++sx) gx(n, sy, sx, c) += share;
            }
          }
        }
      }
    }
  });
}

template <typename Scalar>
Var add(Graph<Scalar>& g, Var a, Var b) {
  detail::require(g.value(a).shape() == g.value(b).shape(), "add operands differ in shape");
  Tensor<Scalar> out(g.value(a).shape(), g.value(a).data() + g.value(b).data());
  return g.record(std::move(out), {a, b}, [=](Graph<Scalar>& gr, Var self) {
    const auto& gy = gr.grad_buffer(self).data();
    if (gr.requires_grad(a)) gr.grad_buffer(a).data() += gy;
    if (gr.requires_grad(b)) gr.grad_buffer(b).data() += gy;
  });
}

template <typename Scalar>
Var scale(Graph<Scalar>& g, Var x, Scalar k) {
  Tensor<Scalar> out(g.value(x).shape(), k * g.value(x).data());
  return g.record(std::move(out), {x}, [=](Graph<Scalar>& gr, Var self) {
    gr.grad_buffer(x).data() += k * gr.grad_buffer(self).data();
  });
}

/// Same value, no gradient flow.
template <typename Scalar>
Var detach(Graph<Scalar>& g, Var x) {
  return g.constant(g.value(x));
}

/// Batched warp_forward. With propagate_flow_grad = false the flow receives
/// an exactly zero gradient.
template <typename Scalar>
Var warp(Graph<Scalar>& g, Var image, Var flow, bool propagate_flow_grad = true) {
  const Shape is = g.value(image).shape();
  const Shape fs = g.value(flow).shape();
  detail::require(fs.c == 2, "warp flow must have 2 channels");
  detail::require(is.n == fs.n && is.h == fs.h && is.w == fs.w, "warp image/flow extents differ");
  Tensor<Scalar> out(is);
  for (int n = 0; n < is.n; ++n) {
    out.set_item(n, warp_forward(g.value(image).item(n), FlowField<Scalar>(g.value(flow).item(n))).warped);
  }
  return g.record(std::move(out), {image, flow}, [=](Graph<Scalar>& gr, Var self) {
    const auto& gy = gr.grad_buffer(self);
    const bool want_image = gr.requires_grad(image);
    const bool want_flow = propagate_flow_grad && gr.requires_grad(flow);
    if (!want_image && !want_flow) return;
    for (int n = 0; n < is.n; ++n) {
      const auto grads = warp_backward(gr.value(image).item(n), FlowField<Scalar>(gr.value(flow).item(n)), gy.item(n));
      if (want_image) gr.grad_buffer(image).item_matrix(n) += grads.grad_image.matrix();
      if (want_flow) gr.grad_buffer(flow).item_matrix(n) += grads.grad_flow.grid().matrix();
    }
  });
}

/// Per-pixel ||warped - i1|| over channels (squared when `squared`).
template <typename Scalar>
Var brightness_error(Graph<Scalar>& g, Var i1, Var warped, bool squared) {
  const Shape s = g.value(i1).shape();
  detail::require(s == g.value(warped).shape(), "brightness error inputs differ in shape");
  Tensor<Scalar> out({s.n, s.h, s.w, 1});
  for (int n = 0; n < s.n; ++n) {
    out.set_item(n, brightness_error(g.value(i1).item(n), g.value(warped).item(n), squared));
  }
  return g.record(std::move(out), {i1, warped}, [=](Graph<Scalar>& gr, Var self) {
    const auto& gy = gr.grad_buffer(self);
    const auto& e = gr.value(self);
    const auto& a = gr.value(i1);
    const auto& b = gr.value(warped);
    Tensor<Scalar> d(s);
    for (int n = 0; n < s.n; ++n) {
      for (int y = 0; y < s.h; ++y) {
        for (int x = 0; x < s.w; ++x) {
          const Scalar up = gy(n, y, x, 0);
          const Scalar ev = e(n, y, x, 0);
          for (int c = 0; c < s.c; ++c) {
            const Scalar diff = b(n, y, x, c) - a(n, y, x, c);
            if (squared) {
              d(n, y, x, c) = Scalar(2) * diff * up;
            } else {
              d(n, y, x, c) = ev > Scalar(0) ? diff / ev * up : Scalar(0);
            }
          }
        }
      }
    }
    if (gr.requires_grad(warped)) gr.grad_buffer(warped).data() += d.data();
    if (gr.requires_grad(i1)) gr.grad_buffer(i1).data() -= d.data();
  });
}

/// Per-pixel flow magnitude sqrt(u^2 + v^2).
template <typename Scalar>
Var magnitude(Graph<Scalar>& g, Var flow) {
  const Shape s = g.value(flow).shape();
  detail::require(s.c == 2, "magnitude expects a 2-channel flow");
  Tensor<Scalar> out({s.n, s.h, s.w, 1});
  const auto& f = g.value(flow);
  for (int n = 0; n < s.n; ++n) out.item_matrix(n) = f.item_matrix(n).rowwise().norm();
  return g.record(std::move(out), {flow}, [=](Graph<Scalar>& gr, Var self) {
    const auto& gy = gr.grad_buffer(self);
    const auto& m = gr.value(self);
    const auto& fv = gr.value(flow);
    auto& gx = gr.grad_buffer(flow);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      if (m.data()[i] == Scalar(0)) continue;
      const Scalar k = gy.data()[i] / m.data()[i];
      gx.data()[2 * i] += k * fv.data()[2 * i];
      gx.data()[2 * i + 1] += k * fv.data()[2 * i + 1];
    }
  });
}

/// Scalar <x, r> with double accumulation; a linear probe for gradient checks.
template <typename Scalar>
Var dot(Graph<Scalar>& g, Var x, const Tensor<Scalar>& r) {
  detail::require(g.value(x).shape() == r.shape(), "dot operands differ in shape");
  const double v = (g.value(x).data().template cast<double>() * r.data().template cast<double>()).sum();
  Tensor<Scalar> out({1, 1, 1, 1});
  out.data()[0] = static_cast<Scalar>(v);
  return g.record(std::move(out), {x}, [x, r](Graph<Scalar>& gr, Var self) {
    gr.grad_buffer(x).data() += gr.grad_buffer(self).data()[0] * r.data();
  });
}

/// Sum of scalar nodes.
template <typename Scalar>
Var sum_scalars(Graph<Scalar>& g, std::span<const Var> terms) {
  detail::require(!terms.empty(), "sum of zero terms");
  double v = 0.0;
  for (Var t : terms) v += static_cast<double>(g.value(t).data()[0]);
  Tensor<Scalar> out({1, 1, 1, 1});
  out.data()[0] = static_cast<Scalar>(v);
  std::vector<Var> ins(terms.begin(), terms.end());
  return g.record(std::move(out), ins, [ins](Graph<Scalar>& gr, Var self) {
    const Scalar up = gr.grad_buffer(self).data()[0];
    for (Var t : ins) {
      if (gr.requires_grad(t)) gr.grad_buffer(t).data()[0] += up;
    }
  });
}

}  // namespace flowforge

#endif  // FLOWFORGE_OPS_HPP
