#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "pagenet/errors.hpp"
#include "pagenet/nn/tensor.hpp"
#include "pagenet/raster.hpp"

namespace pagenet::nn {

enum class Activation { none, relu };

struct ConvLayerParams {
  int out_channels = 0;
  int in_channels = 0;
  int kernel = 0;
  std::vector<double> weights;  // (out, in, k, k) row-major
  std::vector<double> bias;     // (out)

  ConvLayerParams() = default;
  ConvLayerParams(int out, int in, int k)
      : out_channels(out), in_channels(in), kernel(k),
        weights(static_cast<std::size_t>(out) * in * k * k, 0.0), bias(out, 0.0) {
    if (k <= 0 || k % 2 == 0) throw ShapeMismatch("kernel size must be odd");
  }

  double& w(int o, int i, int ky, int kx) {
    return weights[((static_cast<std::size_t>(o) * in_channels + i) * kernel + ky) * kernel + kx];
  }
  double w(int o, int i, int ky, int kx) const {
    return weights[((static_cast<std::size_t>(o) * in_channels + i) * kernel + ky) * kernel + kx];
  }

  bool operator==(const ConvLayerParams&) const = default;
};

/// Same-padded multi-channel convolution plus bias, optionally followed by
/// ReLU. Output spatial size equals the input's.
inline Tensor4 conv_layer(const Tensor4& x, const ConvLayerParams& p, Activation act) {
  if (x.c() != p.in_channels) {
    throw ShapeMismatch("conv input has " + std::to_string(x.c()) + " channels, layer expects " +
                        std::to_string(p.in_channels));
  }
  const int H = x.h();
  const int W = x.w();
  const int pad = p.kernel / 2;
  Tensor4 out(x.n(), p.out_channels, H, W);
  for (int b = 0; b < x.n(); ++b) {
    for (int o = 0; o < p.out_channels; ++o) {
      double* dst = out.plane(b, o);
      std::fill(dst, dst + out.shape().plane(), p.bias[o]);
      for (int i = 0; i < p.in_channels; ++i) {
        const double* src = x.plane(b, i);
        for (int ky = 0; ky < p.kernel; ++ky) {
          const int dy = ky - pad;
          const int y0 = std::max(0, -dy);
          const int y1 = std::min(H, H - dy);
          for (int kx = 0; kx < p.kernel; ++kx) {
            const int dx = kx - pad;
            const int x0 = std::max(0, -dx);
            const int x1 = std::min(W, W - dx);
            const double wv = p.w(o, i, ky, kx);
            for (int y = y0; y < y1; ++y) {
              double* drow = dst + static_cast<std::size_t>(y) * W;
              const double* srow = src + static_cast<std::size_t>(y + dy) * W + dx;
              for (int xx = x0; xx < x1; ++xx) drow[xx] += wv * srow[xx];
            }
          }
        }
      }
      if (act == Activation::relu) {
        for (std::size_t k = 0; k < out.shape().plane(); ++k) dst[k] = std::max(0.0, dst[k]);
      }
    }
  }
  check_finite(out);
  return out;
}

// Zeroes gradient entries where the ReLU output was not positive.
inline void relu_backward(const Tensor4& activated, Tensor4& grad) {
  auto& g = grad.values();
  const auto& a = activated.values();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(a[i] > 0.0)) g[i] = 0.0;
  }
}

/// Backward pass of the convolution (pre-activation gradient `dout`).
/// Accumulates into `grad`; returns the gradient w.r.t. the input when
/// `want_input_grad` is set (otherwise an empty tensor).
inline Tensor4 conv_backward(const Tensor4& x, const ConvLayerParams& p, const Tensor4& dout,
                             ConvLayerParams& grad, bool want_input_grad = true) {
  const int H = x.h();
  const int W = x.w();
  const int pad = p.kernel / 2;
  Tensor4 dx = want_input_grad ? Tensor4(x.shape()) : Tensor4();
  for (int b = 0; b < x.n(); ++b) {
    for (int o = 0; o < p.out_channels; ++o) {
      const double* g = dout.plane(b, o);
      double bsum = 0.0;
      for (std::size_t k = 0; k < dout.shape().plane(); ++k) bsum += g[k];
      grad.bias[o] += bsum;
      for (int i = 0; i < p.in_channels; ++i) {
        const double* src = x.plane(b, i);
        double* dsrc = want_input_grad ? dx.plane(b, i) : nullptr;
        for (int ky = 0; ky < p.kernel; ++ky) {
          const int dy = ky - pad;
          const int y0 = std::max(0, -dy);
          const int y1 = std::min(H, H - dy);
          for (int kx = 0; kx < p.kernel; ++kx) {
            const int ddx = kx - pad;
            const int x0 = std::max(0, -ddx);
            const int x1 = std::min(W, W - ddx);
            const double wv = p.w(o, i, ky, kx);
            double acc = 0.0;
            for (int y = y0; y < y1; ++y) {
              const double* grow = g + static_cast<std::size_t>(y) * W;
              const double* srow = src + static_cast<std::size_t>(y + dy) * W + ddx;
              for (int xx = x0; xx < x1; ++xx) acc += grow[xx] * srow[xx];
              if (dsrc) {
                double* drow = dsrc + static_cast<std::size_t>(y + dy) * W + ddx;
                for (int xx = x0; xx < x1; ++xx) drow[xx] += wv * grow[xx];
              }
            }
            grad.w(o, i, ky, kx) += acc;
          }
        }
      }
    }
  }
  return dx;
}

inline Tensor4 avg_pool_2x2(const Tensor4& x) {
  if (x.h() % 2 != 0 || x.w() % 2 != 0) throw ShapeMismatch("avg_pool_2x2 needs even dimensions");
  Tensor4 out(x.n(), x.c(), x.h() / 2, x.w() / 2);
  for (int b = 0; b < x.n(); ++b) {
    for (int ch = 0; ch < x.c(); ++ch) {
      for (int y = 0; y < out.h(); ++y) {
        for (int xx = 0; xx < out.w(); ++xx) {
          out(b, ch, y, xx) = 0.25 * (x(b, ch, 2 * y, 2 * xx) + x(b, ch, 2 * y, 2 * xx + 1) +
                                      x(b, ch, 2 * y + 1, 2 * xx) + x(b, ch, 2 * y + 1, 2 * xx + 1));
        }
      }
    }
  }
  return out;
}

inline Tensor4 avg_pool_2x2_backward(const Tensor4& dout) {
  Tensor4 dx(dout.n(), dout.c(), dout.h() * 2, dout.w() * 2);
  for (int b = 0; b < dout.n(); ++b) {
    for (int ch = 0; ch < dout.c(); ++ch) {
      for (int y = 0; y < dx.h(); ++y) {
        for (int xx = 0; xx < dx.w(); ++xx) dx(b, ch, y, xx) = 0.25 * dout(b, ch, y / 2, xx / 2);
      }
    }
  }
  return dx;
}

/// Bilinear upsampling by an integer power-of-two factor with half-pixel
/// center alignment (the same mapping as image resizing).
inline Tensor4 upsample_bilinear(const Tensor4& x, int factor) {
  if (factor < 1 || (factor & (factor - 1)) != 0) {
    throw ShapeMismatch("upsampling factor must be a power of two");
  }
  if (factor == 1) return x;
  const int H = x.h() * factor;
  const int W = x.w() * factor;
  const auto ty = pagenet::detail::linear_taps(x.h(), H);
  const auto tx = pagenet::detail::linear_taps(x.w(), W);
  Tensor4 out(x.n(), x.c(), H, W);
  for (int b = 0; b < x.n(); ++b) {
    for (int ch = 0; ch < x.c(); ++ch) {
      for (int y = 0; y < H; ++y) {
        const auto& ry = ty[y];
        for (int xx = 0; xx < W; ++xx) {
          const auto& rx = tx[xx];
          const double top = (1.0 - rx.w_hi) * x(b, ch, ry.lo, rx.lo) + rx.w_hi * x(b, ch, ry.lo, rx.hi);
          const double bot = (1.0 - rx.w_hi) * x(b, ch, ry.hi, rx.lo) + rx.w_hi * x(b, ch, ry.hi, rx.hi);
          out(b, ch, y, xx) = (1.0 - ry.w_hi) * top + ry.w_hi * bot;
        }
      }
    }
  }
  return out;
}

// Adjoint of upsample_bilinear.
inline Tensor4 upsample_bilinear_backward(const Tensor4& dout, int factor) {
  if (factor == 1) return dout;
  const int h = dout.h() / factor;
  const int w = dout.w() / factor;
  const auto ty = pagenet::detail::linear_taps(h, dout.h());
  const auto tx = pagenet::detail::linear_taps(w, dout.w());
  Tensor4 dx(dout.n(), dout.c(), h, w);
  for (int b = 0; b < dout.n(); ++b) {
    for (int ch = 0; ch < dout.c(); ++ch) {
      for (int y = 0; y < dout.h(); ++y) {
        const auto& ry = ty[y];
        for (int xx = 0; xx < dout.w(); ++xx) {
          const auto& rx = tx[xx];
          const double g = dout(b, ch, y, xx);
          const double gt = (1.0 - ry.w_hi) * g;
          const double gb = ry.w_hi * g;
          dx(b, ch, ry.lo, rx.lo) += (1.0 - rx.w_hi) * gt;
          dx(b, ch, ry.lo, rx.hi) += rx.w_hi * gt;
          dx(b, ch, ry.hi, rx.lo) += (1.0 - rx.w_hi) * gb;
          dx(b, ch, ry.hi, rx.hi) += rx.w_hi * gb;
        }
      }
    }
  }
  return dx;
}

inline Tensor4 concat_channels(const std::vector<Tensor4>& parts) {
  int channels = 0;
  for (const auto& t : parts) {
    if (t.n() != parts[0].n() || t.h() != parts[0].h() || t.w() != parts[0].w()) {
      throw ShapeMismatch("concatenated tensors differ in batch or spatial size");
    }
    channels += t.c();
  }
  Tensor4 out(parts[0].n(), channels, parts[0].h(), parts[0].w());
  const std::size_t plane = out.shape().plane();
  for (int b = 0; b < out.n(); ++b) {
    int offset = 0;
    for (const auto& t : parts) {
      for (int ch = 0; ch < t.c(); ++ch) {
        std::copy_n(t.plane(b, ch), plane, out.plane(b, offset + ch));
      }
      offset += t.c();
    }
  }
  return out;
}

// Slice of channels [first, first + count).
inline Tensor4 slice_channels(const Tensor4& x, int first, int count) {
  Tensor4 out(x.n(), count, x.h(), x.w());
  for (int b = 0; b < x.n(); ++b) {
    for (int ch = 0; ch < count; ++ch) {
      std::copy_n(x.plane(b, first + ch), x.shape().plane(), out.plane(b, ch));
    }
  }
  return out;
}

/// Channel-wise softmax.
inline Tensor4 softmax_channels(const Tensor4& logits) {
  Tensor4 out(logits.shape());
  const std::size_t plane = logits.shape().plane();
  for (int b = 0; b < logits.n(); ++b) {
    for (std::size_t k = 0; k < plane; ++k) {
      double mx = -INFINITY;
      for (int ch = 0; ch < logits.c(); ++ch) mx = std::max(mx, logits.plane(b, ch)[k]);
      double sum = 0.0;
      for (int ch = 0; ch < logits.c(); ++ch) {
        const double e = std::exp(logits.plane(b, ch)[k] - mx);
        out.plane(b, ch)[k] = e;
        sum += e;
      }
      for (int ch = 0; ch < logits.c(); ++ch) out.plane(b, ch)[k] /= sum;
    }
  }
  return out;
}

}  // namespace pagenet::nn
