#pragma once

// Direct stride-1 convolution operators (square and 1-D), activations and
// pixel shuffle, each with an exact reverse-mode backward.
//
// Convention: all "convolutions" are cross-correlations (no kernel flip).
// Inner products accumulate in double in a fixed order per output element:
// bias, then input channel, then kernel row, then kernel column.

#include <lsk/error.hpp>
#include <lsk/tensor.hpp>

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace lsk {

enum class Padding { valid, same_zero };
enum class Orientation { vertical, horizontal };
enum class ActivationKind { identity, relu, tanh, sigmoid };

inline std::string to_string(ActivationKind kind) {
  switch (kind) {
    case ActivationKind::identity: return "id";
    case ActivationKind::relu: return "relu";
    case ActivationKind::tanh: return "tanh";
    case ActivationKind::sigmoid: return "sigmoid";
  }
  return "?";
}

inline ActivationKind parse_activation(const std::string& s) {
  if (s == "id" || s == "identity") return ActivationKind::identity;
  if (s == "relu") return ActivationKind::relu;
  if (s == "tanh") return ActivationKind::tanh;
  if (s == "sigmoid") return ActivationKind::sigmoid;
  fail(Errc::invalid_argument, "unknown activation '" + s + "'");
}

/// Square-kernel layer. weight dims are (c_out, c_in, k, k); an empty bias
/// means the layer has no bias term.
template <class T>
struct Conv2DLayer {
  BasicTensor4<T> weight;
  std::vector<T> bias;
  Padding padding = Padding::same_zero;

  std::size_t c_out() const { return weight.shape().n; }
  std::size_t c_in() const { return weight.shape().c; }
  std::size_t k() const { return weight.shape().h; }
  bool has_bias() const { return !bias.empty(); }

  void validate() const {
    const Shape4& s = weight.shape();
    require(s.h == s.w, Errc::invalid_layer, "square layer needs k x k weights, got " + s.str());
    require(s.h % 2 == 1, Errc::invalid_layer, "kernel size must be odd, got " + std::to_string(s.h));
    require(bias.empty() || bias.size() == s.n, Errc::invalid_layer,
            "bias length " + std::to_string(bias.size()) + " != c_out " + std::to_string(s.n));
  }
};

/// 1-D layer. weight dims are (c_out, c_in, 1, k) regardless of orientation;
/// the orientation decides whether the k taps run down rows or across columns.
template <class T>
struct Conv1DLayer {
  Orientation orientation = Orientation::vertical;
  BasicTensor4<T> weight;
  std::vector<T> bias;
  Padding padding = Padding::same_zero;

  std::size_t c_out() const { return weight.shape().n; }
  std::size_t c_in() const { return weight.shape().c; }
  std::size_t k() const { return weight.shape().w; }
  bool has_bias() const { return !bias.empty(); }

  T tap(std::size_t o, std::size_t i, std::size_t t) const { return weight(o, i, 0, t); }

  void validate() const {
    const Shape4& s = weight.shape();
    require(s.h == 1, Errc::invalid_layer, "1-D weights must be (c_out, c_in, 1, k), got " + s.str());
    require(s.w % 2 == 1, Errc::invalid_layer, "kernel size must be odd, got " + std::to_string(s.w));
    require(bias.empty() || bias.size() == s.n, Errc::invalid_layer,
            "bias length " + std::to_string(bias.size()) + " != c_out " + std::to_string(s.n));
  }
};

template <class T>
struct ConvGrads {
  BasicTensor4<T> grad_x;
  BasicTensor4<T> grad_w;
  std::vector<T> grad_b;  // empty when the layer has no bias
};

namespace detail {

/// Rectangular kernel geometry; weights are laid out (c_out, c_in, kh, kw).
struct Geometry {
  std::size_t kh, kw, ph, pw;
};

inline Geometry square_geometry(std::size_t k, Padding p) {
  const std::size_t pad = p == Padding::same_zero ? (k - 1) / 2 : 0;
  return {k, k, pad, pad};
}

inline Geometry line_geometry(Orientation o, std::size_t k, Padding p) {
  const std::size_t pad = p == Padding::same_zero ? (k - 1) / 2 : 0;
  if (o == Orientation::vertical) return {k, 1, pad, 0};
  return {1, k, 0, pad};
}

inline Shape4 output_shape(const Shape4& in, std::size_t c_out, const Geometry& g) {
  const bool fits = in.h + 2 * g.ph >= g.kh && in.w + 2 * g.pw >= g.kw;
  require(fits, Errc::invalid_shape,
          "input " + in.str() + " smaller than kernel " + std::to_string(g.kh) + "x" +
              std::to_string(g.kw));
  return {in.n, c_out, in.h + 2 * g.ph - g.kh + 1, in.w + 2 * g.pw - g.kw + 1};
}

// Valid output column range [x0, x1) for kernel column kx, so that the input
// column x + kx - pw lies inside [0, in_w).
inline void column_range(std::size_t kx, std::size_t pw, std::size_t in_w, std::size_t out_w,
                         std::size_t& x0, std::size_t& x1) {
  x0 = kx < pw ? pw - kx : 0;
  const std::size_t limit = in_w + pw - kx;  // x < limit
  x1 = std::min(out_w, limit);
  if (x1 < x0) x1 = x0;
}

template <class T>
BasicTensor4<T> correlate(const BasicTensor4<T>& x, std::span<const T> w, std::size_t c_out,
                          const Geometry& g, std::span<const T> bias) {
  const Shape4& in = x.shape();
  const Shape4 os = output_shape(in, c_out, g);
  BasicTensor4<T> out(os);
  std::vector<double> acc(os.w);
  for (std::size_t b = 0; b < in.n; ++b) {
    for (std::size_t o = 0; o < c_out; ++o) {
      for (std::size_t y = 0; y < os.h; ++y) {
        std::fill(acc.begin(), acc.end(), bias.empty() ? 0.0 : static_cast<double>(bias[o]));
        for (std::size_t ci = 0; ci < in.c; ++ci) {
          const T* wk = w.data() + (o * in.c + ci) * g.kh * g.kw;
          for (std::size_t ky = 0; ky < g.kh; ++ky) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + ky) - static_cast<std::ptrdiff_t>(g.ph);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in.h)) continue;
            const T* row = x.data().data() + x.offset(b, ci, static_cast<std::size_t>(iy), 0);
            for (std::size_t kx = 0; kx < g.kw; ++kx) {
              const double wv = wk[ky * g.kw + kx];
              std::size_t x0, x1;
              column_range(kx, g.pw, in.w, os.w, x0, x1);
              const T* src = row + (x0 + kx - g.pw);
              double* a = acc.data() + x0;
              for (std::size_t i = 0; i < x1 - x0; ++i) a[i] += wv * static_cast<double>(src[i]);
            }
          }
        }
        T* dst = out.data().data() + out.offset(b, o, y, 0);
        for (std::size_t xo = 0; xo < os.w; ++xo) dst[xo] = static_cast<T>(acc[xo]);
      }
    }
  }
  return out;
}

template <class T>
ConvGrads<T> correlate_backward(const BasicTensor4<T>& x, std::span<const T> w, std::size_t c_out,
                                const Geometry& g, bool has_bias, const BasicTensor4<T>& grad_out,
                                bool need_grad_x = true) {
  const Shape4& in = x.shape();
  const Shape4 os = output_shape(in, c_out, g);
  require(grad_out.shape() == os, Errc::shape_mismatch,
          "grad_out " + grad_out.shape().str() + " != forward output " + os.str());

  ConvGrads<T> grads{BasicTensor4<T>(in), BasicTensor4<T>(Shape4{c_out, in.c, g.kh, g.kw}), {}};

  if (has_bias) {
    grads.grad_b.resize(c_out);
    for (std::size_t o = 0; o < c_out; ++o) {
      double s = 0.0;
      for (std::size_t b = 0; b < in.n; ++b)
        for (T v : grad_out.plane(b, o)) s += static_cast<double>(v);
      grads.grad_b[o] = static_cast<T>(s);
    }
  }

  // dL/dw[o,ci,ky,kx] = sum_{b,y,x} gout[b,o,y,x] * x[b,ci,y+ky-ph,x+kx-pw]
  std::vector<double> lanes(os.w);
  for (std::size_t o = 0; o < c_out; ++o) {
    for (std::size_t ci = 0; ci < in.c; ++ci) {
      for (std::size_t ky = 0; ky < g.kh; ++ky) {
        for (std::size_t kx = 0; kx < g.kw; ++kx) {
          std::size_t x0, x1;
          column_range(kx, g.pw, in.w, os.w, x0, x1);
          // Per-column partial sums, reduced at the end in column order.
          std::fill(lanes.begin(), lanes.end(), 0.0);
          for (std::size_t b = 0; b < in.n; ++b) {
            for (std::size_t y = 0; y < os.h; ++y) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + ky) - static_cast<std::ptrdiff_t>(g.ph);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in.h)) continue;
              const T* src = x.data().data() + x.offset(b, ci, static_cast<std::size_t>(iy), 0) +
                             (x0 + kx - g.pw);
              const T* go = grad_out.data().data() + grad_out.offset(b, o, y, x0);
              for (std::size_t i = 0; i < x1 - x0; ++i)
                lanes[i] += static_cast<double>(go[i]) * static_cast<double>(src[i]);
            }
          }
          double s = 0.0;
          for (std::size_t i = 0; i < x1 - x0; ++i) s += lanes[i];
          grads.grad_w(o, ci, ky, kx) = static_cast<T>(s);
        }
      }
    }
  }

  if (!need_grad_x) return grads;

  // dL/dx[b,ci,iy,ix] = sum_{o,ky,kx} gout[b,o,iy-ky+ph,ix-kx+pw] * w[o,ci,ky,kx]
  std::vector<double> acc(in.h * in.w);
  for (std::size_t b = 0; b < in.n; ++b) {
    for (std::size_t ci = 0; ci < in.c; ++ci) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t o = 0; o < c_out; ++o) {
        const T* wk = w.data() + (o * in.c + ci) * g.kh * g.kw;
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
          for (std::size_t kx = 0; kx < g.kw; ++kx) {
            const double wv = wk[ky * g.kw + kx];
            std::size_t x0, x1;
            column_range(kx, g.pw, in.w, os.w, x0, x1);
            for (std::size_t y = 0; y < os.h; ++y) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + ky) - static_cast<std::ptrdiff_t>(g.ph);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in.h)) continue;
              double* dst = acc.data() + static_cast<std::size_t>(iy) * in.w + (x0 + kx - g.pw);
              const T* go = grad_out.data().data() + grad_out.offset(b, o, y, x0);
              for (std::size_t i = 0; i < x1 - x0; ++i) dst[i] += wv * static_cast<double>(go[i]);
            }
          }
        }
      }
      auto gx = grads.grad_x.plane(b, ci);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = static_cast<T>(acc[i]);
    }
  }
  return grads;
}

}  // namespace detail

template <class T>
BasicTensor4<T> conv2d_forward(const BasicTensor4<T>& x, const Conv2DLayer<T>& layer) {
  layer.validate();
  require(x.shape().c == layer.c_in(), Errc::shape_mismatch,
          "input has " + std::to_string(x.shape().c) + " channels, layer expects " +
              std::to_string(layer.c_in()));
  return detail::correlate<T>(x, layer.weight.data(), layer.c_out(),
                              detail::square_geometry(layer.k(), layer.padding), layer.bias);
}

template <class T>
BasicTensor4<T> conv1d_forward(const BasicTensor4<T>& x, const Conv1DLayer<T>& layer) {
  layer.validate();
  require(x.shape().c == layer.c_in(), Errc::shape_mismatch,
          "input has " + std::to_string(x.shape().c) + " channels, layer expects " +
              std::to_string(layer.c_in()));
  return detail::correlate<T>(x, layer.weight.data(), layer.c_out(),
                              detail::line_geometry(layer.orientation, layer.k(), layer.padding),
                              layer.bias);
}

/// grad_w has the same dims as layer.weight. With need_grad_x false, grad_x
/// is left zero.
template <class T>
ConvGrads<T> conv_backward(const BasicTensor4<T>& x, const Conv2DLayer<T>& layer,
                           const BasicTensor4<T>& grad_out, bool need_grad_x = true) {
  layer.validate();
  require(x.shape().c == layer.c_in(), Errc::shape_mismatch, "input channel mismatch");
  return detail::correlate_backward<T>(x, layer.weight.data(), layer.c_out(),
                                       detail::square_geometry(layer.k(), layer.padding),
                                       layer.has_bias(), grad_out, need_grad_x);
}

template <class T>
ConvGrads<T> conv_backward(const BasicTensor4<T>& x, const Conv1DLayer<T>& layer,
                           const BasicTensor4<T>& grad_out, bool need_grad_x = true) {
  layer.validate();
  require(x.shape().c == layer.c_in(), Errc::shape_mismatch, "input channel mismatch");
  auto grads = detail::correlate_backward<T>(
      x, layer.weight.data(), layer.c_out(),
      detail::line_geometry(layer.orientation, layer.k(), layer.padding), layer.has_bias(), grad_out,
      need_grad_x);
  grads.grad_w = grads.grad_w.reshaped(layer.weight.shape());
  return grads;
}

template <class T>
T activate(ActivationKind kind, T v) {
  switch (kind) {
    case ActivationKind::identity: return v;
    case ActivationKind::relu: return v > T(0) ? v : T(0);
    case ActivationKind::tanh: return std::tanh(v);
    case ActivationKind::sigmoid: return T(1) / (T(1) + std::exp(-v));
  }
  return v;
}

/// Derivative at pre-activation value v. relu'(0) is taken as 0.
template <class T>
T activate_derivative(ActivationKind kind, T v) {
  switch (kind) {
    case ActivationKind::identity: return T(1);
    case ActivationKind::relu: return v > T(0) ? T(1) : T(0);
    case ActivationKind::tanh: {
      const T t = std::tanh(v);
      return T(1) - t * t;
    }
    case ActivationKind::sigmoid: {
      const T s = T(1) / (T(1) + std::exp(-v));
      return s * (T(1) - s);
    }
  }
  return T(1);
}

template <class T>
BasicTensor4<T> activation_forward(const BasicTensor4<T>& x, ActivationKind kind) {
  if (kind == ActivationKind::identity) return x;
  BasicTensor4<T> out = x;
  for (T& v : out.data()) v = activate(kind, v);
  return out;
}

/// x is the activation's input, grad_out the upstream gradient.
template <class T>
BasicTensor4<T> activation_backward(const BasicTensor4<T>& x, ActivationKind kind,
                                    const BasicTensor4<T>& grad_out) {
  require(x.shape() == grad_out.shape(), Errc::shape_mismatch, "activation grad shape mismatch");
  if (kind == ActivationKind::identity) return grad_out;
  BasicTensor4<T> out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i)
    out.data()[i] = activate_derivative(kind, x.data()[i]) * grad_out.data()[i];
  return out;
}

/// out[b, c, y*r+i, x*r+j] = in[b, c*r*r + i*r + j, y, x]
template <class T>
BasicTensor4<T> pixel_shuffle(const BasicTensor4<T>& x, std::size_t r) {
  const Shape4& s = x.shape();
  require(r >= 1 && s.c % (r * r) == 0, Errc::invalid_shape,
          "pixel_shuffle: channels " + std::to_string(s.c) + " not divisible by r^2 for r=" +
              std::to_string(r));
  const std::size_t oc = s.c / (r * r);
  BasicTensor4<T> out(Shape4{s.n, oc, s.h * r, s.w * r});
  for (std::size_t b = 0; b < s.n; ++b)
    for (std::size_t c = 0; c < oc; ++c)
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < r; ++j)
          for (std::size_t y = 0; y < s.h; ++y)
            for (std::size_t xx = 0; xx < s.w; ++xx)
              out(b, c, y * r + i, xx * r + j) = x(b, c * r * r + i * r + j, y, xx);
  return out;
}

/// Inverse index map of pixel_shuffle; also its exact backward.
template <class T>
BasicTensor4<T> pixel_unshuffle(const BasicTensor4<T>& x, std::size_t r) {
  const Shape4& s = x.shape();
  require(r >= 1 && s.h % r == 0 && s.w % r == 0, Errc::invalid_shape,
          "pixel_unshuffle: spatial dims " + s.str() + " not divisible by r=" + std::to_string(r));
  BasicTensor4<T> out(Shape4{s.n, s.c * r * r, s.h / r, s.w / r});
  for (std::size_t b = 0; b < s.n; ++b)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < r; ++j)
          for (std::size_t y = 0; y < s.h / r; ++y)
            for (std::size_t xx = 0; xx < s.w / r; ++xx)
              out(b, c * r * r + i * r + j, y, xx) = x(b, c, y * r + i, xx * r + j);
  return out;
}

}  // namespace lsk
