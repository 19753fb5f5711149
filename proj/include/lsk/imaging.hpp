#pragma once

// Luminance planes, bicubic resampling, LR degradation, PSNR/SSIM and patch
// extraction. Planes hold samples on the [0, 255] scale unless noted.

#include <lsk/error.hpp>
#include <lsk/tensor.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace lsk {

/// 8-bit interleaved image, channels 1 (gray) or 3 (rgb).
struct ImageU8 {
  std::size_t w = 0;
  std::size_t h = 0;
  std::size_t channels = 1;
  std::vector<std::uint8_t> data;

  friend bool operator==(const ImageU8&, const ImageU8&) = default;
};

struct PlaneF {
  std::size_t w = 0;
  std::size_t h = 0;
  std::vector<float> data;

  PlaneF() = default;
  PlaneF(std::size_t width, std::size_t height, float fill = 0.0f)
      : w(width), h(height), data(width * height, fill) {}

  float& at(std::size_t x, std::size_t y) { return data[y * w + x]; }
  float at(std::size_t x, std::size_t y) const { return data[y * w + x]; }

  friend bool operator==(const PlaneF&, const PlaneF&) = default;
};

/// BT.601 studio-swing luma on [0, 255]: Y = 16 + (65.481 R + 128.553 G + 24.966 B) / 255.
/// Gray images pass through unchanged.
inline PlaneF rgb_to_y(const ImageU8& img) {
  require(img.channels == 1 || img.channels == 3, Errc::unsupported_format,
          "rgb_to_y expects 1 or 3 channels, got " + std::to_string(img.channels));
  require(img.data.size() == img.w * img.h * img.channels, Errc::invalid_shape, "image data length");
  PlaneF out(img.w, img.h);
  for (std::size_t i = 0; i < img.w * img.h; ++i) {
    if (img.channels == 1) {
      out.data[i] = img.data[i];
    } else {
      const double r = img.data[3 * i], g = img.data[3 * i + 1], b = img.data[3 * i + 2];
      out.data[i] = static_cast<float>(16.0 + (65.481 * r + 128.553 * g + 24.966 * b) / 255.0);
    }
  }
  return out;
}

/// Rounds and clamps a [0, 255] plane into a gray image.
inline ImageU8 to_image(const PlaneF& p) {
  ImageU8 img{p.w, p.h, 1, std::vector<std::uint8_t>(p.w * p.h)};
  for (std::size_t i = 0; i < p.data.size(); ++i)
    img.data[i] = static_cast<std::uint8_t>(std::clamp(std::lround(p.data[i]), 0l, 255l));
  return img;
}

/// Tensor (1, 1, h, w) from a plane, multiplied by `gain`.
template <class T = float>
BasicTensor4<T> plane_to_tensor(const PlaneF& p, double gain = 1.0 / 255.0) {
  BasicTensor4<T> t(Shape4{1, 1, p.h, p.w});
  for (std::size_t i = 0; i < p.data.size(); ++i) t.data()[i] = static_cast<T>(p.data[i] * gain);
  return t;
}

/// Plane from channel c of batch item b, multiplied by `gain`.
template <class T>
PlaneF tensor_to_plane(const BasicTensor4<T>& t, std::size_t b = 0, std::size_t c = 0, double gain = 255.0) {
  PlaneF p(t.shape().w, t.shape().h);
  const auto src = t.plane(b, c);
  for (std::size_t i = 0; i < src.size(); ++i) p.data[i] = static_cast<float>(src[i] * gain);
  return p;
}

inline PlaneF clamp_plane(PlaneF p, float lo = 0.0f, float hi = 255.0f) {
  for (float& v : p.data) v = std::clamp(v, lo, hi);
  return p;
}

// ---------------------------------------------------------------------------
// Bicubic resampling

/// Cubic convolution kernel with a = -0.5.
inline double cubic_kernel(double x) {
  constexpr double a = -0.5;
  const double ax = std::abs(x);
  if (ax <= 1.0) return ((a + 2.0) * ax - (a + 3.0)) * ax * ax + 1.0;
  if (ax < 2.0) return ((a * ax - 5.0 * a) * ax + 8.0 * a) * ax - 4.0 * a;
  return 0.0;
}

/// Symmetric boundary extension with edge repeat: ... 1 0 | 0 1 2 ... n-1 | n-1 n-2 ...
inline std::size_t mirror_index(long j, std::size_t n) {
  const long period = 2 * static_cast<long>(n);
  long m = j % period;
  if (m < 0) m += period;
  return m < static_cast<long>(n) ? static_cast<std::size_t>(m) : static_cast<std::size_t>(period - 1 - m);
}

namespace detail {

struct Contribution {
  std::vector<std::size_t> index;
  std::vector<double> weight;
};

// Per-output taps for resizing one axis from in_n to out_n samples. When
// shrinking, the kernel is stretched by 1/scale (antialiasing).
inline std::vector<Contribution> axis_contributions(std::size_t in_n, std::size_t out_n) {
  const double scale = static_cast<double>(out_n) / static_cast<double>(in_n);
  const bool shrink = scale < 1.0;
  const double width = shrink ? 4.0 / scale : 4.0;
  const long taps = static_cast<long>(std::ceil(width)) + 2;
  std::vector<Contribution> out(out_n);
  for (std::size_t i = 0; i < out_n; ++i) {
    const double u = (static_cast<double>(i) + 0.5) / scale - 0.5;
    const long left = static_cast<long>(std::floor(u - width / 2.0));
    Contribution& c = out[i];
    double sum = 0.0;
    for (long p = 0; p < taps; ++p) {
      const long j = left + p;
      const double d = u - static_cast<double>(j);
      const double wgt = shrink ? scale * cubic_kernel(scale * d) : cubic_kernel(d);
      if (wgt == 0.0) continue;
      c.index.push_back(mirror_index(j, in_n));
      c.weight.push_back(wgt);
      sum += wgt;
    }
    for (double& wgt : c.weight) wgt /= sum;
  }
  return out;
}

}  // namespace detail

/// Separable cubic convolution resize (width pass, then height pass).
inline PlaneF bicubic_resize(const PlaneF& in, std::size_t out_w, std::size_t out_h) {
  require(out_w >= 1 && out_h >= 1, Errc::invalid_shape, "resize target must be at least 1x1");
  require(in.w >= 1 && in.h >= 1 && in.data.size() == in.w * in.h, Errc::invalid_shape, "bad input plane");
  const auto cx = detail::axis_contributions(in.w, out_w);
  const auto cy = detail::axis_contributions(in.h, out_h);

  std::vector<double> tmp(out_w * in.h);
  for (std::size_t y = 0; y < in.h; ++y)
    for (std::size_t x = 0; x < out_w; ++x) {
      double s = 0.0;
      for (std::size_t t = 0; t < cx[x].index.size(); ++t) s += cx[x].weight[t] * in.at(cx[x].index[t], y);
      tmp[y * out_w + x] = s;
    }
  PlaneF out(out_w, out_h);
  for (std::size_t y = 0; y < out_h; ++y)
    for (std::size_t x = 0; x < out_w; ++x) {
      double s = 0.0;
      for (std::size_t t = 0; t < cy[y].index.size(); ++t) s += cy[y].weight[t] * tmp[cy[y].index[t] * out_w + x];
      out.at(x, y) = static_cast<float>(s);
    }
  return out;
}

inline PlaneF crop(const PlaneF& p, std::size_t x0, std::size_t y0, std::size_t w, std::size_t h) {
  require(x0 + w <= p.w && y0 + h <= p.h, Errc::invalid_shape, "crop window outside plane");
  PlaneF out(w, h);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) out.at(x, y) = p.at(x0 + x, y0 + y);
  return out;
}

/// Top-left crop so both dims are multiples of s.
inline PlaneF crop_to_multiple(const PlaneF& p, std::size_t s) {
  require(s >= 1, Errc::invalid_argument, "scale must be >= 1");
  require(p.w >= s && p.h >= s, Errc::invalid_shape, "plane smaller than scale factor");
  return crop(p, 0, 0, p.w - p.w % s, p.h - p.h % s);
}

struct Degraded {
  PlaneF hr;      // cropped to a multiple of the scale
  PlaneF lr;      // bicubic downscale by s
  PlaneF coarse;  // bicubic upscale of lr back to hr dims
};

inline Degraded degrade(const PlaneF& hr, std::size_t s) {
  Degraded d;
  d.hr = crop_to_multiple(hr, s);
  if (s == 1) {
    d.lr = d.hr;
    d.coarse = d.hr;
    return d;
  }
  d.lr = bicubic_resize(d.hr, d.hr.w / s, d.hr.h / s);
  d.coarse = bicubic_resize(d.lr, d.hr.w, d.hr.h);
  return d;
}

// ---------------------------------------------------------------------------
// Metrics (peak 255)

inline constexpr double kPsnrCap = 100.0;

namespace detail {

inline void check_same_dims(const PlaneF& a, const PlaneF& b) {
  require(a.w == b.w && a.h == b.h, Errc::shape_mismatch,
          "planes differ: " + std::to_string(a.w) + "x" + std::to_string(a.h) + " vs " +
              std::to_string(b.w) + "x" + std::to_string(b.h));
}

}  // namespace detail

inline PlaneF shave(const PlaneF& p, std::size_t border) {
  require(p.w > 2 * border && p.h > 2 * border, Errc::invalid_shape, "shave removes the whole plane");
  return crop(p, border, border, p.w - 2 * border, p.h - 2 * border);
}

inline double mse(const PlaneF& a, const PlaneF& b) {
  detail::check_same_dims(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
    s += d * d;
  }
  return s / static_cast<double>(a.data.size());
}

/// 10 log10(255^2 / MSE) after removing `border` pixels; capped at 100 dB.
inline double psnr(const PlaneF& a, const PlaneF& b, std::size_t border = 0) {
  detail::check_same_dims(a, b);
  const double m = mse(shave(a, border), shave(b, border));
  if (m == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(255.0 * 255.0 / m));
}

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
inline std::vector<double> gaussian_taps(std::size_t size = 11, double sigma = 1.5) {
  std::vector<double> g(size);
  const double c = (static_cast<double>(size) - 1.0) / 2.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    const double d = static_cast<double>(i) - c;
    g[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += g[i];
  }
  for (double& v : g) v /= sum;
  return g;
}

/// Mean SSIM over all fully-contained 11x11 Gaussian windows (sigma 1.5),
/// C1 = (0.01 * 255)^2, C2 = (0.03 * 255)^2.
inline double ssim(const PlaneF& a_in, const PlaneF& b_in, std::size_t border = 0) {
  detail::check_same_dims(a_in, b_in);
  constexpr std::size_t win = 11;
  require(a_in.w >= 2 * border + win && a_in.h >= 2 * border + win, Errc::invalid_shape,
          "ssim needs at least 11x11 pixels after shaving");
  const PlaneF a = shave(a_in, border), b = shave(b_in, border);
  const std::size_t w = a.w, h = a.h, ow = w - win + 1, oh = h - win + 1;
  const auto g = gaussian_taps(win, 1.5);

  // Five moment images, filtered along x then y ("valid" region only).
  std::vector<double> src[5];
  for (auto& s : src) s.resize(w * h);
  for (std::size_t i = 0; i < w * h; ++i) {
    const double x = a.data[i], y = b.data[i];
    src[0][i] = x;
    src[1][i] = y;
    src[2][i] = x * x;
    src[3][i] = y * y;
    src[4][i] = x * y;
  }
  std::vector<double> mom[5];
  for (int m = 0; m < 5; ++m) {
    std::vector<double> rows(ow * h);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        double s = 0.0;
        for (std::size_t t = 0; t < win; ++t) s += g[t] * src[m][y * w + x + t];
        rows[y * ow + x] = s;
      }
    mom[m].resize(ow * oh);
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        double s = 0.0;
        for (std::size_t t = 0; t < win; ++t) s += g[t] * rows[(y + t) * ow + x];
        mom[m][y * ow + x] = s;
      }
  }

  const double c1 = (0.01 * 255.0) * (0.01 * 255.0);
  const double c2 = (0.03 * 255.0) * (0.03 * 255.0);
  double total = 0.0;
  for (std::size_t i = 0; i < ow * oh; ++i) {
    const double mx = mom[0][i], my = mom[1][i];
    const double vx = mom[2][i] - mx * mx, vy = mom[3][i] - my * my, cxy = mom[4][i] - mx * my;
    total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
  }
  const double mean = total / static_cast<double>(ow * oh);
  // Identical inputs are exactly 1 by definition; filtering noise can leave 1 - 1e-16.
  if (a.data == b.data) return 1.0;
  return mean;
}

// ---------------------------------------------------------------------------
// Patches

struct PatchPair {
  PlaneF input;
  PlaneF target;
};

/// Aligned crops on a regular grid. `patch` and `stride` are in input pixels;
/// the target window is `scale` times larger (1 for pre-upsampled inputs).
inline std::vector<PatchPair> extract_patches(const PlaneF& input, const PlaneF& target, std::size_t patch,
                                              std::size_t stride, std::size_t scale = 1) {
  require(stride >= 1, Errc::invalid_argument, "stride must be >= 1");
  require(patch >= 1 && scale >= 1, Errc::invalid_argument, "patch and scale must be >= 1");
  require(target.w == input.w * scale && target.h == input.h * scale, Errc::shape_mismatch,
          "target dims must be scale x input dims");
  require(patch <= input.w && patch <= input.h, Errc::invalid_shape,
          "patch " + std::to_string(patch) + " larger than image " + std::to_string(input.w) + "x" +
              std::to_string(input.h));
  std::vector<PatchPair> out;
  for (std::size_t y = 0; y + patch <= input.h; y += stride)
    for (std::size_t x = 0; x + patch <= input.w; x += stride)
      out.push_back({crop(input, x, y, patch, patch),
                     crop(target, x * scale, y * scale, patch * scale, patch * scale)});
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic scenes

/// Deterministic test scene on [0, 255]: smooth gradient background with
/// random rectangles, discs and thin lines, plus mild texture. Gives sharp
/// edges (lost by downscaling) and smooth regions.
inline PlaneF synthetic_scene(Rng& rng, std::size_t w, std::size_t h) {
  PlaneF p(w, h);
  const double g0 = 60.0 + 100.0 * rng.uniform01();
  const double gx = (rng.uniform01() - 0.5) * 120.0 / static_cast<double>(w);
  const double gy = (rng.uniform01() - 0.5) * 120.0 / static_cast<double>(h);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) p.at(x, y) = static_cast<float>(g0 + gx * x + gy * y);

  const std::size_t shapes = 4 + rng.below(5);
  for (std::size_t s = 0; s < shapes; ++s) {
    const double level = 255.0 * rng.uniform01();
    const double cx = rng.uniform01() * w, cy = rng.uniform01() * h;
    const double rx = 2.0 + rng.uniform01() * w / 4.0, ry = 2.0 + rng.uniform01() * h / 4.0;
    const std::uint64_t kind = rng.below(3);
    const double ang = rng.uniform01() * 3.141592653589793;
    const double ca = std::cos(ang), sa = std::sin(ang);
    const double half_width = 0.75 + 1.5 * rng.uniform01();
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
        bool inside = false;
        if (kind == 0) {
          inside = std::abs(dx) <= rx && std::abs(dy) <= ry;
        } else if (kind == 1) {
          inside = (dx * dx) / (rx * rx) + (dy * dy) / (ry * ry) <= 1.0;
        } else {
          const double across = -sa * dx + ca * dy;
          const double along = ca * dx + sa * dy;
          inside = std::abs(across) <= half_width && std::abs(along) <= rx * 2.0;
        }
        if (inside) p.at(x, y) = static_cast<float>(level);
      }
  }
  for (float& v : p.data) v = static_cast<float>(std::clamp(v + 4.0 * (rng.uniform01() - 0.5), 0.0, 255.0));
  return p;
}

}  // namespace lsk
