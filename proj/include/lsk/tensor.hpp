#pragma once

// Dense rank-4 tensors in NCHW layout (w fastest) and the deterministic RNG
// used for every initialization in the library.

#include <lsk/error.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace lsk {

struct Shape4 {
  std::size_t n = 1;
  std::size_t c = 1;
  std::size_t h = 1;
  std::size_t w = 1;

  friend bool operator==(const Shape4&, const Shape4&) = default;

  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
           std::to_string(w) + ")";
  }
};

/// Element count of a shape; throws invalid-shape on zero dims or overflow.
inline std::size_t checked_size(const Shape4& s) {
  require(s.n >= 1 && s.c >= 1 && s.h >= 1 && s.w >= 1, Errc::invalid_shape,
          "all dims must be >= 1, got " + s.str());
  std::size_t total = 1;
  for (std::size_t d : {s.n, s.c, s.h, s.w}) {
    require(total <= std::numeric_limits<std::size_t>::max() / d, Errc::invalid_shape,
            "element count overflows for " + s.str());
    total *= d;
  }
  // Keep byte counts representable too.
  require(total <= std::numeric_limits<std::size_t>::max() / sizeof(double), Errc::invalid_shape,
          "tensor too large: " + s.str());
  return total;
}

template <class T>
class BasicTensor4 {
 public:
  using value_type = T;

  BasicTensor4() : shape_{}, data_(1, T(0)) {}

  explicit BasicTensor4(Shape4 shape) : shape_(shape), data_(checked_size(shape), T(0)) {}

  BasicTensor4(Shape4 shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    require(data_.size() == checked_size(shape_), Errc::invalid_shape,
            "data length " + std::to_string(data_.size()) + " does not match " + shape_.str());
  }

  const Shape4& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  const std::vector<T>& vec() const noexcept { return data_; }

  std::size_t offset(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const noexcept {
    return ((n * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }
  T& operator()(std::size_t n, std::size_t c, std::size_t y, std::size_t x) noexcept {
    return data_[offset(n, c, y, x)];
  }
  T operator()(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const noexcept {
    return data_[offset(n, c, y, x)];
  }

  /// Contiguous h*w plane for (n, c).
  std::span<T> plane(std::size_t n, std::size_t c) noexcept {
    return std::span<T>(data_).subspan(offset(n, c, 0, 0), shape_.h * shape_.w);
  }
  std::span<const T> plane(std::size_t n, std::size_t c) const noexcept {
    return std::span<const T>(data_).subspan(offset(n, c, 0, 0), shape_.h * shape_.w);
  }

  /// Same elements, new dims. Element count must be preserved.
  BasicTensor4 reshaped(Shape4 shape) const { return BasicTensor4(shape, data_); }

  template <class U>
  BasicTensor4<U> cast() const {
    std::vector<U> out(data_.size());
    std::transform(data_.begin(), data_.end(), out.begin(), [](T v) { return static_cast<U>(v); });
    return BasicTensor4<U>(shape_, std::move(out));
  }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  friend bool operator==(const BasicTensor4&, const BasicTensor4&) = default;

 private:
  Shape4 shape_;
  std::vector<T> data_;
};

using Tensor4 = BasicTensor4<float>;
using Tensor4d = BasicTensor4<double>;

template <class T = float>
BasicTensor4<T> zeros(Shape4 shape) {
  return BasicTensor4<T>(shape);
}

/// Deterministic generator: std::mt19937_64 (fully specified by the C++
/// standard) plus explicit bit-to-float mappings, so streams are identical on
/// every conforming platform. std::uniform_*_distribution is deliberately not
/// used because its output is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, bound) by rejection sampling.
  std::uint64_t below(std::uint64_t bound) {
    require(bound > 0, Errc::invalid_argument, "Rng::below bound must be positive");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return v % bound;
  }

  /// Standard normal via Box-Muller (one value per call).
  double normal() {
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  /// Fisher-Yates shuffle driven by below().
  template <class It>
  void shuffle(It first, It last) {
    const auto count = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = count; i > 1; --i) {
      const std::uint64_t j = below(i);
      std::swap(first[i - 1], first[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

template <class T = float>
BasicTensor4<T> random_uniform(Rng& rng, Shape4 shape, double lo, double hi) {
  require(lo < hi, Errc::invalid_range,
          "random_uniform needs lo < hi, got [" + std::to_string(lo) + ", " + std::to_string(hi) + ")");
  BasicTensor4<T> out(shape);
  const T tlo = static_cast<T>(lo);
  const T thi = static_cast<T>(hi);
  const T top = std::nextafter(thi, tlo);
  for (T& v : out.data()) {
    T s = static_cast<T>(lo + (hi - lo) * rng.uniform01());
    v = std::clamp(s, tlo, top);
  }
  return out;
}

enum class Elementwise { add, sub, mul };

template <class T>
BasicTensor4<T> elementwise(const BasicTensor4<T>& a, const BasicTensor4<T>& b, Elementwise op) {
  require(a.shape() == b.shape(), Errc::shape_mismatch,
          "elementwise on " + a.shape().str() + " vs " + b.shape().str());
  BasicTensor4<T> out(a.shape());
  auto pa = a.data();
  auto pb = b.data();
  auto po = out.data();
  switch (op) {
    case Elementwise::add:
      for (std::size_t i = 0; i < po.size(); ++i) po[i] = pa[i] + pb[i];
      break;
    case Elementwise::sub:
      for (std::size_t i = 0; i < po.size(); ++i) po[i] = pa[i] - pb[i];
      break;
    case Elementwise::mul:
      for (std::size_t i = 0; i < po.size(); ++i) po[i] = pa[i] * pb[i];
      break;
  }
  return out;
}

template <class T>
BasicTensor4<T> operator+(const BasicTensor4<T>& a, const BasicTensor4<T>& b) {
  return elementwise(a, b, Elementwise::add);
}
template <class T>
BasicTensor4<T> operator-(const BasicTensor4<T>& a, const BasicTensor4<T>& b) {
  return elementwise(a, b, Elementwise::sub);
}

template <class T>
BasicTensor4<T> scaled(const BasicTensor4<T>& a, T factor) {
  BasicTensor4<T> out = a;
  for (T& v : out.data()) v *= factor;
  return out;
}

template <class T>
double max_abs_diff(const BasicTensor4<T>& a, const BasicTensor4<T>& b) {
  require(a.shape() == b.shape(), Errc::shape_mismatch,
          "max_abs_diff on " + a.shape().str() + " vs " + b.shape().str());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i])));
  return m;
}

}  // namespace lsk
