#pragma once

// Separable kernels: a vertical n x 1 bank followed (with no
// activation in between) by a horizontal 1 x n bank. The pair is exactly a
// square-kernel layer whose kernels are sums of c_e rank-1 outer products:
//
//   merged[i, t] = sum_j outer(vertical[j, t], horizontal[i, j])
//
// This header merges pairs, expands/factorizes single kernels, and inverts the
// merge for whole layers via a truncated SVD.

#include <lsk/conv.hpp>
#include <lsk/error.hpp>
#include <lsk/svd.hpp>
#include <lsk/tensor.hpp>

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace lsk {

template <class T>
struct SeparablePair {
  Conv1DLayer<T> vertical;    // c_in -> c_e, n x 1, bias-free
  Conv1DLayer<T> horizontal;  // c_e -> c_out, 1 x n, carries the layer bias

  std::size_t c_in() const { return vertical.c_in(); }
  std::size_t c_e() const { return vertical.c_out(); }
  std::size_t c_out() const { return horizontal.c_out(); }
  std::size_t k() const { return vertical.k(); }
  Padding padding() const { return vertical.padding; }

  void validate() const {
    vertical.validate();
    horizontal.validate();
    require(vertical.orientation == Orientation::vertical, Errc::invalid_layer,
            "first stage of a separable pair must be vertical");
    require(horizontal.orientation == Orientation::horizontal, Errc::invalid_layer,
            "second stage of a separable pair must be horizontal");
    require(vertical.k() == horizontal.k(), Errc::invalid_layer,
            "separable stages disagree on kernel size");
    require(vertical.c_out() == horizontal.c_in(), Errc::invalid_layer,
            "vertical c_out " + std::to_string(vertical.c_out()) + " != horizontal c_in " +
                std::to_string(horizontal.c_in()));
    require(!vertical.has_bias(), Errc::invalid_layer, "vertical stage must be bias-free");
    require(vertical.padding == horizontal.padding, Errc::invalid_layer,
            "separable stages disagree on padding");
  }
};

/// Zero-initialized pair with the given channel counts.
template <class T>
SeparablePair<T> make_separable_pair(std::size_t c_in, std::size_t c_e, std::size_t c_out,
                                     std::size_t k, bool bias, Padding padding) {
  SeparablePair<T> p;
  p.vertical = {Orientation::vertical, BasicTensor4<T>(Shape4{c_e, c_in, 1, k}), {}, padding};
  p.horizontal = {Orientation::horizontal, BasicTensor4<T>(Shape4{c_out, c_e, 1, k}),
                  bias ? std::vector<T>(c_out, T(0)) : std::vector<T>{}, padding};
  return p;
}

/// Runs the two 1-D stages in sequence.
template <class T>
BasicTensor4<T> forward_staged(const BasicTensor4<T>& x, const SeparablePair<T>& pair) {
  pair.validate();
  return conv1d_forward(conv1d_forward(x, pair.vertical), pair.horizontal);
}

struct RankOneFactor {
  std::vector<double> u;  // column, runs down rows
  std::vector<double> v;  // row, runs across columns
};

/// Outer product u * v as an n x n kernel.
inline Matrix merge_pair(std::span<const double> u, std::span<const double> v) {
  require(u.size() == v.size() && !u.empty(), Errc::shape_mismatch,
          "merge_pair needs equal nonzero lengths, got " + std::to_string(u.size()) + " and " +
              std::to_string(v.size()));
  Matrix m(u.size(), v.size());
  for (std::size_t y = 0; y < u.size(); ++y)
    for (std::size_t x = 0; x < v.size(); ++x) m(y, x) = u[y] * v[x];
  return m;
}

inline Matrix merge_pair(const RankOneFactor& f) { return merge_pair(f.u, f.v); }

/// Sum of outer products of a factor list; n is taken from the first factor.
inline Matrix expand_factors(const std::vector<RankOneFactor>& factors, std::size_t n) {
  Matrix m(n, n);
  for (const auto& f : factors) {
    const Matrix term = merge_pair(f);
    require(term.rows == n, Errc::shape_mismatch, "factor length differs from kernel size");
    for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] += term.data[i];
  }
  return m;
}

/// Equivalent square-kernel layer of a separable pair.
template <class T>
Conv2DLayer<T> merge_layers(const SeparablePair<T>& pair) {
  pair.validate();
  const std::size_t c_in = pair.c_in(), c_e = pair.c_e(), c_out = pair.c_out(), k = pair.k();
  Conv2DLayer<T> merged{BasicTensor4<T>(Shape4{c_out, c_in, k, k}), pair.horizontal.bias,
                        pair.padding()};
  std::vector<double> acc(k * k);
  for (std::size_t i = 0; i < c_out; ++i) {
    for (std::size_t t = 0; t < c_in; ++t) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t j = 0; j < c_e; ++j)
        for (std::size_t y = 0; y < k; ++y) {
          const double vy = pair.vertical.tap(j, t, y);
          for (std::size_t x = 0; x < k; ++x) acc[y * k + x] += vy * pair.horizontal.tap(i, j, x);
        }
      for (std::size_t y = 0; y < k; ++y)
        for (std::size_t x = 0; x < k; ++x) merged.weight(i, t, y, x) = static_cast<T>(acc[y * k + x]);
    }
  }
  return merged;
}

namespace detail {

// Flip (u, v) -> (-u, -v) so that the first nonzero entry of u is positive.
inline void canonical_sign(std::vector<double>& u, std::vector<double>& v) {
  for (double e : u) {
    if (e == 0.0) continue;
    if (e < 0.0) {
      for (double& a : u) a = -a;
      for (double& b : v) b = -b;
    }
    return;
  }
}

}  // namespace detail

struct Factorization {
  std::vector<RankOneFactor> factors;  // descending singular value order
  std::vector<double> singular_values;
  double residual_norm = 0.0;  // ||kernel - sum of factors||_F
};

/// Best rank-r approximation of a square kernel as rank-1 factors
/// (sigma_i * u_i, v_i^T).
inline Factorization svd_factorize(const Matrix& kernel, std::size_t r) {
  require(kernel.rows == kernel.cols && kernel.rows >= 1, Errc::invalid_shape,
          "svd_factorize needs a square kernel");
  const std::size_t n = kernel.rows;
  require(r >= 1 && r <= n, Errc::invalid_rank,
          "rank budget " + std::to_string(r) + " outside [1, " + std::to_string(n) + "]");
  const Svd d = svd(kernel);
  Factorization out;
  out.singular_values = d.s;
  for (std::size_t q = 0; q < r; ++q) {
    if (d.s[q] == 0.0) break;
    RankOneFactor f{std::vector<double>(n), std::vector<double>(n)};
    for (std::size_t i = 0; i < n; ++i) {
      f.u[i] = d.s[q] * d.u(i, q);
      f.v[i] = d.v(i, q);
    }
    detail::canonical_sign(f.u, f.v);
    out.factors.push_back(std::move(f));
  }
  out.residual_norm = (kernel - expand_factors(out.factors, n)).frobenius();
  return out;
}

template <class T>
struct LayerDecomposition {
  SeparablePair<T> pair;
  double approx_error = 0.0;  // sum over (i, t) of ||W[i,t] - merged[i,t]||_F
};

/// Inverse of merge_layers at a channel budget c_e. The weights are folded into
/// a (c_in * k) x (c_out * k) matrix M[(t, y), (i, x)] = W[i, t, y, x]; the
/// staged pair is exactly a rank-c_e factorization of M, so the truncated SVD
/// gives the closest pair in Frobenius norm. Singular values go into the
/// vertical bank.
template <class T>
LayerDecomposition<T> decompose_layer(const Conv2DLayer<T>& layer, std::size_t c_e) {
  layer.validate();
  require(c_e >= 1, Errc::invalid_argument, "channel budget must be >= 1");
  const std::size_t c_in = layer.c_in(), c_out = layer.c_out(), k = layer.k();

  Matrix m(c_in * k, c_out * k);
  for (std::size_t i = 0; i < c_out; ++i)
    for (std::size_t t = 0; t < c_in; ++t)
      for (std::size_t y = 0; y < k; ++y)
        for (std::size_t x = 0; x < k; ++x) m(t * k + y, i * k + x) = layer.weight(i, t, y, x);

  LayerDecomposition<T> out{
      make_separable_pair<T>(c_in, c_e, c_out, k, layer.has_bias(), layer.padding), 0.0};
  out.pair.horizontal.bias = layer.bias;

  if (m.frobenius() > 0.0) {
    const Svd d = svd(m);
    const std::size_t used = std::min(c_e, d.s.size());
    for (std::size_t j = 0; j < used; ++j) {
      if (d.s[j] == 0.0) break;
      std::vector<double> u(c_in * k), v(c_out * k);
      for (std::size_t r = 0; r < u.size(); ++r) u[r] = d.s[j] * d.u(r, j);
      for (std::size_t r = 0; r < v.size(); ++r) v[r] = d.v(r, j);
      detail::canonical_sign(u, v);
      for (std::size_t t = 0; t < c_in; ++t)
        for (std::size_t y = 0; y < k; ++y)
          out.pair.vertical.weight(j, t, 0, y) = static_cast<T>(u[t * k + y]);
      for (std::size_t i = 0; i < c_out; ++i)
        for (std::size_t x = 0; x < k; ++x)
          out.pair.horizontal.weight(i, j, 0, x) = static_cast<T>(v[i * k + x]);
    }
  }

  const Conv2DLayer<T> merged = merge_layers(out.pair);
  for (std::size_t i = 0; i < c_out; ++i)
    for (std::size_t t = 0; t < c_in; ++t) {
      double s = 0.0;
      for (std::size_t y = 0; y < k; ++y)
        for (std::size_t x = 0; x < k; ++x) {
          const double d = static_cast<double>(layer.weight(i, t, y, x)) -
                           static_cast<double>(merged.weight(i, t, y, x));
          s += d * d;
        }
      out.approx_error += std::sqrt(s);
    }
  return out;
}

/// Kernel (i, t) of a square layer as a matrix.
template <class T>
Matrix kernel_matrix(const Conv2DLayer<T>& layer, std::size_t i, std::size_t t) {
  const std::size_t k = layer.k();
  Matrix m(k, k);
  for (std::size_t y = 0; y < k; ++y)
    for (std::size_t x = 0; x < k; ++x) m(y, x) = layer.weight(i, t, y, x);
  return m;
}

}  // namespace lsk
