#pragma once

// Small dense matrices and a one-sided (Hestenes) Jacobi SVD. Sizes here are
// at most a few hundred rows, so the O(n^3) sweeps are fine.

#include <lsk/error.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

namespace lsk {

/// Row-major dense matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  Matrix(std::size_t r, std::size_t c, std::vector<double> values)
      : rows(r), cols(c), data(std::move(values)) {
    require(data.size() == r * c, Errc::invalid_shape, "matrix data length mismatch");
  }

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  Matrix transposed() const {
    Matrix t(cols, rows);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  double frobenius() const {
    double s = 0.0;
    for (double v : data) s += v * v;
    return std::sqrt(s);
  }
};

inline Matrix operator-(const Matrix& a, const Matrix& b) {
  require(a.rows == b.rows && a.cols == b.cols, Errc::shape_mismatch, "matrix difference dims");
  Matrix out(a.rows, a.cols);
  for (std::size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] - b.data[i];
  return out;
}

/// Thin SVD: a == u * diag(s) * v^T with s descending, u is rows x p and v is
/// cols x p where p = min(rows, cols). Columns of u belonging to zero singular
/// values are zero.
struct Svd {
  Matrix u;
  std::vector<double> s;
  Matrix v;
  int sweeps = 0;
};

struct JacobiOptions {
  double tolerance = 1e-10;
  int max_sweeps = 100;
};

namespace detail {

// Requires a.rows >= a.cols.
inline Svd jacobi_tall(Matrix a, const JacobiOptions& opt) {
  const std::size_t m = a.rows;
  const std::size_t n = a.cols;
  Matrix v(n, n);
  for (std::size_t i = 0; i < n; ++i) v(i, i) = 1.0;

  // Columns with norm below 1e-15 * ||a||_F are treated as exactly zero.
  const double floor_norm = a.frobenius() * 1e-15;
  const double tiny = floor_norm * floor_norm;

  int sweep = 0;
  for (; sweep < opt.max_sweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          const double ap = a(i, p), aq = a(i, q);
          alpha += ap * ap;
          beta += aq * aq;
          gamma += ap * aq;
        }
        if (alpha <= tiny || beta <= tiny) continue;
        if (std::abs(gamma) <= opt.tolerance * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double ap = a(i, p), aq = a(i, q);
          a(i, p) = c * ap - s * aq;
          a(i, q) = s * ap + c * aq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double vp = v(i, p), vq = v(i, q);
          v(i, p) = c * vp - s * vq;
          v(i, q) = s * vp + c * vq;
        }
      }
    }
    if (!rotated) break;
  }

  std::vector<double> sigma(n);
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += a(i, j) * a(i, j);
    sigma[j] = std::sqrt(s);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

  Svd out{Matrix(m, n), std::vector<double>(n), Matrix(n, n), sweep};
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    out.s[k] = sigma[j];
    for (std::size_t i = 0; i < n; ++i) out.v(i, k) = v(i, j);
    if (sigma[j] > 0.0 && sigma[j] * sigma[j] > tiny)
      for (std::size_t i = 0; i < m; ++i) out.u(i, k) = a(i, j) / sigma[j];
  }
  return out;
}

}  // namespace detail

inline Svd svd(const Matrix& a, const JacobiOptions& opt = {}) {
  require(a.rows >= 1 && a.cols >= 1, Errc::invalid_shape, "svd of empty matrix");
  if (a.rows >= a.cols) return detail::jacobi_tall(a, opt);
  Svd t = detail::jacobi_tall(a.transposed(), opt);
  std::swap(t.u, t.v);
  return t;
}

}  // namespace lsk
