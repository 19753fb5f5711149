#include <lsk/kernels.hpp>

#include <Eigen/SVD>
#include <gtest/gtest.h>

#include <cmath>

using namespace lsk;

namespace {

// Independent SVD route: Eigen's two-sided Jacobi.
Eigen::VectorXd oracle_singular_values(const Matrix& m) {
  Eigen::MatrixXd e(m.rows, m.cols);
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) e(i, j) = m(i, j);
  return Eigen::JacobiSVD<Eigen::MatrixXd>(e).singularValues();
}

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c) {
  Matrix m(r, c);
  for (double& v : m.data) v = 2.0 * rng.uniform01() - 1.0;
  return m;
}

template <class T>
SeparablePair<T> random_pair(Rng& rng, std::size_t c_in, std::size_t c_e, std::size_t c_out,
                             std::size_t k, Padding p, bool bias = true) {
  auto pair = make_separable_pair<T>(c_in, c_e, c_out, k, bias, p);
  pair.vertical.weight = random_uniform<T>(rng, pair.vertical.weight.shape(), -1.0, 1.0);
  pair.horizontal.weight = random_uniform<T>(rng, pair.horizontal.weight.shape(), -1.0, 1.0);
  for (T& b : pair.horizontal.bias) b = static_cast<T>(rng.uniform01() - 0.5);
  return pair;
}

double max_abs(const Matrix& a, const Matrix& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

const Matrix kSobelX(3, 3, {1, 0, -1, 2, 0, -2, 1, 0, -1});

}  // namespace

TEST(MergePair, SobelFromSmoothingAndDifference) {
  const std::vector<double> u{1, 2, 1}, v{1, 0, -1};
  const Matrix k = merge_pair(u, v);
  EXPECT_EQ(k.data, kSobelX.data);
}

TEST(MergePair, BasisVectorsGiveDirac) {
  const std::vector<double> e{0, 1, 0};
  EXPECT_EQ(merge_pair(e, e).data, (std::vector<double>{0, 0, 0, 0, 1, 0, 0, 0, 0}));
}

TEST(MergePair, ZeroColumnAnnihilates) {
  const std::vector<double> z(3, 0.0), v{4, 5, 6};
  for (double e : merge_pair(z, v).data) EXPECT_EQ(e, 0.0);
}

TEST(MergePair, LengthMismatch) {
  const std::vector<double> a(3), b(5);
  try {
    merge_pair(a, b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::shape_mismatch);
  }
}

TEST(MergePairProperty, RankAtMostOne) {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + 2 * rng.below(5);
    std::vector<double> u(n), v(n);
    for (double& e : u) e = 2.0 * rng.uniform01() - 1.0;
    for (double& e : v) e = 2.0 * rng.uniform01() - 1.0;
    const Svd d = svd(merge_pair(u, v));
    if (n > 1) {
      EXPECT_LT(d.s[1], 1e-6);
    }
  }
}

TEST(MergeLayers, SingleExtraChannelReducesToMergePair) {
  Rng rng(5);
  const auto pair = random_pair<double>(rng, 1, 1, 1, 5, Padding::same_zero);
  const auto merged = merge_layers(pair);
  std::vector<double> u(5), v(5);
  for (std::size_t i = 0; i < 5; ++i) {
    u[i] = pair.vertical.tap(0, 0, i);
    v[i] = pair.horizontal.tap(0, 0, i);
  }
  EXPECT_EQ(kernel_matrix(merged, 0, 0).data, merge_pair(u, v).data);
  EXPECT_EQ(merged.bias, pair.horizontal.bias);
}

TEST(MergeLayers, TwoBasisTermsGiveDiagonal) {
  auto pair = make_separable_pair<double>(1, 2, 1, 3, false, Padding::same_zero);
  pair.vertical.weight(0, 0, 0, 0) = 1.0;  // e1
  pair.vertical.weight(1, 0, 0, 1) = 1.0;  // e2
  pair.horizontal.weight(0, 0, 0, 0) = 1.0;
  pair.horizontal.weight(0, 1, 0, 1) = 1.0;
  EXPECT_EQ(kernel_matrix(merge_layers(pair), 0, 0).data,
            (std::vector<double>{1, 0, 0, 0, 1, 0, 0, 0, 0}));
}

TEST(MergeLayers, StagedAndMergedForwardAgree) {
  Rng rng(3);
  const auto pair = random_pair<float>(rng, 4, 4, 2, 3, Padding::same_zero);
  const Tensor4 x = random_uniform(rng, Shape4{1, 4, 9, 7}, -1.0, 1.0);
  EXPECT_LT(max_abs_diff(forward_staged(x, pair), conv2d_forward(x, merge_layers(pair))), 1e-5);
}

TEST(MergeLayers, MergedRankBoundedByExtraChannels) {
  Rng rng(19);
  const auto pair = random_pair<double>(rng, 2, 2, 3, 5, Padding::valid);
  const auto merged = merge_layers(pair);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t t = 0; t < 2; ++t) EXPECT_LT(svd(kernel_matrix(merged, i, t)).s[2], 1e-9);
}

TEST(MergeLayers, InvalidPairRejected) {
  auto pair = make_separable_pair<float>(2, 3, 2, 3, true, Padding::same_zero);
  pair.vertical.bias.assign(3, 0.0f);
  try {
    merge_layers(pair);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::invalid_layer);
  }
  auto mismatched = make_separable_pair<float>(2, 3, 2, 3, true, Padding::same_zero);
  mismatched.horizontal.weight = Tensor4(Shape4{2, 3, 1, 5});
  EXPECT_THROW(merge_layers(mismatched), Error);
}

TEST(MergeProperty, StagedEqualsMergedAcrossShapes) {
  Rng rng(2024);
  const std::size_t sizes[] = {3, 5, 9};
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t k = sizes[rng.below(3)];
    const Padding p = trial % 2 ? Padding::valid : Padding::same_zero;
    const std::size_t c_in = 1 + rng.below(8), c_e = 1 + rng.below(8), c_out = 1 + rng.below(8);
    const std::size_t h = k + rng.below(17 - k), w = k + rng.below(17 - k);
    const auto pair = random_pair<float>(rng, c_in, c_e, c_out, k, p);
    const Tensor4 x = random_uniform(rng, Shape4{1, c_in, h, w}, -1.0, 1.0);
    EXPECT_LT(max_abs_diff(forward_staged(x, pair), conv2d_forward(x, merge_layers(pair))), 1e-5)
        << "k=" << k << " c=" << c_in << "/" << c_e << "/" << c_out;
  }
}

TEST(Svd, MatchesEigenAndReconstructs) {
  Rng rng(23);
  for (auto [r, c] : {std::pair{3, 3}, {5, 2}, {2, 6}, {15, 10}, {9, 9}}) {
    const Matrix m = random_matrix(rng, r, c);
    const Svd d = svd(m);
    const Eigen::VectorXd want = oracle_singular_values(m);
    ASSERT_EQ(d.s.size(), static_cast<std::size_t>(want.size()));
    for (std::size_t i = 0; i < d.s.size(); ++i) EXPECT_NEAR(d.s[i], want[i], 1e-10);
    Matrix back(m.rows, m.cols);
    for (std::size_t i = 0; i < m.rows; ++i)
      for (std::size_t j = 0; j < m.cols; ++j)
        for (std::size_t q = 0; q < d.s.size(); ++q) back(i, j) += d.u(i, q) * d.s[q] * d.v(j, q);
    EXPECT_LT(max_abs(back, m), 1e-10);
  }
}

TEST(SvdFactorize, SobelIsExactAtRankOne) {
  const Factorization f = svd_factorize(kSobelX, 1);
  ASSERT_EQ(f.factors.size(), 1u);
  EXPECT_LT(f.residual_norm, 1e-6);
  EXPECT_LT(max_abs(merge_pair(f.factors[0]), kSobelX), 1e-6);
  // Sign convention: first nonzero entry of the column factor is positive.
  EXPECT_GT(f.factors[0].u[0], 0.0);
}

TEST(SvdFactorize, DiracIsExactAtRankOne) {
  const Matrix dirac(3, 3, {0, 0, 0, 0, 1, 0, 0, 0, 0});
  const Factorization f = svd_factorize(dirac, 1);
  EXPECT_LT(f.residual_norm, 1e-12);
  EXPECT_EQ(merge_pair(f.factors[0]).data, dirac.data);
}

TEST(SvdFactorize, RandomKernelResidualMatchesOracleSpectrum) {
  Rng rng(9);
  const Matrix k = random_matrix(rng, 3, 3);
  const Eigen::VectorXd sv = oracle_singular_values(k);
  EXPECT_LT(svd_factorize(k, 3).residual_norm, 1e-5);
  EXPECT_NEAR(svd_factorize(k, 1).residual_norm, std::sqrt(sv[1] * sv[1] + sv[2] * sv[2]), 1e-9);
  EXPECT_NEAR(svd_factorize(k, 2).residual_norm, sv[2], 1e-9);
}

TEST(SvdFactorize, RankOutOfRange) {
  for (std::size_t r : {0u, 4u}) {
    try {
      svd_factorize(kSobelX, r);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::invalid_rank);
    }
  }
}

TEST(SvdFactorizeProperty, ResidualMonotoneAndFullRankExact) {
  Rng rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + 2 * rng.below(5);
    const Matrix k = random_matrix(rng, n, n);
    double prev = INFINITY;
    for (std::size_t r = 1; r <= n; ++r) {
      const double res = svd_factorize(k, r).residual_norm;
      EXPECT_LE(res, prev + 1e-12);
      prev = res;
    }
    EXPECT_LT(prev, 1e-5 * k.frobenius());
  }
}

TEST(DecomposeLayer, RoundTripOfMergedPair) {
  Rng rng(44);
  const auto pair = random_pair<double>(rng, 3, 2, 4, 5, Padding::same_zero);
  const auto merged = merge_layers(pair);
  const auto dec = decompose_layer(merged, 2);
  EXPECT_LT(dec.approx_error, 1e-4);
  const auto again = merge_layers(dec.pair);
  EXPECT_LT(max_abs_diff(again.weight, merged.weight), 1e-10);
  EXPECT_EQ(again.bias, merged.bias);
  // A larger budget than needed pads with zero channels.
  EXPECT_LT(decompose_layer(merged, 7).approx_error, 1e-4);
}

TEST(DecomposeLayer, SharedDirectionLayerAtBudgetOne) {
  // Kernel (i, t) is outer(alpha_t * p, beta_i * q): one shared direction pair.
  const std::vector<double> p{0.5, -1.0, 2.0}, q{1.0, 0.25, -0.75};
  const std::vector<double> alpha{1.5, -0.5}, beta{0.3, -2.0, 1.1};
  Conv2DLayer<double> layer{Tensor4d(Shape4{3, 2, 3, 3}), std::vector<double>(3, 0.1), Padding::same_zero};
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t t = 0; t < 2; ++t)
      for (std::size_t y = 0; y < 3; ++y)
        for (std::size_t x = 0; x < 3; ++x) layer.weight(i, t, y, x) = alpha[t] * p[y] * beta[i] * q[x];
  EXPECT_LT(decompose_layer(layer, 1).approx_error, 1e-4);
}

TEST(DecomposeLayer, ZeroLayer) {
  const Conv2DLayer<float> layer{Tensor4(Shape4{2, 3, 3, 3}), {}, Padding::same_zero};
  const auto dec = decompose_layer(layer, 2);
  EXPECT_EQ(dec.approx_error, 0.0);
  for (float v : dec.pair.vertical.weight.data()) EXPECT_EQ(v, 0.0f);
  for (float v : dec.pair.horizontal.weight.data()) EXPECT_EQ(v, 0.0f);
}

TEST(DecomposeLayer, ApproximationImprovesWithBudget) {
  Rng rng(71);
  const Conv2DLayer<double> layer{random_uniform<double>(rng, Shape4{2, 2, 3, 3}, -1.0, 1.0), {}, Padding::valid};
  double prev = INFINITY;
  for (std::size_t ce = 1; ce <= 6; ++ce) {
    const double e = decompose_layer(layer, ce).approx_error;
    EXPECT_LE(e, prev + 1e-12);
    prev = e;
  }
  EXPECT_LT(prev, 1e-10);  // full rank of the 6 x 6 fold
}

TEST(DecomposeProperty, MergeDecomposeMergeIsIdempotent) {
  Rng rng(88);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t k = 1 + 2 * rng.below(3);
    const std::size_t c_in = 1 + rng.below(4), c_e = 1 + rng.below(4), c_out = 1 + rng.below(4);
    const auto merged = merge_layers(random_pair<float>(rng, c_in, c_e, c_out, k, Padding::same_zero));
    const auto again = merge_layers(decompose_layer(merged, c_e).pair);
    EXPECT_LT(max_abs_diff(again.weight, merged.weight), 1e-4);
  }
}
