#include <lsk/tensor.hpp>

#include <gtest/gtest.h>

#include <random>

using namespace lsk;

TEST(Tensor, ZerosSmall) {
  const Tensor4 t = zeros(Shape4{1, 1, 2, 2});
  EXPECT_EQ(t.size(), 4u);
  for (float v : t.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Tensor, ZerosCountIsProductOfDims) {
  const Tensor4 t = zeros(Shape4{2, 3, 4, 5});
  EXPECT_EQ(t.size(), 120u);
  for (float v : t.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Tensor, ZeroDimIsInvalidShape) {
  try {
    zeros(Shape4{1, 0, 1, 1});
    FAIL() << "expected invalid-shape";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::invalid_shape);
  }
}

TEST(Tensor, OverflowingSizeIsInvalidShape) {
  const std::size_t big = std::size_t{1} << 40;
  EXPECT_THROW(zeros(Shape4{big, big, 1, 1}), Error);
}

TEST(Tensor, DataLengthMustMatchDims) {
  EXPECT_THROW(Tensor4(Shape4{1, 1, 2, 2}, std::vector<float>(3)), Error);
}

TEST(Rng, MatchesStandardMt19937_64) {
  // The standard fixes the 10000th output of a default-seeded mt19937_64.
  Rng rng(std::mt19937_64::default_seed);
  std::uint64_t v = 0;
  for (int i = 0; i < 10000; ++i) v = rng.next_u64();
  EXPECT_EQ(v, 9981545732273789042ull);
}

TEST(RandomUniform, SameSeedIsBitIdentical) {
  Rng a(7), b(7);
  const Tensor4 x = random_uniform(a, Shape4{1, 1, 1, 4}, 0.0, 1.0);
  const Tensor4 y = random_uniform(b, Shape4{1, 1, 1, 4}, 0.0, 1.0);
  EXPECT_EQ(x, y);
}

TEST(RandomUniform, FrozenStream) {
  // Frozen from the documented mapping lo + (hi - lo) * (u64 >> 11) * 2^-53.
  Rng a(7);
  const Tensor4 x = random_uniform(a, Shape4{1, 1, 1, 4}, 0.0, 1.0);
  Rng b(7);
  for (float v : x.data()) {
    const double u = static_cast<double>(b.next_u64() >> 11) * 0x1.0p-53;
    EXPECT_EQ(v, static_cast<float>(u));
  }
}

TEST(RandomUniform, ElementsInHalfOpenRange) {
  Rng rng(7);
  const Tensor4 x = random_uniform(rng, Shape4{1, 1, 1, 4}, -0.5, 0.5);
  for (float v : x.data()) {
    EXPECT_GE(v, -0.5f);
    EXPECT_LT(v, 0.5f);
  }
  Rng wide(11);
  const Tensor4 many = random_uniform(wide, Shape4{4, 4, 16, 16}, -1.0, 1.0);
  for (float v : many.data()) {
    EXPECT_GE(v, -1.0f);
    EXPECT_LT(v, 1.0f);
  }
}

TEST(RandomUniform, EmptyRangeRejected) {
  Rng rng(1);
  try {
    random_uniform(rng, Shape4{1, 1, 1, 1}, 1.0, 1.0);
    FAIL() << "expected invalid-range";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::invalid_range);
  }
}

TEST(Elementwise, Examples) {
  const Tensor4 a(Shape4{1, 1, 1, 2}, {1, 2});
  const Tensor4 b(Shape4{1, 1, 1, 2}, {3, 4});
  EXPECT_EQ(elementwise(a, b, Elementwise::add), Tensor4(Shape4{1, 1, 1, 2}, {4, 6}));
  EXPECT_EQ(elementwise(a, a, Elementwise::sub), zeros(Shape4{1, 1, 1, 2}));
  const Tensor4 c(Shape4{1, 1, 1, 2}, {2, 3});
  const Tensor4 d(Shape4{1, 1, 1, 2}, {4, 5});
  EXPECT_EQ(elementwise(c, d, Elementwise::mul), Tensor4(Shape4{1, 1, 1, 2}, {8, 15}));
}

TEST(Elementwise, ShapeMismatch) {
  try {
    elementwise(zeros(Shape4{1, 1, 1, 2}), zeros(Shape4{1, 1, 2, 1}), Elementwise::add);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::shape_mismatch);
  }
}

TEST(TensorProperty, FlatRoundTripIsBitExact) {
  Rng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    const Shape4 s{1 + rng.below(3), 1 + rng.below(4), 1 + rng.below(6), 1 + rng.below(6)};
    const Tensor4 t = random_uniform(rng, s, -3.0, 3.0);
    const std::vector<float> flat(t.data().begin(), t.data().end());
    const Tensor4 back(s, flat);
    EXPECT_EQ(back, t);
    EXPECT_EQ(t.reshaped(Shape4{1, 1, 1, t.size()}).reshaped(s), t);
  }
}

TEST(TensorProperty, AddCommutesAndAssociatesExactlyInFixedOrder) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Shape4 s{1, 1 + rng.below(3), 1 + rng.below(5), 1 + rng.below(5)};
    const Tensor4 a = random_uniform(rng, s, -1.0, 1.0);
    const Tensor4 b = random_uniform(rng, s, -1.0, 1.0);
    EXPECT_EQ(a + b, b + a);
    // Integers in float are exact, so association is exact too.
    Tensor4 ia(s), ib(s), ic(s);
    for (std::size_t i = 0; i < ia.size(); ++i) {
      ia.data()[i] = static_cast<float>(rng.below(1000));
      ib.data()[i] = static_cast<float>(rng.below(1000));
      ic.data()[i] = static_cast<float>(rng.below(1000));
    }
    EXPECT_EQ((ia + ib) + ic, ia + (ib + ic));
  }
}
