#include <lsk/complexity.hpp>

#include <gtest/gtest.h>

#include <cmath>

using namespace lsk;

namespace {

double rel(double got, double want) { return std::abs(got - want) / std::abs(want); }

}  // namespace

TEST(ParamCount, SeparableSrcnnMatchesPublishedExactly) {
  EXPECT_EQ(param_count(srcnn_spec(true)), 21473u);
}

TEST(ParamCount, SeparableEspcnAtScaleTwo) {
  EXPECT_EQ(param_count(espcn_spec(true, 2)), 12100u);
}

TEST(ParamCount, SingleSquareLayerWithoutBias) {
  ModelSpec s{"one", {LayerSpec{LayerKind::square, 1, 1, 0, 3, false, ActivationKind::identity}},
              Upsampling::pre_bicubic, 2};
  EXPECT_EQ(param_count(s), 9u);
}

TEST(ParamCount, ExtraBiasFlag) {
  const ModelSpec s = srcnn_spec(true);
  EXPECT_EQ(param_count(s, {.count_extra_bias = true}) - param_count(s, {.count_extra_bias = false}), 32u);
  const ModelSpec n = srcnn_spec(false);
  EXPECT_EQ(param_count(n, {.count_extra_bias = true}), param_count(n, {.count_extra_bias = false}));
}

TEST(ParamRatio, EqualChannelsGiveTwoOverK) {
  EXPECT_EQ(param_ratio(32, 32, 32, 5), Rational(2, 5));
  EXPECT_EQ(param_ratio(32, 32, 32, 3), Rational(2, 3));
  for (std::int64_t c : {1, 7, 64})
    for (std::int64_t k : {1, 3, 5, 9}) EXPECT_EQ(param_ratio(c, c, c, k), Rational(2, k));
}

TEST(ParamRatio, SingleInputChannelInflates) {
  // (1*5*32 + 32*5*32) / (1*5*5*32)
  EXPECT_EQ(param_ratio(1, 32, 32, 5), Rational(33, 5));
  EXPECT_GT(to_double(param_ratio(1, 32, 32, 5)), 1.0);
}

TEST(FlopConv, SingleWindowAndUnitMap) {
  EXPECT_EQ(flop_window(3), (FlopCount{9, 8}));
  EXPECT_EQ(flop_conv_square(3, 1, 1, 1, 1), (FlopCount{9, 9}));
}

TEST(FlopConv, SquareOverSeparableMulRatioIsHalfK) {
  const FlopCount sq = flop_conv_square(5, 32, 32, 512, 512);
  const FlopCount sep = flop_conv_separable(5, 32, 32, 32, 512, 512);
  EXPECT_EQ(Rational(static_cast<std::int64_t>(sq.mul), static_cast<std::int64_t>(sep.mul)), Rational(5, 2));
}

TEST(FlopConv, SeparableCheaperForEqualChannels) {
  for (std::uint64_t k : {3u, 5u, 7u, 9u})
    for (std::uint64_t c : {1u, 4u, 32u}) {
      EXPECT_LT(flop_conv_separable(k, c, c, c, 17, 23).mul, flop_conv_square(k, c, c, 17, 23).mul);
      EXPECT_LT(flop_conv_separable(k, c, c, c, 17, 23).add, flop_conv_square(k, c, c, 17, 23).add);
    }
}

TEST(FlopCount, AdditionIsExactAndCommutative) {
  const FlopCount a{123456789012ull, 98765432109ull}, b{1, 2}, c{7, 0};
  EXPECT_EQ(a + b, b + a);
  EXPECT_EQ((a + b) + c, a + (b + c));
  EXPECT_EQ((a + b).mul, 123456789013ull);
}

TEST(FlopModel, SrcnnAt512) {
  const FlopCount f = flop_model(srcnn_spec(false), 512, 512);
  EXPECT_EQ(f.mul, 262144ull * 57184ull);
  EXPECT_LT(rel(static_cast<double>(f.mul), 15.02e9), 0.005);
}

TEST(FlopModel, SeparableSrcnnTableOpsAt512) {
  const ModelReport r = model_report(srcnn_spec(true), 512, 512, FlopGrid::feature);
  EXPECT_EQ(r.table_ops, 262144ull * 21473ull);
  EXPECT_LT(rel(static_cast<double>(r.table_ops), 5.64e9), 0.005);
}

TEST(FlopModel, EspcnOnFeatureGrid) {
  const FlopCount f = flop_model(espcn_spec(false, 2), 512, 512, FlopGrid::feature);
  EXPECT_LT(rel(static_cast<double>(f.mul), 5.58e9), 0.01);
  // The native grid convolves at LR resolution: a quarter of the work.
  EXPECT_EQ(flop_model(espcn_spec(false, 2), 512, 512, FlopGrid::native).mul * 4, f.mul);
}

TEST(FlopModel, IndivisibleOutputForPostUpsampling) {
  try {
    flop_model(espcn_spec(false, 3), 512, 512, FlopGrid::native);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::invalid_shape);
  }
}

TEST(FlopRatios, AlphaAndBetaLimits) {
  struct Case {
    std::int64_t k;
    Rational alpha, beta;
  };
  for (const Case& c : {Case{3, Rational(3, 2), Rational(2)}, Case{5, Rational(5, 2), Rational(3)},
                        Case{9, Rational(9, 2), Rational(5)}}) {
    const FlopRatios r = flop_ratios(c.k);
    EXPECT_EQ(r.alpha, c.alpha);
    EXPECT_EQ(r.beta_limit, c.beta);
    EXPECT_LT(std::abs(to_double(r.beta) - to_double(c.beta)), 1e-5);
  }
}

TEST(FlopRatios, ExactBetaMatchesLayerCounts) {
  for (std::int64_t k : {3, 5, 9}) {
    const FlopCount sq = flop_conv_square(k, 8, 8, 20, 30);
    const FlopCount sep = flop_conv_separable(k, 8, 8, 8, 20, 30);
    EXPECT_EQ(flop_ratios(k, 20, 30).beta,
              Rational(static_cast<std::int64_t>(sq.add), static_cast<std::int64_t>(sep.add)));
  }
}

TEST(ComparisonReport, SrcnnDecline) {
  const auto rows = comparison_report({{srcnn_spec(false), srcnn_spec(true)}}, 512, 512);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_NEAR(rows[0].param_decline_pct, 62.48, 0.5);
}

TEST(ComparisonReport, VdsrB1) {
  const auto rows = comparison_report({{vdsr_spec(false, 1), vdsr_spec(true, 1)}}, 512, 512);
  EXPECT_NEAR(rows[0].normal.params / 1e3, 38.1, 0.1);
  EXPECT_NEAR(rows[0].separable.params / 1e3, 25.9, 0.1);
  EXPECT_NEAR(rows[0].param_decline_pct, 32.1, 0.5);
}

TEST(ComparisonReport, IdenticalPairHasNoDecline) {
  const auto rows = comparison_report({{vdsr_spec(false, 2), vdsr_spec(false, 2)}}, 64, 64);
  EXPECT_EQ(rows[0].param_decline_pct, 0.0);
  EXPECT_EQ(rows[0].flop_decline_pct, 0.0);
}

TEST(ComparisonReport, CsvFormatting) {
  const auto rows = comparison_report({{srcnn_spec(false), srcnn_spec(true)}}, 512, 512);
  const std::string csv = report_csv(rows);
  EXPECT_NE(csv.find("S-SRCNN,21.47,5.63,"), std::string::npos) << csv;
  EXPECT_EQ(csv.rfind("model,params_k,flops_g,", 0), 0u);
}

TEST(ModelSpec, PresetsAreValidAndNamed) {
  for (const char* name : {"SRCNN", "S-SRCNN-9-s5-5", "ESPCN-5-3-3", "S-ESPCN", "VDSR-B2", "S-VDSR-B3"}) {
    const ModelSpec s = spec_from_name(name, 2);
    EXPECT_NO_THROW(s.validate()) << name;
    EXPECT_TRUE(inflating_separable_layers(s).empty()) << name;
  }
  EXPECT_THROW(spec_from_name("SRGAN"), Error);
  EXPECT_THROW(spec_from_name("VDSR-Bx"), Error);
}

TEST(ModelSpec, SerializationRoundTrip) {
  for (const ModelSpec& s : {srcnn_spec(true, 3, {16, 8}), espcn_spec(false, 4), vdsr_spec(true, 2)}) {
    EXPECT_EQ(parse_model_spec(serialize(s)), s);
  }
  EXPECT_THROW(parse_model_spec("name=x;up=pre;scale=2;layers=sq:1:1:4:b:id"), Error);
  EXPECT_THROW(parse_model_spec("name=x;up=sideways;scale=2;layers=sq:1:1:3:b:id"), Error);
}

TEST(ModelSpec, ChannelChainChecked) {
  ModelSpec s = srcnn_spec(false);
  s.layers[1].c_in = 63;
  try {
    s.validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::invalid_spec);
  }
}
