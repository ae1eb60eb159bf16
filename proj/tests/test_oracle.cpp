#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dualformer.hpp"
#include "support.hpp"

namespace df = dualformer;
namespace ref = dualformer::oracle;
using df::Tensor;
using df::testing::random_tensor;

TEST(OracleAttention, TwoTokenHandCase) {
  const Tensor<double> eye({2, 2}, {1, 0, 0, 1});
  const auto y = ref::full_attention_ref(eye, eye, eye);
  const double w0 = 0.669761549326656925616794945834;
  EXPECT_NEAR(y[0], w0, 1e-15);
  EXPECT_NEAR(y[3], w0, 1e-15);
  EXPECT_NEAR(y[1], 1.0 - w0, 1e-15);
}

TEST(OracleAttention, AllVisibleMaskEqualsFull) {
  std::mt19937_64 rng(40);
  const Tensor<double> q = random_tensor({5, 4}, rng), k = random_tensor({6, 4}, rng), v = random_tensor({6, 3}, rng);
  EXPECT_EQ(ref::masked_attention_ref(q, k, v, ref::AttentionMask(5, 6)), ref::full_attention_ref(q, k, v));
}

TEST(OracleAttention, MaskedKeysHaveNoInfluence) {
  std::mt19937_64 rng(41);
  const Tensor<double> q = random_tensor({3, 4}, rng), k = random_tensor({5, 4}, rng);
  Tensor<double> v = random_tensor({5, 2}, rng);
  ref::AttentionMask mask(3, 5);
  for (std::size_t i = 0; i < 3; ++i) mask.set(i, 4, false);
  const auto a = ref::masked_attention_ref(q, k, v, mask);
  v[8] = 1e6;
  v[9] = -1e6;
  EXPECT_EQ(ref::masked_attention_ref(q, k, v, mask), a);
}

TEST(OracleAttention, EmptyRowAndShapeErrors) {
  ref::AttentionMask mask(2, 3);
  mask.set(1, 0, false);
  mask.set(1, 1, false);
  mask.set(1, 2, false);
  const Tensor<double> q({2, 2}), k({3, 2}), v({3, 2});
  EXPECT_THROW(ref::masked_attention_ref(q, k, v, mask), df::ConfigError);
  EXPECT_THROW(ref::masked_attention_ref(q, k, v, ref::AttentionMask(2, 2)), df::ShapeError);
  EXPECT_THROW(ref::full_attention_ref(q, Tensor<double>({3, 3}), v), df::ShapeError);
}

TEST(OracleAttention, WindowMaskRowsCoverOneWindow) {
  const df::WindowGrid grid({2, 4, 4}, {1, 2, 2});
  const auto mask = ref::window_mask(grid);
  ASSERT_EQ(mask.queries(), 32u);
  for (std::size_t i = 0; i < 32; ++i) {
    std::size_t visible = 0;
    for (std::size_t j = 0; j < 32; ++j) visible += mask.allowed(i, j) ? 1 : 0;
    EXPECT_EQ(visible, 4u);
    EXPECT_TRUE(mask.allowed(i, i));
  }
  EXPECT_TRUE(mask.allowed(0, 5));   // (0,0,0) and (0,1,1)
  EXPECT_FALSE(mask.allowed(0, 2));  // (0,0,2) sits in the next window
}

TEST(OraclePooling, IdentityAndGlobalMean) {
  std::mt19937_64 rng(42);
  const Tensor<double> x = random_tensor({2, 4, 6, 3}, rng);
  EXPECT_EQ(ref::adaptive_avg_pool3d_ref(x, {2, 4, 6}), x);
  const auto g = ref::adaptive_avg_pool3d_ref(x, {1, 1, 1});
  for (std::size_t c = 0; c < 3; ++c) {
    double s = 0;
    for (std::size_t i = 0; i < 48; ++i) s += x[i * 3 + c];
    EXPECT_NEAR(g[c], s / 48.0, 1e-15);
  }
  EXPECT_THROW(ref::adaptive_avg_pool3d_ref(x, {1, 3, 1}), df::ShapeError);
}

TEST(OraclePooling, RegionMeans) {
  Tensor<double> x({1, 2, 4, 1});
  for (std::size_t i = 0; i < 8; ++i) x[i] = static_cast<double>(i);
  const auto y = ref::adaptive_avg_pool3d_ref(x, {1, 1, 2});
  EXPECT_DOUBLE_EQ(y[0], (0 + 1 + 4 + 5) / 4.0);
  EXPECT_DOUBLE_EQ(y[1], (2 + 3 + 6 + 7) / 4.0);
}

TEST(OracleConv2d, HandCaseWithStride) {
  Tensor<double> x({3, 3, 1});
  for (std::size_t i = 0; i < 9; ++i) x[i] = static_cast<double>(i + 1);
  const Tensor<double> k({2, 2, 1, 1}, {1, 0, 0, -1});
  const auto y = ref::conv2d_ref(x, k, 1, 1);
  EXPECT_EQ(y.shape(), (df::Shape{2, 2, 1}));
  for (double v : y.values()) EXPECT_DOUBLE_EQ(v, -4.0);
  EXPECT_THROW(ref::conv2d_ref(x, k, 2, 2), df::ShapeError);
  EXPECT_THROW(ref::conv2d_ref(x, Tensor<double>({2, 2, 2, 1}), 1, 1), df::ShapeError);
}

TEST(OracleConv2d, AgreesWithPatchConvOnSingleFrame) {
  std::mt19937_64 rng(43);
  const Tensor<double> x = random_tensor({8, 8, 3}, rng);
  const Tensor<double> k = random_tensor({4, 4, 3, 5}, rng);
  auto conv = df::PatchConv3D<double>::zeros({1, 4, 4}, 3, 5);
  conv.weight = k.reshaped({1, 4, 4, 3, 5});
  const auto fast = df::patch_conv3d(x.reshaped({1, 8, 8, 3}), conv);
  EXPECT_LT(df::max_abs_diff(fast.reshaped({2, 2, 5}), ref::conv2d_ref(x, k, 4, 4)), 1e-12);
}

TEST(OracleAttention, SingleTokenReturnsValue) {
  std::mt19937_64 rng(44);
  const Tensor<double> q = random_tensor({1, 3}, rng), v = random_tensor({1, 3}, rng);
  EXPECT_EQ(ref::full_attention_ref(q, q, v), v);
}

TEST(OracleAttention, ZeroScoresGiveColumnMean) {
  std::mt19937_64 rng(45);
  const Tensor<double> q({2, 2}, {1, 0, 2, 0}), k({3, 2}, {0, 1, 0, -2, 0, 5});
  const Tensor<double> v = random_tensor({3, 4}, rng);
  const auto y = ref::full_attention_ref(q, k, v);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t e = 0; e < 4; ++e) EXPECT_NEAR(y[i * 4 + e], (v[e] + v[4 + e] + v[8 + e]) / 3.0, 1e-15);
}

TEST(OracleAttention, BlockDiagonalMaskEqualsPerWindowAttention) {
  std::mt19937_64 rng(46);
  const df::WindowGrid grid({2, 4, 4}, {2, 2, 2});
  const Tensor<double> x = random_tensor({2, 4, 4, 3}, rng);
  const auto rows = df::testing::rows_of(x);
  const auto masked = ref::masked_attention_ref(rows, rows, rows, ref::window_mask(grid));
  const auto windows = df::window_partition(x, grid);
  Tensor<double> per_window(windows.shape());
  for (std::size_t w = 0; w < grid.window_count(); ++w) {
    const Tensor<double> tokens({8, 3}, std::vector<double>(windows.data() + w * 24, windows.data() + (w + 1) * 24));
    const auto y = ref::full_attention_ref(tokens, tokens, tokens);
    std::copy_n(y.data(), 24, per_window.data() + w * 24);
  }
  EXPECT_LT(df::max_abs_diff(masked.reshaped(x.shape()), df::window_reverse(per_window, grid)), 1e-12);
}

TEST(OracleAttention, SingleVisibleKeySelectsItsValue) {
  std::mt19937_64 rng(47);
  const Tensor<double> q = random_tensor({3, 2}, rng), k = random_tensor({4, 2}, rng), v = random_tensor({4, 2}, rng);
  ref::AttentionMask mask(3, 4, false);
  const std::size_t pick[] = {2, 0, 3};
  for (std::size_t i = 0; i < 3; ++i) mask.set(i, pick[i], true);
  const auto y = ref::masked_attention_ref(q, k, v, mask);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(y[i * 2], v[pick[i] * 2]);
    EXPECT_EQ(y[i * 2 + 1], v[pick[i] * 2 + 1]);
  }
}

TEST(OraclePooling, OnesStayOnes) {
  const Tensor<double> x({4, 6, 2, 3}, 1.0);
  for (const df::Extent3 target : {df::Extent3{1, 1, 1}, df::Extent3{2, 3, 2}, df::Extent3{4, 1, 2}}) {
    const auto y = ref::adaptive_avg_pool3d_ref(x, target);
    for (double v : y.values()) EXPECT_EQ(v, 1.0);
  }
}

TEST(OracleConv2d, IdentityAndZeroKernels) {
  std::mt19937_64 rng(48);
  const Tensor<double> x = random_tensor({5, 4, 3}, rng);
  Tensor<double> eye({1, 1, 3, 3});
  for (std::size_t c = 0; c < 3; ++c) eye[c * 3 + c] = 1.0;
  EXPECT_EQ(ref::conv2d_ref(x, eye, 1, 1), x);
  const auto zero = ref::conv2d_ref(x, Tensor<double>({2, 2, 3, 2}), 1, 1);
  for (double v : zero.values()) EXPECT_EQ(v, 0.0);
}

TEST(OracleConv2d, MatchesDepthwiseWithSingletonTime) {
  std::mt19937_64 rng(49);
  const Tensor<double> x = random_tensor({6, 5, 2}, rng);
  const Tensor<double> dw = random_tensor({2, 1, 3, 3}, rng);  // (C, 1, kh, kw)
  const df::ConvKernel3D<double> k{{1, 3, 3}, {1, 1, 1}, 2, dw, std::nullopt};
  const auto fast = df::depthwise_conv3d(x.reshaped({1, 6, 5, 2}), k, {0, 0, 0});
  Tensor<double> dense({3, 3, 2, 2});  // per-channel kernel on the diagonal
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < 9; ++i) dense[(i * 2 + c) * 2 + c] = dw[c * 9 + i];
  EXPECT_LT(df::max_abs_diff(fast.reshaped({4, 3, 2}), ref::conv2d_ref(x, dense, 1, 1)), 1e-12);
}
