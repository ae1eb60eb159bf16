#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <cstring>
#include <sstream>

#include "dualformer.hpp"
#include "support.hpp"

namespace df = dualformer;
using df::Tensor;
using df::testing::random_tensor;

TEST(Tensor, RejectsZeroExtentAndLengthMismatch) {
  EXPECT_THROW(Tensor<double>({2, 0}), df::ShapeError);
  EXPECT_THROW(Tensor<double>({2, 2}, std::vector<double>{1, 2, 3}), df::ShapeError);
  Tensor<double> t({2, 3});
  EXPECT_EQ(t.size(), 6u);
  EXPECT_THROW(t.at({2, 0}), df::ShapeError);
  EXPECT_THROW(t.reshaped({4}), df::ShapeError);
}

TEST(Matmul, IdentityIsExact) {
  std::mt19937_64 rng(1);
  const Tensor<double> b = random_tensor({3, 3}, rng);
  Tensor<double> eye({3, 3});
  for (std::size_t i = 0; i < 3; ++i) eye[i * 3 + i] = 1.0;
  EXPECT_EQ(df::matmul(eye, b), b);
  EXPECT_EQ(df::matmul(b, eye), b);
}

TEST(Matmul, HandArithmetic) {
  const Tensor<double> a({2, 2}, {1, 2, 3, 4});
  const Tensor<double> b({2, 1}, {0, 1});
  EXPECT_EQ(df::matmul(a, b), Tensor<double>({2, 1}, {2, 4}));
}

TEST(Matmul, MismatchNamesBothShapes) {
  try {
    df::matmul(Tensor<double>({2, 3}), Tensor<double>({4, 5}));
    FAIL() << "expected ShapeError";
  } catch (const df::ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("[2x3]"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("[4x5]"), std::string::npos);
  }
}

TEST(Softmax, UniformAndAnalyticRows) {
  const auto u = df::softmax_rows(Tensor<double>({1, 4}, 2.5));
  for (double v : u.values()) EXPECT_DOUBLE_EQ(v, 0.25);
  const auto y = df::softmax_rows(Tensor<double>({1, 2}, {0.0, std::log(2.0)}));
  EXPECT_NEAR(y[0], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(y[1], 2.0 / 3.0, 1e-15);
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor<double> x = random_tensor({5, 9}, rng, -20, 20);
    Tensor<double> shifted = x;
    const double c = std::uniform_real_distribution<double>(-100, 100)(rng);
    for (double& v : shifted.values()) v += c;
    const auto a = df::softmax_rows(x), b = df::softmax_rows(shifted);
    for (std::size_t i = 0; i < 5; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < 9; ++j) {
        EXPECT_GE(a[i * 9 + j], 0.0);
        s += a[i * 9 + j];
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
    EXPECT_LT(df::max_abs_diff(a, b), 1e-12);
  }
}

TEST(LayerNorm, ConstantRowAndTwoElementRow) {
  const Tensor<double> ones({4}, 1.0), zeros({4});
  const auto z = df::layer_norm(Tensor<double>({2, 4}, 3.0), ones, zeros);
  for (double v : z.values()) EXPECT_EQ(v, 0.0);
  const Tensor<double> g({2}, 1.0), s({2});
  const auto y = df::layer_norm(Tensor<double>({1, 2}, {1.0, 3.0}), g, s);
  // population variance 1, so xhat = +-1/sqrt(1 + eps)
  EXPECT_NEAR(y[0], -1.0, 1e-5);
  EXPECT_NEAR(y[1], 1.0, 1e-5);
  EXPECT_NEAR(y[1], 1.0 / std::sqrt(1.0 + df::kLayerNormEps), 1e-15);
}

TEST(LayerNorm, OutputStatisticsOnRandomRows) {
  std::mt19937_64 rng(3);
  const std::size_t d = 16;
  const Tensor<double> x = random_tensor({20, d}, rng, -5, 5);
  const auto y = df::layer_norm(x, Tensor<double>({d}, 1.0), Tensor<double>({d}));
  for (std::size_t r = 0; r < 20; ++r) {
    double mean = 0, var = 0;
    for (std::size_t j = 0; j < d; ++j) mean += y[r * d + j];
    mean /= d;
    for (std::size_t j = 0; j < d; ++j) var += (y[r * d + j] - mean) * (y[r * d + j] - mean);
    var /= d;
    EXPECT_LT(std::abs(mean), 1e-10);
    EXPECT_LT(std::abs(var - 1.0), 1e-5);  // eps shrinks variance by var/(var+eps)
  }
  EXPECT_THROW(df::layer_norm(x, Tensor<double>({d + 1}, 1.0), Tensor<double>({d + 1})), df::ShapeError);
}

TEST(Gelu, KnownValues) {
  const auto y = df::gelu(Tensor<double>({3}, {0.0, 10.0, 1.0}));
  EXPECT_EQ(y[0], 0.0);
  EXPECT_LT(std::abs(y[1] - 10.0), 1e-6);
  // Phi(1), evaluated with 30-digit erf.
  EXPECT_NEAR(y[2], 0.841344746068542948585, 1e-15);
}

TEST(Linear, IdentityZeroWeightAndComposition) {
  std::mt19937_64 rng(4);
  const Tensor<double> x = random_tensor({2, 3, 4}, rng);
  Tensor<double> eye({4, 4});
  for (std::size_t i = 0; i < 4; ++i) eye[i * 4 + i] = 1.0;
  EXPECT_EQ(df::linear(x, eye, Tensor<double>({4})), x);

  const Tensor<double> b({5}, {1, 2, 3, 4, 5});
  const auto y = df::linear(x, Tensor<double>({4, 5}), b);
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t j = 0; j < 5; ++j) EXPECT_EQ(y[r * 5 + j], b[j]);

  const Tensor<double> w = random_tensor({4, 5}, rng);
  const auto direct = df::linear(x, w, b);
  auto composed = df::matmul(df::testing::rows_of(x), w);
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t j = 0; j < 5; ++j) composed[r * 5 + j] += b[j];
  EXPECT_LT(df::max_abs_diff(direct.reshaped({6, 5}), composed), 1e-12);
  EXPECT_THROW(df::linear(x, Tensor<double>({3, 5})), df::ShapeError);
}

TEST(DepthwiseConv3d, BoxSumZeroKernelAndIdentity) {
  auto box = df::ConvKernel3D<double>::zeros({2, 2, 2}, {2, 2, 2}, 1, false);
  for (double& w : box.weights.values()) w = 1.0;
  const auto y = df::depthwise_conv3d(Tensor<double>({4, 4, 4, 1}, 1.0), box);
  EXPECT_EQ(y.shape(), (df::Shape{2, 2, 2, 1}));
  for (double v : y.values()) EXPECT_EQ(v, 8.0);

  std::mt19937_64 rng(5);
  const Tensor<double> x = random_tensor({3, 4, 5, 2}, rng);
  const auto zero = df::ConvKernel3D<double>::zeros({3, 3, 3}, {1, 1, 1}, 2, true);
  const auto zeroed = df::depthwise_conv3d(x, zero, {1, 1, 1});
  for (double v : zeroed.values()) EXPECT_EQ(v, 0.0);

  auto one = df::ConvKernel3D<double>::zeros({1, 1, 1}, {1, 1, 1}, 2, false);
  for (double& w : one.weights.values()) w = 1.0;
  EXPECT_EQ(df::depthwise_conv3d(x, one), x);
}

TEST(DepthwiseConv3d, NonIntegerOutputAndChannelMismatch) {
  auto k = df::ConvKernel3D<double>::zeros({2, 2, 2}, {2, 2, 2}, 1, false);
  EXPECT_THROW(df::depthwise_conv3d(Tensor<double>({3, 4, 4, 1}), k), df::ShapeError);
  EXPECT_THROW(df::depthwise_conv3d(Tensor<double>({4, 4, 4, 2}), k), df::ShapeError);
}

TEST(DepthwiseConv3d, LinearInInput) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    auto k = df::ConvKernel3D<double>::zeros({3, 2, 3}, {1, 2, 1}, 3, false);
    df::testing::fill_uniform(k.weights, rng, 1.0);
    const Tensor<double> x = random_tensor({4, 6, 5, 3}, rng), y = random_tensor({4, 6, 5, 3}, rng);
    const double a = 0.7, b = -1.3;
    Tensor<double> mix(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) mix[i] = a * x[i] + b * y[i];
    const auto lhs = df::depthwise_conv3d(mix, k, {1, 0, 1});
    auto cx = df::depthwise_conv3d(x, k, {1, 0, 1});
    const auto cy = df::depthwise_conv3d(y, k, {1, 0, 1});
    for (std::size_t i = 0; i < cx.size(); ++i) cx[i] = a * cx[i] + b * cy[i];
    EXPECT_LT(df::max_abs_diff(lhs, cx), 1e-10);
  }
}

TEST(DepthwiseConv3d, ParallelMatchesSequentialBitwise) {
  std::mt19937_64 rng(7);
  auto k = df::ConvKernel3D<double>::zeros({3, 3, 3}, {1, 1, 1}, 4, true);
  df::testing::fill_uniform(k.weights, rng, 1.0);
  df::testing::fill_uniform(*k.bias, rng, 1.0);
  const Tensor<double> x = random_tensor({6, 5, 5, 4}, rng);
  df::ExecContext par;
  par.threads = 4;
  EXPECT_EQ(df::depthwise_conv3d(x, k, {1, 1, 1}), df::depthwise_conv3d(x, k, {1, 1, 1}, par));
}

TEST(FiniteDiff, QuadraticSumAndSoftmaxRows) {
  std::mt19937_64 rng(8);
  const Tensor<double> x = random_tensor({3, 4}, rng);
  const auto half_sq = [](const Tensor<double>& t) {
    double s = 0;
    for (double v : t.values()) s += 0.5 * v * v;
    return s;
  };
  EXPECT_LT(df::max_abs_diff(df::finite_diff_grad(half_sq, x), x), 1e-8);

  const auto sum = [](const Tensor<double>& t) {
    double s = 0;
    for (double v : t.values()) s += v;
    return s;
  };
  const auto ones = df::finite_diff_grad(sum, x);
  for (double g : ones.values()) EXPECT_NEAR(g, 1.0, 1e-9);

  const auto softmax_sum = [&](const Tensor<double>& t) { return sum(df::softmax_rows(t)); };
  const auto flat = df::finite_diff_grad(softmax_sum, x);
  for (double g : flat.values()) EXPECT_LT(std::abs(g), 1e-6);
}

TEST(FiniteDiff, NonFiniteEvaluationIsNumericError) {
  const auto bad = [](const Tensor<double>& t) { return std::log(t[0]); };
  EXPECT_THROW(df::finite_diff_grad(bad, Tensor<double>({1}, 0.0)), df::NumericError);
}

// Forward-mode derivatives through every kernel agree with central differences.
TEST(DualNumbers, KernelDerivativesMatchFiniteDifferences) {
  std::mt19937_64 rng(9);
  const std::size_t d = 6;
  const Tensor<double> x = random_tensor({4, d}, rng);
  const Tensor<double> w = random_tensor({d, d}, rng), weights = random_tensor({4, d}, rng);
  const Tensor<double> gain = random_tensor({d}, rng), shift = random_tensor({d}, rng);
  const auto f = [&](const auto& in) {
    using T = typename std::decay_t<decltype(in)>::value_type;
    const auto h = df::gelu(df::linear(df::layer_norm(in, df::tensor_cast<T>(gain), df::tensor_cast<T>(shift)),
                                       df::tensor_cast<T>(w)));
    const auto s = df::softmax_rows(h);
    T acc{};
    for (std::size_t i = 0; i < s.size(); ++i) acc += s[i] * T(weights[i]) + h[i] * h[i] * T(0.1);
    return acc;
  };
  const auto numeric = df::finite_diff_grad([&](const Tensor<double>& t) { return f(t); }, x);
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto xd = df::tensor_cast<df::Dual<double>>(x);
    xd[i].d = 1.0;
    EXPECT_LT(df::relative_error(f(xd).d, numeric[i]), 1e-6) << "coordinate " << i;
  }
}

TEST(Serialization, RoundTripsF64AndF32) {
  std::mt19937_64 rng(10);
  const Tensor<double> x = random_tensor({2, 3, 4}, rng);
  std::stringstream ss;
  df::write_tensor(ss, x);
  const std::string bytes = ss.str();
  ASSERT_EQ(bytes.substr(0, 4), "DFTK");
  EXPECT_EQ(bytes.size(), 4 + 4 + 4 + 3 * 8 + 4 + 24 * 8);
  EXPECT_EQ(df::read_tensor<double>(ss), x);

  std::stringstream sf;
  df::write_tensor(sf, df::tensor_cast<float>(x));
  const auto back = df::read_tensor<double>(sf);
  EXPECT_LT(df::max_abs_diff(back, x), 1e-6);
}

TEST(Serialization, HeaderLayoutIsLittleEndian) {
  std::stringstream ss;
  df::write_tensor(ss, Tensor<double>({2}, {1.0, -2.0}));
  const std::string b = ss.str();
  const unsigned char expected_header[] = {'D', 'F', 'T', 'K', 1, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0};
  ASSERT_GE(b.size(), sizeof(expected_header));
  for (std::size_t i = 0; i < sizeof(expected_header); ++i) {
    EXPECT_EQ(static_cast<unsigned char>(b[i]), expected_header[i]) << "byte " << i;
  }
  double first = 0;
  std::memcpy(&first, b.data() + sizeof(expected_header), sizeof(double));
  EXPECT_EQ(first, 1.0);
}

TEST(Serialization, RejectsBadMagicAndTruncation) {
  std::stringstream bad("XXXX");
  EXPECT_THROW(df::read_tensor<double>(bad), df::FormatError);
  std::stringstream ss;
  df::write_tensor(ss, Tensor<double>({3}, 1.0));
  std::string bytes = ss.str();
  bytes.resize(bytes.size() - 4);
  std::stringstream cut(bytes);
  EXPECT_THROW(df::read_tensor<double>(cut), df::FormatError);
}
