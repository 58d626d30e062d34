#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <limits>
#include <random>

#include "fixtures.hpp"
#include "xeml/errors.hpp"
#include "xeml/ops.hpp"

using namespace xeml;
using xeml::testing::random_tensor;

namespace {

// Scalar loss sum_i r_i * out_i recorded as a custom op, so gradients of any
// tensor-valued op can be checked against finite differences of the same sum.
Tensor weighted_sum(const Tensor& out, const std::vector<float>& r, Tape& tape) {
  double acc = 0.0;
  for (std::size_t i = 0; i < out.numel(); ++i) acc += static_cast<double>(r[i]) * out[i];
  Tensor loss = Tensor::scalar(static_cast<float>(acc));
  tape.record({out}, loss, [out, loss, r]() mutable {
    auto g = out.grad_storage();
    const float go = loss.grad()[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += go * r[i];
  });
  return loss;
}

double weighted_sum_value(const Tensor& out, const std::vector<float>& r) {
  double acc = 0.0;
  for (std::size_t i = 0; i < out.numel(); ++i) acc += static_cast<double>(r[i]) * out[i];
  return acc;
}

using OpFn = std::function<Tensor(const std::vector<Tensor>&, Tape*)>;

// Checks d(sum r*op(inputs))/d(input) against central differences for every
// coordinate of every input. Returns the worst relative error.
double max_grad_error(const OpFn& op, std::vector<Tensor> inputs, float h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& t : inputs) t.set_requires_grad(true);
  const Tensor probe = op(inputs, nullptr);
  std::vector<float> r(probe.numel());
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  for (float& v : r) v = u(rng);

  Tape tape;
  backward(weighted_sum(op(inputs, &tape), r, tape));

  double worst = 0.0;
  for (auto& t : inputs) {
    const std::vector<float> analytic(t.grad().begin(), t.grad().end());
    for (std::size_t i = 0; i < t.numel(); ++i) {
      const float orig = t[i];
      t.mutable_data()[i] = orig + h;
      const double up = weighted_sum_value(op(inputs, nullptr), r);
      t.mutable_data()[i] = orig - h;
      const double down = weighted_sum_value(op(inputs, nullptr), r);
      t.mutable_data()[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[i];
      const double err = std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), 1e-2});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace

TEST(Conv2d, MatchesDirectLoops) {
  std::mt19937_64 rng(11);
  const std::size_t b = 2, cin = 3, cout = 4, h = 5, w = 6;
  Tensor x = random_tensor({b, cin, h, w}, rng);
  Tensor wt = random_tensor({cout, cin, 3, 3}, rng);
  Tensor bias = random_tensor({cout}, rng);
  Tensor y = ops::conv2d(x, wt, bias);
  ASSERT_EQ(y.shape(), (Shape{b, cout, h, w}));
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t co = 0; co < cout; ++co)
      for (long yy = 0; yy < static_cast<long>(h); ++yy)
        for (long xx = 0; xx < static_cast<long>(w); ++xx) {
          double acc = bias[co];
          for (std::size_t ci = 0; ci < cin; ++ci)
            for (long ky = 0; ky < 3; ++ky)
              for (long kx = 0; kx < 3; ++kx) {
                const long iy = yy + ky - 1, ix = xx + kx - 1;
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w)) continue;
                acc += static_cast<double>(wt[((co * cin + ci) * 3 + static_cast<std::size_t>(ky)) * 3 + static_cast<std::size_t>(kx)]) *
                       x[((n * cin + ci) * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)];
              }
          EXPECT_NEAR(y[((n * cout + co) * h + static_cast<std::size_t>(yy)) * w + static_cast<std::size_t>(xx)], acc, 1e-5);
        }
}

TEST(Conv2d, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(12);
  OpFn op = [](const std::vector<Tensor>& in, Tape* t) { return ops::conv2d(in[0], in[1], in[2], t); };
  const double err = max_grad_error(op, {random_tensor({2, 2, 4, 5}, rng), random_tensor({3, 2, 3, 3}, rng),
                                         random_tensor({3}, rng)}, 1e-2f, 1);
  EXPECT_LT(err, 1e-2);
}

TEST(Conv2d, RejectsMismatchedShapes) {
  std::mt19937_64 rng(13);
  Tensor x = random_tensor({1, 3, 4, 4}, rng);
  EXPECT_THROW(ops::conv2d(x, random_tensor({2, 2, 3, 3}, rng), random_tensor({2}, rng)), DimensionError);
  EXPECT_THROW(ops::conv2d(x, random_tensor({2, 3, 3, 3}, rng), random_tensor({3}, rng)), DimensionError);
  EXPECT_THROW(ops::conv2d(random_tensor({3, 4, 4}, rng), random_tensor({2, 3, 3, 3}, rng), random_tensor({2}, rng)),
               DimensionError);
}

TEST(BatchNorm, TrainModeNormalizesWithBiasedBatchStatistics) {
  std::mt19937_64 rng(21);
  const std::size_t b = 3, c = 2, hw = 4;
  Tensor x = random_tensor({b, c, 2, 2}, rng, -2.0f, 3.0f);
  Tensor gamma = Tensor::from({c}, {1.5f, -0.5f});
  Tensor beta = Tensor::from({c}, {0.1f, 0.2f});
  ops::RunningStats stats{Tensor::zeros({c}), Tensor::full({c}, 1.0f)};
  Tensor y = ops::batchnorm2d(x, gamma, beta, ops::NormMode::train, stats);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double mean = 0, var = 0;
    for (std::size_t n = 0; n < b; ++n)
      for (std::size_t i = 0; i < hw; ++i) mean += x[(n * c + ch) * hw + i];
    mean /= b * hw;
    for (std::size_t n = 0; n < b; ++n)
      for (std::size_t i = 0; i < hw; ++i) var += std::pow(x[(n * c + ch) * hw + i] - mean, 2);
    const double biased = var / (b * hw), unbiased = var / (b * hw - 1);
    for (std::size_t n = 0; n < b; ++n)
      for (std::size_t i = 0; i < hw; ++i) {
        const std::size_t k = (n * c + ch) * hw + i;
        EXPECT_NEAR(y[k], gamma[ch] * (x[k] - mean) / std::sqrt(biased + 1e-5) + beta[ch], 1e-5);
      }
    EXPECT_NEAR(stats.mean[ch], 0.1 * mean, 1e-6);
    EXPECT_NEAR(stats.var[ch], 0.9 + 0.1 * unbiased, 1e-6);
  }
}

TEST(BatchNorm, EvalModeLeavesRunningStatsAlone) {
  std::mt19937_64 rng(22);
  Tensor x = random_tensor({2, 2, 3, 3}, rng);
  Tensor gamma = Tensor::full({2}, 1.0f), beta = Tensor::zeros({2});
  ops::RunningStats stats{Tensor::from({2}, {0.5f, -0.5f}), Tensor::from({2}, {4.0f, 0.25f})};
  Tensor y = ops::batchnorm2d(x, gamma, beta, ops::NormMode::eval, stats, ops::NormStats::running);
  EXPECT_EQ(stats.mean[0], 0.5f);
  EXPECT_EQ(stats.var[1], 0.25f);
  for (std::size_t i = 0; i < 9; ++i) EXPECT_NEAR(y[i], (x[i] - 0.5f) / std::sqrt(4.0f + 1e-5f), 1e-6);
  Tensor yb = ops::batchnorm2d(x, gamma, beta, ops::NormMode::eval, stats, ops::NormStats::batch);
  EXPECT_EQ(stats.mean[0], 0.5f);
  Tensor yt = ops::batchnorm2d(x, gamma, beta, ops::NormMode::train, stats);
  for (std::size_t i = 0; i < yb.numel(); ++i) EXPECT_EQ(yb[i], yt[i]);
}

TEST(BatchNorm, DegenerateBatchIsRejectedInTrainMode) {
  Tensor x = Tensor::from({1, 1, 1, 1}, {3.0f});
  ops::RunningStats stats{Tensor::zeros({1}), Tensor::full({1}, 1.0f)};
  EXPECT_THROW(ops::batchnorm2d(x, Tensor::full({1}, 1.0f), Tensor::zeros({1}), ops::NormMode::train, stats),
               DegenerateBatchError);
}

TEST(BatchNorm, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(23);
  for (auto mode : {ops::NormStats::batch, ops::NormStats::running}) {
    OpFn op = [mode](const std::vector<Tensor>& in, Tape* t) {
      const ops::RunningStats stats{Tensor::from({2}, {0.1f, -0.2f}), Tensor::from({2}, {0.8f, 1.3f})};
      return ops::batchnorm2d(in[0], in[1], in[2], stats, mode, t);
    };
    const double err = max_grad_error(op, {random_tensor({3, 2, 2, 3}, rng), random_tensor({2}, rng, 0.5f, 1.5f),
                                           random_tensor({2}, rng)}, 1e-2f, 2);
    EXPECT_LT(err, 2e-2) << (mode == ops::NormStats::batch ? "batch" : "running");
  }
}

TEST(Relu, SubgradientAtZeroIsZero) {
  Tape tape;
  Tensor x = Tensor::from({4}, {-1.0f, 0.0f, 2.0f, -0.0f});
  x.set_requires_grad(true);
  Tensor y = ops::relu(x, &tape);
  EXPECT_EQ(y[0], 0.0f);
  EXPECT_EQ(y[2], 2.0f);
  backward(ops::sum(y, &tape));
  EXPECT_EQ(x.grad()[0], 0.0f);
  EXPECT_EQ(x.grad()[1], 0.0f);
  EXPECT_EQ(x.grad()[2], 1.0f);
  EXPECT_EQ(x.grad()[3], 0.0f);
}

TEST(Relu, NaNPropagates) {
  Tensor x = Tensor::from({3}, {std::nanf(""), -2.0f, 1.0f});
  Tensor y = ops::relu(x);
  EXPECT_TRUE(std::isnan(y[0]));
  EXPECT_EQ(y[1], 0.0f);
}

TEST(MaxPool, CeilModeAndFirstOccurrenceTies) {
  // 3x3 plane -> 2x2 output; ties resolve to the earliest element.
  Tensor x = Tensor::from({1, 1, 3, 3}, {5, 5, 1,
                                         5, 2, 7,
                                         0, 9, 3});
  x.set_requires_grad(true);
  Tape tape;
  Tensor y = ops::maxpool2x2(x, &tape);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
  EXPECT_EQ(y[0], 5.0f);
  EXPECT_EQ(y[1], 7.0f);
  EXPECT_EQ(y[2], 9.0f);
  EXPECT_EQ(y[3], 3.0f);
  backward(ops::sum(y, &tape));
  const std::vector<float> want{1, 0, 0, 0, 0, 1, 0, 1, 1};
  EXPECT_EQ(std::vector<float>(x.grad().begin(), x.grad().end()), want);
}

TEST(MaxPool, EvenPlanesMatchWindowOracle) {
  std::mt19937_64 rng(31);
  Tensor x = random_tensor({2, 3, 6, 8}, rng);
  Tensor y = ops::maxpool2x2(x);
  for (std::size_t p = 0; p < 6; ++p)
    for (std::size_t oy = 0; oy < 3; ++oy)
      for (std::size_t ox = 0; ox < 4; ++ox) {
        float best = -std::numeric_limits<float>::infinity();
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) best = std::max(best, x[p * 48 + (2 * oy + dy) * 8 + 2 * ox + dx]);
        EXPECT_EQ(y[p * 12 + oy * 4 + ox], best);
      }
}

TEST(MaxPool, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(32);
  OpFn op = [](const std::vector<Tensor>& in, Tape* t) { return ops::maxpool2x2(in[0], t); };
  EXPECT_LT(max_grad_error(op, {random_tensor({2, 2, 5, 4}, rng)}, 1e-3f, 3), 1e-2);
}

TEST(PairwiseSqDist, MatchesBruteForce) {
  std::mt19937_64 rng(41);
  Tensor q = random_tensor({7, 13}, rng), p = random_tensor({4, 13}, rng);
  Tensor d = ops::pairwise_sq_dist(q, p);
  ASSERT_EQ(d.shape(), (Shape{7, 4}));
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < 13; ++k) acc += std::pow(static_cast<double>(q[i * 13 + k]) - p[j * 13 + k], 2);
      EXPECT_NEAR(d[i * 4 + j], acc, 1e-5);
    }
  EXPECT_THROW(ops::pairwise_sq_dist(q, random_tensor({4, 12}, rng)), DimensionError);
}

TEST(PairwiseSqDist, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(42);
  OpFn op = [](const std::vector<Tensor>& in, Tape* t) { return ops::pairwise_sq_dist(in[0], in[1], t); };
  EXPECT_LT(max_grad_error(op, {random_tensor({5, 6}, rng), random_tensor({3, 6}, rng)}, 1e-2f, 4), 1e-2);
}

TEST(LogSoftmax, RowsNormalizeAndSurviveLargeLogits) {
  Tensor z = Tensor::from({2, 3}, {1000.0f, 1001.0f, 999.0f, -3.0f, 0.0f, 2.0f});
  Tensor lp = ops::log_softmax(z);
  for (std::size_t r = 0; r < 2; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 3; ++c) {
      EXPECT_TRUE(std::isfinite(lp[r * 3 + c]));
      s += std::exp(static_cast<double>(lp[r * 3 + c]));
    }
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
  EXPECT_NEAR(lp[1], -std::log(1.0 + std::exp(-1.0) + std::exp(-2.0)), 1e-6);
}

TEST(LogSoftmax, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(43);
  OpFn op = [](const std::vector<Tensor>& in, Tape* t) { return ops::log_softmax(in[0], t); };
  EXPECT_LT(max_grad_error(op, {random_tensor({4, 5}, rng, -3.0f, 3.0f)}, 1e-2f, 5), 1e-2);
}

TEST(CrossEntropy, ValueGradientAndLabelChecks) {
  Tensor lp = ops::log_softmax(Tensor::from({2, 3}, {0.0f, 1.0f, 2.0f, 3.0f, 1.0f, 0.0f}));
  lp.set_requires_grad(true);
  const std::vector<int> labels{2, 1};
  Tape tape;
  Tensor loss = ops::cross_entropy(lp, labels, &tape);
  EXPECT_NEAR(loss.item(), -(lp[2] + lp[4]) / 2.0, 1e-6);
  backward(loss);
  EXPECT_FLOAT_EQ(lp.grad()[2], -0.5f);
  EXPECT_FLOAT_EQ(lp.grad()[4], -0.5f);
  EXPECT_FLOAT_EQ(lp.grad()[0], 0.0f);
  const std::vector<int> bad{0, 3};
  try {
    ops::cross_entropy(lp, bad);
    FAIL() << "expected LabelError";
  } catch (const LabelError& e) {
    EXPECT_NE(std::string(e.what()).find("1"), std::string::npos);
  }
  const std::vector<int> short_labels{0};
  EXPECT_THROW(ops::cross_entropy(lp, short_labels), DimensionError);
}

TEST(GroupMean, MatchesLoopOracleAndBackpropagates) {
  std::mt19937_64 rng(51);
  Tensor x = random_tensor({6, 4}, rng);
  const std::vector<int> g{1, 0, 1, 2, 0, 2};
  Tensor m = ops::group_mean(x, g, 3);
  for (int grp = 0; grp < 3; ++grp)
    for (std::size_t k = 0; k < 4; ++k) {
      double s = 0.0;
      int n = 0;
      for (std::size_t r = 0; r < 6; ++r)
        if (g[r] == grp) {
          s += x[r * 4 + k];
          ++n;
        }
      EXPECT_NEAR(m[static_cast<std::size_t>(grp) * 4 + k], s / n, 1e-6);
    }
  OpFn op = [g](const std::vector<Tensor>& in, Tape* t) { return ops::group_mean(in[0], g, 3, t); };
  EXPECT_LT(max_grad_error(op, {x.clone()}, 1e-2f, 6), 1e-2);
  const std::vector<int> missing{0, 0, 0, 0, 1, 1};
  EXPECT_ANY_THROW(ops::group_mean(x, missing, 3));
}

TEST(SliceAndStack, ShapesAndGradients) {
  std::mt19937_64 rng(61);
  Tensor a = random_tensor({2, 3}, rng), b = random_tensor({2, 3}, rng);
  Tensor s = ops::stack(std::vector<Tensor>{a, b});
  ASSERT_EQ(s.shape(), (Shape{2, 2, 3}));
  EXPECT_EQ(s[6], b[0]);
  Tensor x = random_tensor({5, 2}, rng);
  OpFn op = [](const std::vector<Tensor>& in, Tape* t) { return ops::slice_rows(in[0], 1, 4, t); };
  EXPECT_LT(max_grad_error(op, {x}, 1e-2f, 7), 1e-3);
  EXPECT_THROW(ops::slice_rows(x, 3, 7), DimensionError);
}

TEST(Flatten, KeepsLeadingAxis) {
  std::mt19937_64 rng(71);
  Tensor x = random_tensor({3, 2, 2, 2}, rng);
  Tensor f = ops::flatten(x);
  EXPECT_EQ(f.shape(), (Shape{3, 8}));
  EXPECT_EQ(f[9], x[9]);
}
