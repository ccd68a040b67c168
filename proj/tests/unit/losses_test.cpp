#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "depthfuse/autodiff.hpp"
#include "depthfuse/error.hpp"
#include "depthfuse/gradcheck.hpp"
#include "depthfuse/losses.hpp"
#include "test_util.hpp"

namespace depthfuse {
namespace {

using testing::random_mask;
using testing::random_tensor;

Tensor<double> row(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor<double>(Shape{1, 1, 1, n}, v);
}

// SSIM at one window from raw moments, E[xy] - E[x]E[y].
double naive_ssim(const Tensor<double>& x, const Tensor<double>& y, std::size_t n, std::size_t c,
                  std::size_t r0, std::size_t c0, std::size_t win, double c1, double c2) {
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = r0; i < r0 + win; ++i) {
    for (std::size_t j = c0; j < c0 + win; ++j) {
      const double a = x.at(n, c, i, j), b = y.at(n, c, i, j);
      sx += a;
      sy += b;
      sxx += a * a;
      syy += b * b;
      sxy += a * b;
    }
  }
  const double m = static_cast<double>(win * win);
  const double mx = sx / m, my = sy / m;
  const double vx = sxx / m - mx * mx, vy = syy / m - my * my, cxy = sxy / m - mx * my;
  return (2 * mx * my + c1) * (2 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
}

TEST(L1Loss, IdenticalIsZero) {
  Rng rng(1);
  const auto t = random_tensor(Shape{2, 1, 4, 5}, rng, 1.0, 5.0);
  Tape<double> tape;
  EXPECT_EQ(l1_depth_loss(tape.variable(t), t, {}).value().item(), 0.0);
}

TEST(L1Loss, ScalarExample) {
  Tape<double> tape;
  const auto loss = l1_depth_loss(tape.variable(row({2, 5})), row({1, 3}), {});
  EXPECT_DOUBLE_EQ(loss.value().item(), 1.5);
}

TEST(L1Loss, MeanOverValidPixelsOnly) {
  Rng rng(2);
  const auto truth = random_tensor(Shape{1, 1, 4, 4}, rng, 1.0, 5.0);
  Tensor<double> pred = truth;
  for (double& v : pred.data()) v += 0.75;
  std::vector<std::uint8_t> half(16, 0);
  for (std::size_t i = 0; i < 8; ++i) half[i] = 1;
  Tape<double> tape;
  const double full = l1_depth_loss(tape.variable(pred), truth, {}).value().item();
  const double part = l1_depth_loss(tape.variable(pred), truth, half).value().item();
  EXPECT_NEAR(full, 0.75, 1e-12);
  EXPECT_NEAR(part, 0.75, 1e-12);
  // Changing invalid pixels leaves the loss untouched.
  pred.at(0, 0, 3, 3) += 100.0;
  EXPECT_EQ(l1_depth_loss(tape.variable(pred), truth, half).value().item(), part);
}

TEST(L1Loss, GradientIsSignOverCount) {
  Tape<double> tape;
  const std::vector<std::uint8_t> mask = {1, 1, 0, 1};
  const auto pred = tape.variable(row({2, 1, 9, 4}));
  const auto loss = l1_depth_loss(pred, row({1, 3, 1, 4}), mask);
  tape.backward(loss);
  const auto g = tape.grad(pred);
  EXPECT_DOUBLE_EQ(g.data()[0], 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(g.data()[1], -1.0 / 3.0);
  EXPECT_EQ(g.data()[2], 0.0);
  EXPECT_EQ(g.data()[3], 0.0);  // tie
}

TEST(L1Loss, Errors) {
  Tape<double> tape;
  const auto pred = tape.variable(row({1, 2}));
  EXPECT_THROW(l1_depth_loss(pred, row({1, 2}), std::vector<std::uint8_t>{0, 0}), EvaluationError);
  EXPECT_THROW(l1_depth_loss(pred, row({1, 2, 3}), {}), ConfigError);
  EXPECT_THROW(l1_depth_loss(pred, row({1, 2}), std::vector<std::uint8_t>{1}), ConfigError);
}

TEST(Ssim, SelfSimilarityIsOne) {
  Rng rng(3);
  const auto x = random_tensor(Shape{2, 1, 9, 10}, rng, 0.0, 10.0);
  const auto map = ssim(x, x, {}, SsimParams{});
  EXPECT_EQ(map.valid_count, 2u * 3u * 4u);
  for (double v : map.values) EXPECT_EQ(v, 1.0);
  EXPECT_EQ(map.mean, 1.0);
}

TEST(Ssim, ConstantImagesClosedForm) {
  const SsimParams p{7, 0.01, 0.09};
  for (const auto& [a, b] : {std::pair{2.0, 3.0}, std::pair{1.0, 9.0}, std::pair{0.0, 0.5}, std::pair{4.0, 4.0}}) {
    const Tensor<double> x(Shape{1, 1, 8, 8}, a), y(Shape{1, 1, 8, 8}, b);
    const double expected = (2 * a * b + p.c1) / (a * a + b * b + p.c1);
    const auto map = ssim(x, y, {}, p);
    for (double v : map.values) EXPECT_NEAR(v, expected, 1e-15);
  }
}

TEST(Ssim, SymmetricInArguments) {
  Rng rng(4);
  const auto x = random_tensor(Shape{1, 2, 10, 8}, rng, 0.0, 5.0);
  const auto y = random_tensor(Shape{1, 2, 10, 8}, rng, 0.0, 5.0);
  const auto a = ssim(x, y, {}, SsimParams{5, 1e-3, 1e-2});
  const auto b = ssim(y, x, {}, SsimParams{5, 1e-3, 1e-2});
  EXPECT_EQ(a.values, b.values);
}

TEST(Ssim, MatchesRawMomentOracle) {
  Rng rng(5);
  const SsimParams p{3, 0.01, 0.09};
  const auto x = random_tensor(Shape{2, 1, 6, 7}, rng, 0.0, 10.0);
  const auto y = random_tensor(Shape{2, 1, 6, 7}, rng, 0.0, 10.0);
  const auto mask = random_mask(2 * 6 * 7, rng, 0.9);
  const auto map = ssim(x, y, mask, p);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t n = 0; n < 2; ++n) {
    for (std::size_t r = 0; r < map.height; ++r) {
      for (std::size_t c = 0; c < map.width; ++c) {
        bool ok = true;
        for (std::size_t i = r; i < r + 3; ++i)
          for (std::size_t j = c; j < c + 3; ++j) ok = ok && mask[(n * 6 + i) * 7 + j] != 0;
        const std::size_t m = (n * map.height + r) * map.width + c;
        ASSERT_EQ(map.valid[m] != 0, ok);
        if (!ok) continue;
        const double ref = naive_ssim(x, y, n, 0, r, c, 3, p.c1, p.c2);
        EXPECT_NEAR(map.values[m], ref, 1e-12);
        total += ref;
        ++count;
      }
    }
  }
  ASSERT_EQ(map.valid_count, count);
  EXPECT_NEAR(map.mean, total / static_cast<double>(count), 1e-12);

  Tape<double> tape;
  const double loss = ssim_loss(tape.variable(x), y, mask, p).value().item();
  EXPECT_NEAR(loss, (1.0 - total / static_cast<double>(count)) / 2.0, 1e-12);
}

TEST(Ssim, BoundsOnRandomPairs) {
  Rng rng(6);
  for (int trial = 0; trial < 1000; ++trial) {
    const double scale = std::pow(10.0, uniform(rng, -3.0, 2.0));
    const auto x = random_tensor(Shape{1, 1, 4, 4}, rng, -scale, scale);
    Tensor<double> y = random_tensor(Shape{1, 1, 4, 4}, rng, -scale, scale);
    if (trial % 3 == 0) {
      for (std::size_t i = 0; i < y.numel(); ++i) y.data()[i] = -x.data()[i];
    }
    const SsimParams p{3, 1e-8, 1e-8};
    const auto map = ssim(x, y, {}, p);
    for (double v : map.values) {
      EXPECT_GE(v, -1.0);
      EXPECT_LE(v, 1.0);
    }
    Tape<double> tape;
    const double loss = ssim_loss(tape.variable(x), y, {}, p).value().item();
    EXPECT_GE(loss, 0.0);
    EXPECT_LE(loss, 1.0);
  }
}

TEST(Ssim, AntiCorrelatedZeroMeanGivesLossOne) {
  // Every 7 consecutive columns of cos(2 pi c / 7) sum to zero.
  Tensor<double> x(Shape{1, 1, 7, 14});
  for (std::size_t r = 0; r < 7; ++r)
    for (std::size_t c = 0; c < 14; ++c) x.at(0, 0, r, c) = std::cos(2.0 * std::numbers::pi * static_cast<double>(c) / 7.0);
  Tensor<double> y = x;
  for (double& v : y.data()) v = -v;
  Tape<double> tape;
  const double loss = ssim_loss(tape.variable(x), y, {}, SsimParams{7, 1e-12, 1e-12}).value().item();
  EXPECT_NEAR(loss, 1.0, 1e-6);
}

TEST(Ssim, ConstantsFollowDynamicRange) {
  LossWeights w;
  const auto p = SsimParams::from(w, 10.0);
  EXPECT_EQ(p.window, 7u);
  EXPECT_DOUBLE_EQ(p.c1, (0.01 * 10.0) * (0.01 * 10.0));
  EXPECT_DOUBLE_EQ(p.c2, (0.03 * 10.0) * (0.03 * 10.0));
  w.ssim_c1 = 0.5;
  w.ssim_c2 = 0.25;
  const auto q = SsimParams::from(w, 10.0);
  EXPECT_EQ(q.c1, 0.5);
  EXPECT_EQ(q.c2, 0.25);
}

TEST(Ssim, Errors) {
  const Tensor<double> x(Shape{1, 1, 5, 5}, 1.0);
  EXPECT_THROW(ssim(x, x, {}, SsimParams{7, 1e-4, 9e-4}), ConfigError);
  EXPECT_THROW(ssim(x, x, {}, SsimParams{4, 1e-4, 9e-4}), ConfigError);
  EXPECT_THROW(ssim(x, x, {}, SsimParams{3, 0.0, 9e-4}), ConfigError);
  EXPECT_THROW(ssim(x, Tensor<double>(Shape{1, 1, 5, 6}), {}, SsimParams{3, 1e-4, 9e-4}), ConfigError);
  std::vector<std::uint8_t> mask(25, 1);
  mask[12] = 0;  // the centre pixel spoils every 5x5 window
  EXPECT_THROW(ssim(x, x, mask, SsimParams{5, 1e-4, 9e-4}), EvaluationError);
}

TEST(Ssim, IdenticalLossIsZero) {
  Rng rng(7);
  const auto x = random_tensor(Shape{1, 1, 9, 9}, rng, 1.0, 10.0);
  Tape<double> tape;
  EXPECT_EQ(ssim_loss(tape.variable(x), x, {}, SsimParams{}).value().item(), 0.0);
}

TEST(Discretization, BoundaryExamples) {
  DiscretizationSpec s{16, 1.0, 10.0};
  EXPECT_EQ(s.bin_of(1.0), 0);
  EXPECT_EQ(s.bin_of(10.0), 15);
  EXPECT_EQ(s.bin_of(0.2), 0);
  EXPECT_EQ(s.bin_of(50.0), 15);
  for (const auto& [lo, hi] : {std::pair{1.0, 10.0}, std::pair{2.0, 8.0}, std::pair{0.5, 80.0}}) {
    const DiscretizationSpec two{2, lo, hi};
    EXPECT_EQ(two.bin_of(std::sqrt(lo * hi)), 1) << lo << " " << hi;
  }
  EXPECT_THROW(s.bin_of(0.0), DataError);
  EXPECT_THROW(s.bin_of(-1.0), DataError);
  EXPECT_THROW(s.bin_of(std::nan("")), DataError);
}

TEST(Discretization, EdgesPartitionTheRange) {
  const DiscretizationSpec s{32, 0.5, 80.0};
  EXPECT_EQ(s.edge(0), 0.5);
  EXPECT_NEAR(s.edge(32), 80.0, 1e-12);
  for (std::size_t i = 0; i < 32; ++i) {
    EXPECT_LT(s.edge(i), s.edge(i + 1));
    EXPECT_NEAR(std::log(s.edge(i + 1)) - std::log(s.edge(i)), std::log(160.0) / 32.0, 1e-12);
    EXPECT_EQ(s.bin_of(s.center(i)), static_cast<std::int32_t>(i));
  }
  Rng rng(8);
  for (int trial = 0; trial < 10000; ++trial) {
    const double d = std::exp(uniform(rng, std::log(0.5), std::log(80.0)));
    const auto b = static_cast<std::size_t>(s.bin_of(d));
    ASSERT_LT(b, 32u);
    EXPECT_LE(s.edge(b), d * (1 + 1e-12));
    EXPECT_GE(s.edge(b + 1), d * (1 - 1e-12));
    // Dequantising to the bin centre and re-binning is stable within one bin.
    EXPECT_LE(std::abs(s.bin_of(s.center(b)) - static_cast<std::int32_t>(b)), 1);
  }
}

TEST(Discretization, MaskedPixelsGetNoLabel) {
  const Tensor<double> depth(Shape{1, 1, 1, 3}, std::vector<double>{0.0, 2.0, 20.0});
  const std::vector<std::uint8_t> mask = {0, 1, 1};
  const auto labels = discretize_depth(depth, mask, DiscretizationSpec{4, 1.0, 10.0});
  EXPECT_EQ(labels, (std::vector<std::int32_t>{-1, 1, 3}));
  EXPECT_THROW(discretize_depth(depth, {}, DiscretizationSpec{4, 1.0, 10.0}), DataError);
}

TEST(Discretization, RejectsBadSpecs) {
  EXPECT_THROW((DiscretizationSpec{0, 1.0, 10.0}.validate()), ConfigError);
  EXPECT_THROW((DiscretizationSpec{4, 0.0, 10.0}.validate()), ConfigError);
  EXPECT_THROW((DiscretizationSpec{4, 5.0, 5.0}.validate()), ConfigError);
}

TEST(LogisticLoss, UniformTwoClass) {
  Tape<double> tape;
  const auto logits = tape.variable(Tensor<double>(Shape{1, 2, 1, 1}, 0.3));
  const std::int32_t labels[] = {1};
  EXPECT_NEAR(multinomial_logistic_loss<double>(logits, labels, {}).value().item(), std::log(2.0), 1e-15);
}

TEST(LogisticLoss, SaturatedCorrectClass) {
  Tape<double> tape;
  Tensor<double> l(Shape{1, 3, 1, 2});
  l.at(0, 2, 0, 0) = 30.0;
  l.at(0, 0, 0, 1) = 30.0;
  const std::int32_t labels[] = {2, 0};
  EXPECT_LT(multinomial_logistic_loss<double>(tape.variable(l), labels, {}).value().item(), 1e-9);
}

TEST(LogisticLoss, MatchesScalarSoftmaxOracle) {
  Rng rng(9);
  const auto logits = random_tensor(Shape{1, 3, 2, 2}, rng, -3.0, 3.0);
  const std::int32_t labels[] = {0, 2, 1, 2};
  double ref = 0.0;
  for (std::size_t p = 0; p < 4; ++p) {
    const std::size_t y = p / 2, x = p % 2;
    double z = 0.0;
    for (std::size_t k = 0; k < 3; ++k) z += std::exp(logits.at(0, k, y, x));
    ref += -std::log(std::exp(logits.at(0, static_cast<std::size_t>(labels[p]), y, x)) / z);
  }
  ref /= 4.0;
  Tape<double> tape;
  const auto lv = tape.variable(logits);
  const auto loss = multinomial_logistic_loss<double>(lv, labels, {});
  EXPECT_NEAR(loss.value().item(), ref, 1e-12);

  // d/dz = (softmax - onehot) / n
  tape.backward(loss);
  const auto g = tape.grad(lv);
  for (std::size_t p = 0; p < 4; ++p) {
    const std::size_t y = p / 2, x = p % 2;
    double z = 0.0;
    for (std::size_t k = 0; k < 3; ++k) z += std::exp(logits.at(0, k, y, x));
    for (std::size_t k = 0; k < 3; ++k) {
      const double expected = (std::exp(logits.at(0, k, y, x)) / z - (static_cast<std::int32_t>(k) == labels[p])) / 4.0;
      EXPECT_NEAR(g.at(0, k, y, x), expected, 1e-14);
    }
  }
}

TEST(LogisticLoss, StableForHugeLogits) {
  Tape<double> tape;
  Tensor<double> l(Shape{1, 2, 1, 1});
  l.at(0, 0, 0, 0) = 1000.0;
  l.at(0, 1, 0, 0) = -1000.0;
  const std::int32_t wrong[] = {1};
  const double v = multinomial_logistic_loss<double>(tape.variable(l), wrong, {}).value().item();
  EXPECT_NEAR(v, 2000.0, 1e-9);
}

TEST(LogisticLoss, MaskAndLabelChecks) {
  Tape<double> tape;
  const auto logits = tape.variable(Tensor<double>(Shape{1, 2, 1, 2}));
  const std::int32_t bad[] = {0, 2};
  EXPECT_THROW(multinomial_logistic_loss<double>(logits, bad, {}), DataError);
  // An out-of-range label on a masked pixel is ignored.
  const std::vector<std::uint8_t> mask = {1, 0};
  EXPECT_NEAR(multinomial_logistic_loss<double>(logits, bad, mask).value().item(), std::log(2.0), 1e-15);
  const std::int32_t short_labels[] = {0};
  EXPECT_THROW(multinomial_logistic_loss<double>(logits, short_labels, {}), ConfigError);
  EXPECT_THROW(multinomial_logistic_loss<double>(logits, bad, std::vector<std::uint8_t>{0, 0}), EvaluationError);
}

struct Instance {
  Tensor<double> pred, truth, logits;
  std::vector<std::uint8_t> mask;
};

Instance random_instance(Rng& rng) {
  Instance in;
  in.truth = random_tensor(Shape{2, 1, 9, 9}, rng, 1.0, 10.0);
  in.pred = random_tensor(Shape{2, 1, 9, 9}, rng, 1.0, 10.0);
  in.logits = random_tensor(Shape{2, 8, 9, 9}, rng, -2.0, 2.0);
  in.mask.assign(2 * 81, 1);
  // Holes in the top row only, so the lower 7x7 windows stay fully valid.
  for (std::size_t i = 0; i < 6; ++i) in.mask[81 * uniform_index(rng, 2) + uniform_index(rng, 9)] = 0;
  return in;
}

TEST(CombinedLoss, PerfectPredictionIsZero) {
  Rng rng(10);
  const auto truth = random_tensor(Shape{1, 1, 8, 8}, rng, 1.0, 10.0);
  const DiscretizationSpec spec{8, 1.0, 10.0};
  Tensor<double> logits(Shape{1, 8, 8, 8});
  const auto labels = discretize_depth(truth, {}, spec);
  for (std::size_t p = 0; p < 64; ++p) logits.at(0, static_cast<std::size_t>(labels[p]), p / 8, p % 8) = 40.0;
  Tape<double> tape;
  const auto r = combined_loss(tape.variable(truth), tape.variable(logits), truth, {}, LossWeights{}, spec);
  EXPECT_LT(r.total.value().item(), 1e-9);
  EXPECT_GE(r.total.value().item(), 0.0);
}

TEST(CombinedLoss, ReducesToWeightedDepthTerm) {
  Rng rng(11);
  const auto in = random_instance(rng);
  LossWeights w;
  w.alpha = 0.7;
  w.beta = 0.0;
  w.gamma = 0.0;
  const DiscretizationSpec spec{8, 1.0, 10.0};
  Tape<double> tape;
  const auto r = combined_loss(tape.variable(in.pred), tape.variable(in.logits), in.truth, in.mask, w, spec);
  const double l1 = l1_depth_loss(tape.variable(in.pred), in.truth, in.mask).value().item();
  EXPECT_EQ(r.total.value().item(), 0.7 * l1);
}

TEST(CombinedLoss, UnitWeightsSumTheComponentOracles) {
  Rng rng(12);
  const auto in = random_instance(rng);
  LossWeights w;
  w.alpha = w.beta = w.gamma = 1.0;
  const DiscretizationSpec spec{8, 1.0, 10.0};
  Tape<double> tape;
  const auto r = combined_loss(tape.variable(in.pred), tape.variable(in.logits), in.truth, in.mask, w, spec);

  double l1 = 0.0, n = 0.0;
  for (std::size_t i = 0; i < in.mask.size(); ++i) {
    if (!in.mask[i]) continue;
    l1 += std::abs(in.pred.data()[i] - in.truth.data()[i]);
    n += 1.0;
  }
  l1 /= n;
  const SsimParams sp = SsimParams::from(w, spec.d_max);
  double ssim_sum = 0.0, windows = 0.0;
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t r0 = 0; r0 + 7 <= 9; ++r0) {
      for (std::size_t c0 = 0; c0 + 7 <= 9; ++c0) {
        bool ok = true;
        for (std::size_t i = r0; i < r0 + 7; ++i)
          for (std::size_t j = c0; j < c0 + 7; ++j) ok = ok && in.mask[b * 81 + i * 9 + j];
        if (!ok) continue;
        ssim_sum += naive_ssim(in.pred, in.truth, b, 0, r0, c0, 7, sp.c1, sp.c2);
        windows += 1.0;
      }
    }
  }
  double ce = 0.0;
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t p = 0; p < 81; ++p) {
      if (!in.mask[b * 81 + p]) continue;
      const double d = in.truth.data()[b * 81 + p];
      const auto label = static_cast<std::size_t>(
          std::clamp(std::floor(8.0 * std::log(d) / std::log(10.0)), 0.0, 7.0));
      double z = 0.0;
      for (std::size_t k = 0; k < 8; ++k) z += std::exp(in.logits.at(b, k, p / 9, p % 9));
      ce -= std::log(std::exp(in.logits.at(b, label, p / 9, p % 9)) / z);
    }
  }
  ce /= n;
  ASSERT_GT(windows, 0.0);
  const double expected = l1 + (1.0 - ssim_sum / windows) / 2.0 + ce;
  EXPECT_NEAR(r.total.value().item(), expected, 1e-12);
  EXPECT_NEAR(r.breakdown.depth, l1, 1e-12);
  EXPECT_NEAR(r.breakdown.logistic, ce, 1e-12);
}

TEST(CombinedLoss, BreakdownAddsUpExactly) {
  Rng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const auto in = random_instance(rng);
    LossWeights w;
    w.alpha = uniform(rng, 0.0, 2.0);
    w.beta = uniform(rng, 0.0, 2.0);
    w.gamma = uniform(rng, 0.0, 2.0);
    Tape<double> tape;
    const auto r = combined_loss(tape.variable(in.pred), tape.variable(in.logits), in.truth, in.mask, w,
                                 DiscretizationSpec{8, 1.0, 10.0});
    const auto& b = r.breakdown;
    EXPECT_EQ(b.weighted_depth + b.weighted_ssim + b.weighted_logistic, b.total);
    EXPECT_EQ(b.total, r.total.value().item());
    EXPECT_EQ(b.weighted_depth, w.alpha * b.depth);
  }
}

TEST(CombinedLoss, LinearInWeights) {
  Rng rng(14);
  const auto in = random_instance(rng);
  const DiscretizationSpec spec{8, 1.0, 10.0};
  LossWeights w;
  w.alpha = 0.9;
  w.beta = 1.3;
  w.gamma = 0.1;
  // SSIM constants pinned so they do not move with the weights.
  w.ssim_c1 = 0.01;
  w.ssim_c2 = 0.09;
  Tape<double> tape;
  const auto eval = [&](double c) {
    LossWeights s = w;
    s.alpha *= c;
    s.beta *= c;
    s.gamma *= c;
    return combined_loss(tape.variable(in.pred), tape.variable(in.logits), in.truth, in.mask, s, spec)
        .total.value()
        .item();
  };
  const double base = eval(1.0);
  // Power-of-two factors scale every rounding step exactly.
  for (double c : {2.0, 0.5, 8.0, 0.125}) EXPECT_EQ(eval(c), c * base) << c;
  for (double c : {3.0, 0.1, 7.5}) EXPECT_NEAR(eval(c), c * base, 1e-15 * c * base) << c;
}

TEST(CombinedLoss, RejectsInvalidWeights) {
  LossWeights w;
  w.alpha = -1.0;
  EXPECT_THROW(w.validate(), ConfigError);
  w = LossWeights{};
  w.alpha = w.beta = w.gamma = 0.0;
  EXPECT_THROW(w.validate(), ConfigError);
  w = LossWeights{};
  w.ssim_window = 6;
  EXPECT_THROW(w.validate(), ConfigError);
  const LossWeights d;
  EXPECT_EQ(d.alpha, 1.0);
  EXPECT_EQ(d.beta, 1.0);
  EXPECT_EQ(d.gamma, 0.1);
  EXPECT_EQ(d.ssim_window, 7u);
}

TEST(CombinedLoss, GradientMatchesFiniteDifferences) {
  Rng rng(15);
  for (int trial = 0; trial < 5; ++trial) {
    const auto in = random_instance(rng);
    const LossWeights w;
    const DiscretizationSpec spec{8, 1.0, 10.0};
    const std::vector<Tensor<double>> inputs = {in.pred, in.logits};
    GradCheckOptions o;
    o.skip_nonsmooth = true;
    const auto report = grad_check(
        [&](Tape<double>&, std::span<const Var<double>> v) {
          return combined_loss(v[0], v[1], in.truth, in.mask, w, spec).total;
        },
        inputs, o);
    EXPECT_TRUE(report.passed) << report.max_rel_error;
    EXPECT_LT(report.max_rel_error, 1e-5);
  }
}

TEST(CombinedLoss, FloatAgreesWithDouble) {
  Rng rng(16);
  const auto in = random_instance(rng);
  const DiscretizationSpec spec{8, 1.0, 10.0};
  Tape<double> td;
  Tape<float> tf;
  const double d = combined_loss(td.variable(in.pred), td.variable(in.logits), in.truth, in.mask, LossWeights{}, spec)
                       .total.value()
                       .item();
  const double f = combined_loss(tf.variable(in.pred.cast<float>()), tf.variable(in.logits.cast<float>()),
                                 in.truth.cast<float>(), in.mask, LossWeights{}, spec)
                       .total.value()
                       .item();
  EXPECT_NEAR(f, d, 1e-5 * d);
}

}  // namespace
}  // namespace depthfuse
