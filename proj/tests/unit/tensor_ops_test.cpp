#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "depthfuse/autodiff.hpp"
#include "depthfuse/error.hpp"
#include "depthfuse/gradcheck.hpp"
#include "depthfuse/ops.hpp"
#include "test_util.hpp"

namespace depthfuse {
namespace {

using testing::max_abs_diff;
using testing::random_tensor;

// Direct nested-loop cross-correlation.
Tensor<double> conv_oracle(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b,
                           const ConvSpec& spec) {
  const Shape xs = x.shape(), ws = w.shape();
  const std::size_t oh = spec.output_h(xs.h), ow = spec.output_w(xs.w);
  Tensor<double> y(Shape{xs.n, ws.n, oh, ow});
  for (std::size_t n = 0; n < xs.n; ++n) {
    for (std::size_t co = 0; co < ws.n; ++co) {
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          double acc = b.at(0, co, 0, 0);
          for (std::size_t ci = 0; ci < xs.c; ++ci) {
            for (std::size_t ky = 0; ky < ws.h; ++ky) {
              for (std::size_t kx = 0; kx < ws.w; ++kx) {
                const long iy = static_cast<long>(oy * spec.stride + ky * spec.dilation) -
                                static_cast<long>(spec.padding);
                const long ix = static_cast<long>(ox * spec.stride + kx * spec.dilation) -
                                static_cast<long>(spec.padding);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(xs.h) || ix >= static_cast<long>(xs.w)) continue;
                acc += w.at(co, ci, ky, kx) * x.at(n, ci, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
              }
            }
          }
          y.at(n, co, oy, ox) = acc;
        }
      }
    }
  }
  return y;
}

TEST(Tensor, RejectsDataOfWrongSize) {
  EXPECT_THROW(Tensor<float>(Shape{1, 2, 2, 2}, std::vector<float>(7)), ConfigError);
}

TEST(Tensor, ItemRequiresScalar) {
  EXPECT_EQ(Tensor<double>::scalar(2.5).item(), 2.5);
  EXPECT_THROW(Tensor<double>(Shape{1, 1, 1, 2}).item(), UsageError);
}

TEST(Tensor, StorageIs64ByteAligned) {
  for (std::size_t n : {1u, 3u, 17u, 1000u}) {
    Tensor<float> t(Shape{1, 1, 1, n});
    EXPECT_EQ(reinterpret_cast<std::uintptr_t>(t.raw()) % 64, 0u);
  }
}

TEST(Tensor, ReshapeKeepsDataAndChecksCount) {
  Tensor<double> t(Shape{1, 2, 2, 3}, std::vector<double>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11});
  const auto r = t.reshaped(Shape{2, 3, 2, 1});
  EXPECT_EQ(r.at(1, 2, 1, 0), 11.0);
  EXPECT_THROW(t.reshaped(Shape{1, 1, 1, 5}), ConfigError);
}

TEST(Autodiff, BackwardRejectsNonScalar) {
  Tape<double> tape;
  const auto x = tape.variable(Tensor<double>(Shape{1, 1, 2, 2}, 1.0));
  EXPECT_THROW(tape.backward(x), UsageError);
}

TEST(Autodiff, UnusedVariableHasZeroGradient) {
  Tape<double> tape;
  const auto x = tape.variable(Tensor<double>(Shape{1, 1, 1, 3}, 2.0));
  const auto unused = tape.variable(Tensor<double>(Shape{1, 1, 1, 2}, 5.0));
  tape.backward(sum(scale(x, 3.0)));
  const auto gx = tape.grad(x);
  const auto gu = tape.grad(unused);
  for (double g : gx.data()) EXPECT_EQ(g, 3.0);
  for (double g : gu.data()) EXPECT_EQ(g, 0.0);
}

TEST(Autodiff, FanOutAccumulates) {
  // d/dx sum(x + x) = 2
  Tape<double> tape;
  const auto x = tape.variable(Tensor<double>(Shape{1, 1, 1, 4}, 1.0));
  tape.backward(sum(add(x, x)));
  const auto gx = tape.grad(x);
  for (double g : gx.data()) EXPECT_EQ(g, 2.0);
}

TEST(Conv2d, MatchesNestedLoopOracle) {
  Rng rng(11);
  const ConvSpec specs[] = {
      {3, 3, 1, 1, 1}, {3, 3, 2, 1, 1}, {3, 3, 1, 2, 2}, {3, 3, 1, 4, 4}, {5, 5, 1, 2, 1},
      {1, 1, 1, 0, 1}, {3, 5, 1, 0, 1}, {7, 7, 2, 3, 1}, {3, 3, 3, 0, 2},
  };
  for (const auto& spec : specs) {
    const auto x = random_tensor(Shape{2, 3, 11, 9}, rng);
    const auto w = random_tensor(Shape{4, 3, spec.kernel_h, spec.kernel_w}, rng);
    const auto b = random_tensor(Shape{1, 4, 1, 1}, rng);
    Tape<double> tape;
    const auto y = conv2d(tape.constant(x), tape.constant(w), tape.constant(b), spec);
    const auto ref = conv_oracle(x, w, b, spec);
    ASSERT_EQ(y.shape(), ref.shape());
    EXPECT_LT(max_abs_diff(y.value(), ref), 1e-12) << "k=" << spec.kernel_h << "x" << spec.kernel_w
                                                    << " s=" << spec.stride << " d=" << spec.dilation;
  }
}

TEST(Conv2d, OneByOneIdentity) {
  Rng rng(3);
  const auto x = random_tensor(Shape{1, 1, 5, 4}, rng);
  Tape<double> tape;
  const auto y = conv2d(tape.constant(x), tape.constant(Tensor<double>(Shape{1, 1, 1, 1}, 1.0)),
                        tape.constant(Tensor<double>(Shape{1, 1, 1, 1})), ConvSpec{});
  EXPECT_EQ(y.value(), x);
}

TEST(Conv2d, OutputSizeFormula) {
  // floor((H + 2p - d(k-1) - 1)/s) + 1
  const ConvSpec spec{3, 3, 2, 1, 2};
  EXPECT_EQ(spec.output_h(10), (10 + 2 - 4 - 1) / 2 + 1);
  EXPECT_THROW(ConvSpec({5, 5, 1, 0, 1}).output_h(4), ConfigError);
}

TEST(Conv2d, SamePaddingKeepsSize) {
  for (std::size_t k : {1u, 3u, 5u, 7u}) {
    for (std::size_t d : {1u, 2u, 4u}) {
      EXPECT_EQ(ConvSpec::same(k, d).output_h(16), 16u);
    }
  }
}

TEST(Conv2d, DilatedImpulseSupportSpansNinePixels) {
  // k + (k-1)(d-1) = 3 + 2*3 = 9 for k=3, d=4.
  Tensor<double> x(Shape{1, 1, 21, 21});
  x.at(0, 0, 10, 10) = 1.0;
  Tape<double> tape;
  const auto y = conv2d(tape.constant(x), tape.constant(Tensor<double>(Shape{1, 1, 3, 3}, 1.0)),
                        tape.constant(Tensor<double>(Shape{1, 1, 1, 1})), ConvSpec::same(3, 4));
  std::size_t lo = 21, hi = 0, count = 0;
  for (std::size_t i = 0; i < 21; ++i) {
    if (y.value().at(0, 0, 10, i) != 0.0) {
      lo = std::min(lo, i);
      hi = std::max(hi, i);
      ++count;
    }
  }
  EXPECT_EQ(hi - lo + 1, 9u);
  EXPECT_EQ(count, 3u);
}

TEST(Conv2d, ShapeErrorsNameTheDimension) {
  Tape<double> tape;
  const auto x = tape.constant(Tensor<double>(Shape{1, 3, 8, 8}));
  const auto w = tape.constant(Tensor<double>(Shape{2, 4, 3, 3}));
  const auto b = tape.constant(Tensor<double>(Shape{1, 2, 1, 1}));
  try {
    conv2d(x, w, b, ConvSpec::same(3));
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("channel"), std::string::npos) << e.what();
  }
}

TEST(Ops, AvgPoolMatchesOracle) {
  Rng rng(5);
  const auto x = random_tensor(Shape{2, 2, 6, 4}, rng);
  Tape<double> tape;
  const auto y = avg_pool2(tape.constant(x));
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 2; ++j) {
          const double ref = 0.25 * (x.at(n, c, 2 * i, 2 * j) + x.at(n, c, 2 * i + 1, 2 * j) +
                                     x.at(n, c, 2 * i, 2 * j + 1) + x.at(n, c, 2 * i + 1, 2 * j + 1));
          EXPECT_NEAR(y.value().at(n, c, i, j), ref, 1e-15);
        }
  EXPECT_THROW(avg_pool2(tape.constant(Tensor<double>(Shape{1, 1, 5, 4}))), ConfigError);
}

TEST(Ops, UpsampleBilinearMatchesHalfPixelOracle) {
  Rng rng(6);
  const auto x = random_tensor(Shape{1, 2, 3, 5}, rng);
  for (std::size_t f : {2u, 3u}) {
    Tape<double> tape;
    const auto y = upsample_bilinear(tape.constant(x), f);
    ASSERT_EQ(y.shape(), (Shape{1, 2, 3 * f, 5 * f}));
    auto coord = [f](std::size_t o, std::size_t n) {
      const double s = (static_cast<double>(o) + 0.5) / static_cast<double>(f) - 0.5;
      return std::clamp(s, 0.0, static_cast<double>(n - 1));
    };
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t oy = 0; oy < 3 * f; ++oy)
        for (std::size_t ox = 0; ox < 5 * f; ++ox) {
          const double sy = coord(oy, 3), sx = coord(ox, 5);
          const std::size_t y0 = static_cast<std::size_t>(std::floor(sy)), x0 = static_cast<std::size_t>(std::floor(sx));
          const std::size_t y1 = std::min<std::size_t>(y0 + 1, 2), x1 = std::min<std::size_t>(x0 + 1, 4);
          const double ay = sy - y0, ax = sx - x0;
          const double ref = (1 - ay) * ((1 - ax) * x.at(0, c, y0, x0) + ax * x.at(0, c, y0, x1)) +
                             ay * ((1 - ax) * x.at(0, c, y1, x0) + ax * x.at(0, c, y1, x1));
          EXPECT_NEAR(y.value().at(0, c, oy, ox), ref, 1e-14);
        }
  }
}

TEST(Ops, ConcatStacksChannelsPerInstance) {
  Rng rng(8);
  const auto a = random_tensor(Shape{2, 1, 2, 2}, rng);
  const auto b = random_tensor(Shape{2, 3, 2, 2}, rng);
  Tape<double> tape;
  const Var<double> parts[] = {tape.constant(a), tape.constant(b)};
  const auto y = concat_channels<double>(parts);
  ASSERT_EQ(y.shape(), (Shape{2, 4, 2, 2}));
  for (std::size_t n = 0; n < 2; ++n) {
    EXPECT_EQ(y.value().at(n, 0, 1, 1), a.at(n, 0, 1, 1));
    EXPECT_EQ(y.value().at(n, 3, 0, 1), b.at(n, 2, 0, 1));
  }
}

TEST(Ops, ReluSubgradientAtZeroIsZero) {
  Tape<double> tape;
  const auto x = tape.variable(Tensor<double>(Shape{1, 1, 1, 3}, std::vector<double>{-1.0, 0.0, 2.0}));
  tape.backward(sum(relu(x)));
  const auto g = tape.grad(x);
  EXPECT_EQ(g.data()[0], 0.0);
  EXPECT_EQ(g.data()[1], 0.0);
  EXPECT_EQ(g.data()[2], 1.0);
}

TEST(Ops, SoftplusIsStableAndPositive) {
  Tape<double> tape;
  const auto y = softplus(
      tape.constant(Tensor<double>(Shape{1, 1, 1, 4}, std::vector<double>{-1e4, -30.0, 0.0, 1e4})));
  const auto v = y.value().data();
  EXPECT_GT(v[0], 0.0);
  EXPECT_NEAR(v[1], std::exp(-30.0), 1e-25);
  EXPECT_NEAR(v[2], std::log(2.0), 1e-15);
  EXPECT_EQ(v[3], 1e4);
  Tape<float> ftape;
  const auto yf = softplus(ftape.constant(Tensor<float>(Shape{1, 1, 1, 1}, -1e3f)));
  EXPECT_GT(yf.value().item(), 0.0f);
}

TEST(Ops, WeightedSumIsExactCombination) {
  Tape<double> tape;
  const Var<double> s[] = {tape.variable(Tensor<double>::scalar(0.3)), tape.variable(Tensor<double>::scalar(1.7))};
  const double w[] = {2.0, 0.5};
  const auto y = weighted_sum<double>(s, w);
  EXPECT_EQ(y.value().item(), 2.0 * 0.3 + 0.5 * 1.7);
  tape.backward(y);
  EXPECT_EQ(tape.grad(s[0]).item(), 2.0);
  EXPECT_EQ(tape.grad(s[1]).item(), 0.5);
}

TEST(Ops, GroupNormMatchesNaiveOracle) {
  Rng rng(31);
  const Shape s{2, 6, 3, 4};
  const std::size_t groups = 3;
  const auto x = random_tensor<double>(s, rng, -2.0, 3.0);
  const auto gamma = random_tensor<double>(Shape{1, 6, 1, 1}, rng, 0.5, 2.0);
  const auto beta = random_tensor<double>(Shape{1, 6, 1, 1}, rng);
  Tape<double> tape;
  const auto y = group_norm(tape.constant(x), tape.constant(gamma), tape.constant(beta), groups, 1e-5);
  const std::size_t per = s.c / groups;
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t g = 0; g < groups; ++g) {
      double m = 0.0, q = 0.0;
      const double count = static_cast<double>(per * s.h * s.w);
      for (std::size_t c = g * per; c < (g + 1) * per; ++c)
        for (std::size_t i = 0; i < s.h; ++i)
          for (std::size_t j = 0; j < s.w; ++j) m += x.at(n, c, i, j) / count;
      for (std::size_t c = g * per; c < (g + 1) * per; ++c)
        for (std::size_t i = 0; i < s.h; ++i)
          for (std::size_t j = 0; j < s.w; ++j) q += (x.at(n, c, i, j) - m) * (x.at(n, c, i, j) - m) / count;
      for (std::size_t c = g * per; c < (g + 1) * per; ++c)
        for (std::size_t i = 0; i < s.h; ++i)
          for (std::size_t j = 0; j < s.w; ++j) {
            const double ref = gamma.at(0, c, 0, 0) * (x.at(n, c, i, j) - m) / std::sqrt(q + 1e-5) + beta.at(0, c, 0, 0);
            EXPECT_NEAR(y.value().at(n, c, i, j), ref, 1e-12);
          }
    }
  }
}

TEST(Ops, GroupNormWithUnitAffineStandardizesEachGroup) {
  Rng rng(32);
  const Shape s{1, 4, 5, 5};
  const auto x = random_tensor<double>(s, rng, 10.0, 30.0);
  Tape<double> tape;
  const auto y = group_norm(tape.constant(x), tape.constant(Tensor<double>(Shape{1, 4, 1, 1}, 1.0)),
                            tape.constant(Tensor<double>(Shape{1, 4, 1, 1})), 2, 1e-12);
  const auto v = y.value().data();
  for (std::size_t g = 0; g < 2; ++g) {
    double m = 0.0, q = 0.0;
    for (std::size_t i = g * 50; i < (g + 1) * 50; ++i) m += v[i] / 50.0;
    for (std::size_t i = g * 50; i < (g + 1) * 50; ++i) q += (v[i] - m) * (v[i] - m) / 50.0;
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(q, 1.0, 1e-9);
  }
}

TEST(Ops, GroupNormRejectsIndivisibleChannels) {
  Tape<double> tape;
  const auto x = tape.constant(Tensor<double>(Shape{1, 6, 2, 2}));
  const auto a = tape.constant(Tensor<double>(Shape{1, 6, 1, 1}));
  EXPECT_THROW(group_norm(x, a, a, 4), ConfigError);
  EXPECT_THROW(group_norm(x, a, a, 0), ConfigError);
}

TEST(GradCheck, SuitePassesForEveryEntry) {
  GradSuiteOptions options;
  options.instances = 20;
  const auto entries = run_gradcheck_suite(options);
  const std::vector<std::string> expected = {
      "conv2d", "concat_channels", "relu", "softplus", "group_norm", "add", "avg_pool2", "upsample_bilinear",
      "sum_mean_scale", "l1_depth_loss", "ssim_loss", "multinomial_logistic_loss", "combined_loss"};
  ASSERT_EQ(entries.size(), expected.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    EXPECT_EQ(entries[i].name, expected[i]);
    EXPECT_EQ(entries[i].instances, 20u);
    EXPECT_TRUE(entries[i].passed) << entries[i].name << " max rel error " << entries[i].max_rel_error;
    EXPECT_LT(entries[i].max_rel_error, 1e-5) << entries[i].name;
  }
}

TEST(GradCheck, DetectsCorruptedGradient) {
  GradSuiteOptions options;
  options.instances = 3;
  options.corrupt = "conv2d";
  const auto entries = run_gradcheck_suite(options);
  for (const auto& e : entries) {
    if (e.name == "conv2d") {
      EXPECT_FALSE(e.passed);
      EXPECT_GT(e.max_rel_error, 1e-5);
    } else {
      EXPECT_TRUE(e.passed) << e.name;
    }
  }
}

TEST(GradCheck, FlagsWrongAnalyticGradient) {
  // x^2 recorded with a deliberately wrong backward (x instead of 2x).
  const GradFunction bad = [](Tape<double>& tape, std::span<const Var<double>> v) {
    Tensor<double> out = v[0].value();
    for (double& x : out.data()) x = x * x;
    const std::size_t xi = v[0].id;
    const auto y = tape.record(std::move(out), tape.requires_grad(v[0]), [xi](Tape<double>& t, std::size_t self) {
      const auto go = t.grad_of(self).data();
      const auto x = t.value_of(xi).data();
      auto gx = t.grad_buffer(xi).data();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i] * x[i];
    });
    return sum(y);
  };
  Rng rng(1);
  const std::vector<Tensor<double>> in = {random_tensor(Shape{1, 1, 2, 2}, rng, 0.5, 1.5)};
  EXPECT_FALSE(grad_check(bad, in).passed);
}

}  // namespace
}  // namespace depthfuse
