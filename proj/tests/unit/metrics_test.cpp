#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <json.hpp>

#include "depthfuse/error.hpp"
#include "depthfuse/metrics.hpp"
#include "depthfuse/random.hpp"

namespace depthfuse {
namespace {

DepthPair pair_of(std::vector<double> pred, std::vector<double> truth, std::vector<std::uint8_t> valid = {}) {
  return DepthPair{std::move(pred), std::move(truth), std::move(valid)};
}

DepthPair random_pair(Rng& rng, std::size_t n, double p_valid) {
  DepthPair p;
  for (std::size_t i = 0; i < n; ++i) {
    p.truth.push_back(uniform(rng, 0.5, 80.0));
    p.prediction.push_back(p.truth.back() * std::exp(uniform(rng, -0.6, 0.6)));
    p.valid.push_back(bernoulli(rng, p_valid) ? 1 : 0);
  }
  p.valid[uniform_index(rng, n)] = 1;
  return p;
}

void expect_close(double a, double b, const char* what) {
  EXPECT_NEAR(a, b, 1e-12 * std::max(1.0, std::abs(b))) << what;
}

// Straight scalar loops over the valid pixels.
struct Naive {
  double rmse = 0, rmse_log = 0, silog = 0, abs_rel = 0, sq_rel = 0, rel = 0, log10 = 0;
  double delta[3] = {0, 0, 0};
};

Naive naive(const DepthPair& p) {
  Naive r;
  double t = 0, sum_d = 0, sum_d2 = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!p.valid.empty() && !p.valid[i]) continue;
    const double y = p.prediction[i], g = p.truth[i];
    t += 1;
    r.rmse += (y - g) * (y - g);
    const double d = std::log(y) - std::log(g);
    sum_d += d;
    sum_d2 += d * d;
    r.abs_rel += std::abs(y - g) / g;
    r.sq_rel += (y - g) * (y - g) / g;
    r.log10 += std::abs(std::log10(y) - std::log10(g));
    const double ratio = std::max(y / g, g / y);
    for (int k = 0; k < 3; ++k) r.delta[k] += ratio < std::pow(1.25, k + 1) ? 1 : 0;
  }
  r.rmse = std::sqrt(r.rmse / t);
  r.rmse_log = std::sqrt(sum_d2 / t);
  r.silog = sum_d2 / t - sum_d * sum_d / (t * t);
  r.abs_rel /= t;
  r.rel = r.abs_rel;
  r.sq_rel /= t;
  r.log10 /= t;
  for (double& d : r.delta) d /= t;
  return r;
}

TEST(Metrics, RmseExamples) {
  EXPECT_EQ(rmse(pair_of({1, 2, 3}, {1, 2, 3})), 0.0);
  EXPECT_NEAR(rmse(pair_of({2, 4}, {1, 2})), std::sqrt(2.5), 1e-15);
  EXPECT_NEAR(rmse(pair_of({2, 4, 1000, -5}, {1, 2, 7, 3}, {1, 1, 0, 0})), std::sqrt(2.5), 1e-15);
}

TEST(Metrics, RmseLogExamples) {
  const std::vector<double> g = {1.0, 2.5, 7.0};
  std::vector<double> y;
  for (double v : g) y.push_back(std::numbers::e * v);
  EXPECT_EQ(rmse_log(pair_of(g, g)), 0.0);
  EXPECT_NEAR(rmse_log(pair_of(y, g)), 1.0, 1e-15);
  EXPECT_EQ(rmse_log(pair_of({1, 5}, {2, 3})), rmse_log(pair_of({2, 3}, {1, 5})));
}

TEST(Metrics, SilogExamplesAndScaleInvariance) {
  Rng rng(1);
  EXPECT_NEAR(silog(pair_of({3, 4}, {3, 4})), 0.0, 1e-15);
  const auto p = random_pair(rng, 4, 1.0);
  std::vector<double> d;
  for (std::size_t i = 0; i < 4; ++i) d.push_back(std::log(p.prediction[i]) - std::log(p.truth[i]));
  double mean = 0;
  for (double v : d) mean += v / 4.0;
  double var = 0;
  for (double v : d) var += (v - mean) * (v - mean) / 4.0;
  EXPECT_NEAR(silog(p), var, 1e-12);
  for (double c : {0.1, 2.0, 10.0}) {
    DepthPair scaled = p;
    for (double& v : scaled.prediction) v *= c;
    EXPECT_NEAR(silog(scaled), silog(p), 1e-9) << c;
    DepthPair exact = p;
    exact.prediction = p.truth;
    for (double& v : exact.prediction) v *= c;
    EXPECT_NEAR(silog(exact), 0.0, 1e-12) << c;
  }
}

TEST(Metrics, RelativeErrorExamples) {
  EXPECT_EQ(abs_rel(pair_of({5, 6}, {5, 6})), 0.0);
  EXPECT_EQ(sq_rel(pair_of({5, 6}, {5, 6})), 0.0);
  EXPECT_EQ(abs_rel(pair_of({1}, {2})), 0.5);
  EXPECT_EQ(sq_rel(pair_of({1}, {2})), 0.5);
  EXPECT_EQ(abs_rel(pair_of({2, 6, 14}, {1, 3, 7})), 1.0);
}

TEST(Metrics, ThresholdExamples) {
  const ThresholdSpec spec;
  EXPECT_EQ(spec.threshold(1), 1.25);
  EXPECT_EQ(spec.threshold(2), 1.5625);
  EXPECT_EQ(spec.threshold(3), 1.953125);
  const auto same = threshold_accuracy(pair_of({1, 2}, {1, 2}));
  EXPECT_EQ(same.delta1, 1.0);
  EXPECT_EQ(same.delta2, 1.0);
  EXPECT_EQ(same.delta3, 1.0);
  const auto one = threshold_accuracy(pair_of({1.2}, {1.0}));
  EXPECT_EQ(one.delta1, 1.0);
  // ratios 1.4, 1.8, 3 land in delta2, delta3 and none
  const auto spread = threshold_accuracy(pair_of({1.4, 1.0, 3.0}, {1.0, 1.8, 1.0}));
  EXPECT_EQ(spread.delta1, 0.0);
  EXPECT_DOUBLE_EQ(spread.delta2, 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(spread.delta3, 2.0 / 3.0);
  EXPECT_THROW(ThresholdSpec{1.0}.validate(), ConfigError);
}

TEST(Metrics, MeanRelLog10Examples) {
  const auto zero = mean_rel_log10(pair_of({4, 9}, {4, 9}));
  EXPECT_EQ(zero.rel, 0.0);
  EXPECT_EQ(zero.log10, 0.0);
  EXPECT_EQ(mean_rel_log10(pair_of({10, 20, 50}, {1, 2, 5})).log10, 1.0);
  EXPECT_EQ(mean_rel_log10(pair_of({3, 7}, {2, 9})).log10, mean_rel_log10(pair_of({2, 9}, {3, 7})).log10);
}

TEST(Metrics, MatchNaiveOraclesOnRandomPairs) {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const auto p = random_pair(rng, 64, 0.8);
    const Naive n = naive(p);
    expect_close(rmse(p), n.rmse, "rmse");
    expect_close(rmse_log(p), n.rmse_log, "rmse_log");
    expect_close(silog(p), n.silog, "silog");
    expect_close(abs_rel(p), n.abs_rel, "abs_rel");
    expect_close(sq_rel(p), n.sq_rel, "sq_rel");
    const auto rl = mean_rel_log10(p);
    expect_close(rl.rel, n.rel, "rel");
    expect_close(rl.log10, n.log10, "log10");
    const auto t = threshold_accuracy(p);
    expect_close(t.delta1, n.delta[0], "delta1");
    expect_close(t.delta2, n.delta[1], "delta2");
    expect_close(t.delta3, n.delta[2], "delta3");

    const auto report = evaluate(std::span<const DepthPair>(&p, 1));
    expect_close(report.rmse, n.rmse, "report rmse");
    expect_close(report.silog, n.silog, "report silog");
    expect_close(report.sq_rel, n.sq_rel, "report sq_rel");
    expect_close(report.mean_log10, n.log10, "report log10");
    expect_close(report.delta1, n.delta[0], "report delta1");
  }
}

TEST(Metrics, DeltaSymmetricAndMonotone) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    auto p = random_pair(rng, 32, 0.9);
    const auto a = threshold_accuracy(p);
    std::swap(p.prediction, p.truth);
    const auto b = threshold_accuracy(p);
    EXPECT_EQ(a.delta1, b.delta1);
    EXPECT_EQ(a.delta2, b.delta2);
    EXPECT_EQ(a.delta3, b.delta3);
    EXPECT_LE(a.delta1, a.delta2);
    EXPECT_LE(a.delta2, a.delta3);
    EXPECT_GE(a.delta1, 0.0);
    EXPECT_LE(a.delta3, 1.0);
  }
}

TEST(Metrics, InvalidPixelsNeverMatter) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = random_pair(rng, 64, 0.5);
    DepthPair q = p;
    for (std::size_t i = 0; i < q.size(); ++i) {
      if (q.valid[i]) continue;
      q.prediction[i] = uniform(rng, -100.0, 100.0);
      q.truth[i] = trial % 2 == 0 ? 0.0 : uniform(rng, -5.0, 1e6);
    }
    const auto a = evaluate(std::span<const DepthPair>(&p, 1));
    const auto b = evaluate(std::span<const DepthPair>(&q, 1));
    EXPECT_EQ(to_json(a), to_json(b));
    EXPECT_EQ(a.pixel_count, b.pixel_count);
  }
}

TEST(Metrics, ReportFieldsRespectBounds) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = random_pair(rng, 40, 0.7);
    const auto r = evaluate(std::span<const DepthPair>(&p, 1));
    for (double v : {r.rmse, r.rmse_log, r.silog, r.abs_rel, r.sq_rel, r.mean_rel, r.mean_log10}) EXPECT_GE(v, 0.0);
    EXPECT_LE(r.delta1, r.delta2);
    EXPECT_LE(r.delta2, r.delta3);
    EXPECT_LE(r.delta3, 1.0);
  }
}

TEST(Metrics, PoolingIsPixelWeighted) {
  Rng rng(6);
  const auto a = random_pair(rng, 30, 0.8);
  const auto b = random_pair(rng, 50, 0.6);
  DepthPair joined = a;
  joined.prediction.insert(joined.prediction.end(), b.prediction.begin(), b.prediction.end());
  joined.truth.insert(joined.truth.end(), b.truth.begin(), b.truth.end());
  joined.valid.insert(joined.valid.end(), b.valid.begin(), b.valid.end());
  const DepthPair both[] = {a, b};
  const auto split = evaluate(both);
  const auto whole = evaluate(std::span<const DepthPair>(&joined, 1));
  EXPECT_EQ(to_json(split), to_json(whole));
  EXPECT_EQ(split.pixel_count, joined.valid_count());
  const Naive n = naive(joined);
  expect_close(split.rmse, n.rmse, "pooled rmse");
  expect_close(split.silog, n.silog, "pooled silog");
}

TEST(Metrics, CapDropsFarPixels) {
  const auto p = pair_of({10, 40, 70, 90}, {12, 45, 60, 100});
  const std::vector<std::uint8_t> keep = {1, 1, 0, 0};
  const auto below_50 = pair_of({10, 40, 70, 90}, {12, 45, 60, 100}, keep);
  const auto capped = evaluate(std::span<const DepthPair>(&p, 1), 50.0);
  const auto masked = evaluate(std::span<const DepthPair>(&below_50, 1));
  ASSERT_TRUE(capped.cap.has_value());
  EXPECT_EQ(*capped.cap, 50.0);
  EXPECT_EQ(capped.pixel_count, 2u);
  EXPECT_EQ(capped.rmse, masked.rmse);
  EXPECT_EQ(capped.delta1, masked.delta1);
  const auto cap80 = evaluate(std::span<const DepthPair>(&p, 1), 80.0);
  EXPECT_EQ(cap80.pixel_count, 3u);
  EXPECT_FALSE(masked.cap.has_value());
  EXPECT_THROW(evaluate(std::span<const DepthPair>(&p, 1), 5.0), EvaluationError);
  EXPECT_THROW(evaluate(std::span<const DepthPair>(&p, 1), 0.0), ConfigError);
}

TEST(Metrics, Errors) {
  EXPECT_THROW(rmse(pair_of({1}, {1}, {0})), EvaluationError);
  EXPECT_THROW(rmse(pair_of({1, 2}, {1})), EvaluationError);
  EXPECT_THROW(rmse_log(pair_of({0}, {1})), EvaluationError);
  EXPECT_THROW(abs_rel(pair_of({1}, {-1})), EvaluationError);
  EXPECT_THROW(evaluate(std::span<const DepthPair>{}), EvaluationError);
}

TEST(Metrics, JsonHasFixedFieldNames) {
  const auto p = pair_of({1.1, 2.3}, {1.0, 2.0});
  const auto j = nlohmann::json::parse(to_json(evaluate(std::span<const DepthPair>(&p, 1))));
  const std::vector<std::string> names = {"rmse",   "rmse_log", "silog",  "abs_rel", "sq_rel", "delta1",
                                          "delta2", "delta3",   "rel",    "log10",   "cap"};
  EXPECT_EQ(j.size(), names.size());
  for (const auto& n : names) EXPECT_TRUE(j.contains(n)) << n;
  EXPECT_TRUE(j["cap"].is_null());
  EXPECT_DOUBLE_EQ(j["rmse"].get<double>(), rmse(p));
  const auto capped = nlohmann::json::parse(to_json(evaluate(std::span<const DepthPair>(&p, 1), 50.0)));
  EXPECT_EQ(capped["cap"].get<double>(), 50.0);
}

}  // namespace
}  // namespace depthfuse
