#include "depthfuse/metrics.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "depthfuse/error.hpp"

namespace depthfuse {
namespace {

void check_sizes(const DepthPair& pair) {
  if (pair.prediction.size() != pair.truth.size() ||
      (!pair.valid.empty() && pair.valid.size() != pair.truth.size())) {
    throw EvaluationError("depth pair: prediction, truth and mask sizes differ");
  }
}

std::size_t require_pixels(const DepthPair& pair) {
  check_sizes(pair);
  const std::size_t t = pair.valid_count();
  if (t == 0) throw EvaluationError("depth pair has no valid pixels");
  return t;
}

void require_positive(double v, const char* what, std::size_t i) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw EvaluationError(std::string(what) + " at pixel " + std::to_string(i) +
                          " must be positive and finite, got " + std::to_string(v));
  }
}

}  // namespace

std::size_t DepthPair::valid_count() const noexcept {
  if (valid.empty()) return truth.size();
  return static_cast<std::size_t>(std::count_if(valid.begin(), valid.end(), [](auto v) { return v != 0; }));
}

void ThresholdSpec::validate() const {
  if (!(lambda > 1.0)) throw ConfigError("threshold lambda must be > 1");
}

double ThresholdSpec::threshold(int power) const { return std::pow(lambda, power); }

double rmse(const DepthPair& pair) {
  const std::size_t t = require_pixels(pair);
  double acc = 0.0;
  for (std::size_t i = 0; i < pair.size(); ++i) {
    if (!pair.is_valid(i)) continue;
    const double e = pair.prediction[i] - pair.truth[i];
    acc += e * e;
  }
  return std::sqrt(acc / static_cast<double>(t));
}

double rmse_log(const DepthPair& pair) {
  const std::size_t t = require_pixels(pair);
  double acc = 0.0;
  for (std::size_t i = 0; i < pair.size(); ++i) {
    if (!pair.is_valid(i)) continue;
    require_positive(pair.prediction[i], "prediction", i);
    require_positive(pair.truth[i], "ground truth", i);
    const double d = std::log(pair.prediction[i]) - std::log(pair.truth[i]);
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(t));
}

double silog(const DepthPair& pair) {
  const std::size_t t = require_pixels(pair);
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t i = 0; i < pair.size(); ++i) {
    if (!pair.is_valid(i)) continue;
    require_positive(pair.prediction[i], "prediction", i);
    require_positive(pair.truth[i], "ground truth", i);
    const double d = std::log(pair.prediction[i]) - std::log(pair.truth[i]);
    sum += d;
    sum_sq += d * d;
  }
  const double n = static_cast<double>(t);
  return sum_sq / n - (sum * sum) / (n * n);
}

double abs_rel(const DepthPair& pair) {
  const std::size_t t = require_pixels(pair);
  double acc = 0.0;
  for (std::size_t i = 0; i < pair.size(); ++i) {
    if (!pair.is_valid(i)) continue;
    require_positive(pair.truth[i], "ground truth", i);
    acc += std::abs(pair.prediction[i] - pair.truth[i]) / pair.truth[i];
  }
  return acc / static_cast<double>(t);
}

double sq_rel(const DepthPair& pair) {
  const std::size_t t = require_pixels(pair);
  double acc = 0.0;
  for (std::size_t i = 0; i < pair.size(); ++i) {
    if (!pair.is_valid(i)) continue;
    require_positive(pair.truth[i], "ground truth", i);
    const double e = pair.prediction[i] - pair.truth[i];
    acc += e * e / pair.truth[i];
  }
  return acc / static_cast<double>(t);
}

ThresholdAccuracy threshold_accuracy(const DepthPair& pair, const ThresholdSpec& spec) {
  spec.validate();
  const std::size_t t = require_pixels(pair);
  const double thr[3] = {spec.threshold(1), spec.threshold(2), spec.threshold(3)};
  std::size_t hits[3] = {0, 0, 0};
  for (std::size_t i = 0; i < pair.size(); ++i) {
    if (!pair.is_valid(i)) continue;
    require_positive(pair.prediction[i], "prediction", i);
    require_positive(pair.truth[i], "ground truth", i);
    const double ratio = std::max(pair.prediction[i] / pair.truth[i], pair.truth[i] / pair.prediction[i]);
    for (int k = 0; k < 3; ++k) {
      if (ratio < thr[k]) ++hits[k];
    }
  }
  const double n = static_cast<double>(t);
  return ThresholdAccuracy{static_cast<double>(hits[0]) / n, static_cast<double>(hits[1]) / n,
                           static_cast<double>(hits[2]) / n};
}

RelLog10 mean_rel_log10(const DepthPair& pair) {
  const std::size_t t = require_pixels(pair);
  double rel = 0.0, lg = 0.0;
  for (std::size_t i = 0; i < pair.size(); ++i) {
    if (!pair.is_valid(i)) continue;
    require_positive(pair.prediction[i], "prediction", i);
    require_positive(pair.truth[i], "ground truth", i);
    rel += std::abs(pair.prediction[i] - pair.truth[i]) / pair.truth[i];
    lg += std::abs(std::log10(pair.prediction[i]) - std::log10(pair.truth[i]));
  }
  const double n = static_cast<double>(t);
  return RelLog10{rel / n, lg / n};
}

void MetricsAccumulator::Sum::add(double v) noexcept {
  // Neumaier's variant of Kahan summation.
  const double t = sum + v;
  if (std::abs(sum) >= std::abs(v)) {
    compensation += (sum - t) + v;
  } else {
    compensation += (v - t) + sum;
  }
  sum = t;
}

MetricsAccumulator::MetricsAccumulator(std::optional<double> cap, ThresholdSpec spec)
    : cap_(cap), spec_(spec) {
  spec_.validate();
  if (cap_ && !(*cap_ > 0.0)) throw ConfigError("evaluation cap must be positive");
}

void MetricsAccumulator::add(const DepthPair& pair) {
  check_sizes(pair);
  const double thr[3] = {spec_.threshold(1), spec_.threshold(2), spec_.threshold(3)};
  for (std::size_t i = 0; i < pair.size(); ++i) {
    if (!pair.is_valid(i)) continue;
    const double gt = pair.truth[i];
    const double pred = pair.prediction[i];
    if (cap_ && gt > *cap_) continue;
    require_positive(pred, "prediction", i);
    require_positive(gt, "ground truth", i);
    const double err = pred - gt;
    const double d = std::log(pred) - std::log(gt);
    sq_err_.add(err * err);
    sq_log_.add(d * d);
    log_diff_.add(d);
    abs_rel_.add(std::abs(err) / gt);
    sq_rel_.add(err * err / gt);
    abs_log10_.add(std::abs(std::log10(pred) - std::log10(gt)));
    const double ratio = std::max(pred / gt, gt / pred);
    for (int k = 0; k < 3; ++k) {
      if (ratio < thr[k]) ++within_[k];
    }
    ++count_;
  }
}

MetricsReport MetricsAccumulator::report() const {
  if (count_ == 0) throw EvaluationError("evaluation: no valid pixels remain after masking and capping");
  const double n = static_cast<double>(count_);
  MetricsReport r;
  r.rmse = std::sqrt(sq_err_.value() / n);
  r.rmse_log = std::sqrt(sq_log_.value() / n);
  const double mean_d = log_diff_.value() / n;
  r.silog = sq_log_.value() / n - mean_d * mean_d;
  r.abs_rel = abs_rel_.value() / n;
  r.sq_rel = sq_rel_.value() / n;
  r.delta1 = static_cast<double>(within_[0]) / n;
  r.delta2 = static_cast<double>(within_[1]) / n;
  r.delta3 = static_cast<double>(within_[2]) / n;
  r.mean_rel = r.abs_rel;
  r.mean_log10 = abs_log10_.value() / n;
  r.cap = cap_;
  r.pixel_count = count_;
  return r;
}

MetricsReport evaluate(std::span<const DepthPair> pairs, std::optional<double> cap,
                       const ThresholdSpec& spec) {
  if (pairs.empty()) throw EvaluationError("evaluation needs at least one depth pair");
  MetricsAccumulator acc(cap, spec);
  for (const auto& p : pairs) acc.add(p);
  return acc.report();
}

std::string to_json(const MetricsReport& report) {
  nlohmann::ordered_json j;
  j["rmse"] = report.rmse;
  j["rmse_log"] = report.rmse_log;
  j["silog"] = report.silog;
  j["abs_rel"] = report.abs_rel;
  j["sq_rel"] = report.sq_rel;
  j["delta1"] = report.delta1;
  j["delta2"] = report.delta2;
  j["delta3"] = report.delta3;
  j["rel"] = report.mean_rel;
  j["log10"] = report.mean_log10;
  if (report.cap) {
    j["cap"] = *report.cap;
  } else {
    j["cap"] = nullptr;
  }
  return j.dump();
}

}  // namespace depthfuse
