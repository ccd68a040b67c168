#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace depthfuse {

// Prediction and ground truth over the same pixel grid. Only pixels with a
// nonzero validity byte take part in any metric; an empty mask marks every
// pixel valid.
struct DepthPair {
  std::vector<double> prediction;
  std::vector<double> truth;
  std::vector<std::uint8_t> valid;

  std::size_t size() const noexcept { return truth.size(); }
  bool is_valid(std::size_t i) const noexcept { return valid.empty() || valid[i] != 0; }
  std::size_t valid_count() const noexcept;
};

struct ThresholdSpec {
  double lambda = 1.25;

  void validate() const;
  // lambda, lambda^2, lambda^3
  double threshold(int power) const;
};

struct ThresholdAccuracy {
  double delta1 = 0.0;
  double delta2 = 0.0;
  double delta3 = 0.0;
};

struct MetricsReport {
  double rmse = 0.0;
  double rmse_log = 0.0;
  double silog = 0.0;
  double abs_rel = 0.0;
  double sq_rel = 0.0;
  double delta1 = 0.0;
  double delta2 = 0.0;
  double delta3 = 0.0;
  double mean_rel = 0.0;
  double mean_log10 = 0.0;
  std::optional<double> cap;
  std::size_t pixel_count = 0;
};

double rmse(const DepthPair& pair);
double rmse_log(const DepthPair& pair);
double silog(const DepthPair& pair);
double abs_rel(const DepthPair& pair);
double sq_rel(const DepthPair& pair);
ThresholdAccuracy threshold_accuracy(const DepthPair& pair, const ThresholdSpec& spec = {});

struct RelLog10 {
  double rel = 0.0;
  double log10 = 0.0;
};
RelLog10 mean_rel_log10(const DepthPair& pair);

// Pools valid pixels from every pair (pixel-weighted). Sums use
// compensated accumulation in pair order, so the result does not depend on
// how the same pixels are split into pairs.
class MetricsAccumulator {
 public:
  explicit MetricsAccumulator(std::optional<double> cap = std::nullopt, ThresholdSpec spec = {});

  void add(const DepthPair& pair);
  std::size_t pixel_count() const noexcept { return count_; }
  MetricsReport report() const;

 private:
  struct Sum {
    double sum = 0.0;
    double compensation = 0.0;
    void add(double v) noexcept;
    double value() const noexcept { return sum + compensation; }
  };

  std::optional<double> cap_;
  ThresholdSpec spec_;
  std::size_t count_ = 0;
  Sum sq_err_, sq_log_, log_diff_, abs_rel_, sq_rel_, abs_log10_;
  std::size_t within_[3] = {0, 0, 0};
};

// Caps drop pixels whose ground truth exceeds the cap before pooling.
MetricsReport evaluate(std::span<const DepthPair> pairs, std::optional<double> cap = std::nullopt,
                       const ThresholdSpec& spec = {});

// Flat JSON object: rmse, rmse_log, silog, abs_rel, sq_rel, delta1, delta2,
// delta3, rel, log10, cap (null when uncapped).
std::string to_json(const MetricsReport& report);

}  // namespace depthfuse
