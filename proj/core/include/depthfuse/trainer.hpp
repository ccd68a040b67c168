#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "depthfuse/augment.hpp"
#include "depthfuse/checkpoint.hpp"
#include "depthfuse/data_io.hpp"
#include "depthfuse/losses.hpp"
#include "depthfuse/metrics.hpp"
#include "depthfuse/network.hpp"
#include "depthfuse/optim.hpp"

namespace depthfuse {

struct TrainConfig {
  std::size_t iterations = 2000;
  // 0 disables periodic evaluation / checkpointing.
  std::size_t eval_interval = 0;
  std::size_t checkpoint_interval = 0;
  std::uint64_t seed = 1;
  // Seeds parameter initialisation; the data stream uses `seed`.
  std::uint64_t init_seed = 1;
  OptimizerConfig optimizer;
  LossWeights loss;
  DiscretizationSpec discretization;
  AugmentSpec augment;
  bool augment_enabled = true;

  void validate() const;
};

struct IterationRecord {
  std::uint64_t iteration = 0;  // 1-based: state after this many steps
  LossBreakdown loss;
};

struct EvalRecord {
  std::uint64_t iteration = 0;
  MetricsReport report;
};

struct TrainHistory {
  std::vector<IterationRecord> iterations;
  std::vector<EvalRecord> evaluations;
};

// CSV with header iteration,total,l_depth,l_ssim,l_logistic.
std::string history_csv(std::span<const IterationRecord> records, bool header = true);

struct TrainCallbacks {
  std::function<void(const IterationRecord&)> on_iteration;
  std::function<void(const EvalRecord&)> on_eval;
  // Fired every checkpoint_interval steps with the full resumable state.
  std::function<void(const Checkpoint&)> on_checkpoint;
};

struct TrainResult {
  Checkpoint checkpoint;
  TrainHistory history;
};

// Network input for a sample: the planar RGB normalized with the augment
// mean/std, shaped 1 x 3 x H x W.
Tensor<float> network_input(const Sample& sample, const AugmentSpec& spec);

// Runs until config.iterations total steps. When resuming, the checkpoint's
// parameters, optimizer state, iteration and sampler state are restored and
// the run continues exactly as the uninterrupted one would have. Throws
// NumericalError on a non-finite loss, naming the iteration and each term.
TrainResult train(const TrainConfig& config, const NetworkConfig& network,
                  std::span<const Sample> train_set, std::span<const Sample> eval_set,
                  const Checkpoint* resume = nullptr, const TrainCallbacks& callbacks = {});

// Predicted depth (H x W) for each sample, evaluated in batches.
std::vector<std::vector<float>> predict(const DepthNetwork<float>& network, std::span<const Sample> samples,
                                        const AugmentSpec& spec, std::size_t batch_size = 8);

MetricsReport evaluate_network(const DepthNetwork<float>& network, std::span<const Sample> samples,
                               const AugmentSpec& spec, std::optional<double> cap = std::nullopt,
                               std::size_t batch_size = 8);

}  // namespace depthfuse
