#include "depthfuse/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "depthfuse/error.hpp"
#include "depthfuse/random.hpp"

namespace depthfuse {
namespace {

constexpr std::uint64_t kSamplerStream = 0x73616d706c6572ULL;

struct Batch {
  Tensor<float> image;
  Tensor<float> depth;
  std::vector<std::uint8_t> valid;
};

Batch assemble(std::span<const Sample> samples) {
  const std::size_t n = samples.size(), h = samples[0].height, w = samples[0].width, p = h * w;
  Batch b;
  b.image = Tensor<float>(Shape{n, 3, h, w});
  b.depth = Tensor<float>(Shape{n, 1, h, w});
  b.valid.resize(n * p);
  for (std::size_t i = 0; i < n; ++i) {
    const Sample& s = samples[i];
    std::copy(s.rgb.begin(), s.rgb.end(), b.image.raw() + i * 3 * p);
    std::copy(s.depth.begin(), s.depth.end(), b.depth.raw() + i * p);
    std::copy(s.valid.begin(), s.valid.end(), b.valid.begin() + static_cast<std::ptrdiff_t>(i * p));
  }
  return b;
}

void check_uniform_size(std::span<const Sample> samples, const NetworkConfig& network, const char* what) {
  const std::size_t f = network.downsample_factor();
  for (const Sample& s : samples) {
    s.validate();
    if (s.height != samples[0].height || s.width != samples[0].width) {
      throw DataError(std::string(what) + ": samples must share one image size");
    }
    if (s.height % f != 0 || s.width % f != 0) {
      throw ConfigError(std::string(what) + ": image size " + std::to_string(s.height) + "x" +
                        std::to_string(s.width) + " must be a positive multiple of " + std::to_string(f));
    }
  }
}

std::string rng_to_string(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

Rng rng_from_string(const std::string& text) {
  Rng rng;
  std::istringstream is(text);
  is >> rng;
  if (!is) throw FormatError("checkpoint RNG state does not parse", 0);
  return rng;
}

std::string describe(const LossBreakdown& b) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "total=%g l_depth=%g l_ssim=%g l_logistic=%g", b.total, b.depth, b.ssim,
                b.logistic);
  return buf;
}

}  // namespace

void TrainConfig::validate() const {
  if (iterations < 1) throw ConfigError("train.iterations must be at least 1");
  optimizer.validate();
  loss.validate();
  discretization.validate();
  augment.validate();
}

std::string history_csv(std::span<const IterationRecord> records, bool header) {
  std::string out;
  if (header) out += "iteration,total,l_depth,l_ssim,l_logistic\n";
  char buf[160];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof(buf), "%llu,%.9g,%.9g,%.9g,%.9g\n", static_cast<unsigned long long>(r.iteration),
                  r.loss.total, r.loss.depth, r.loss.ssim, r.loss.logistic);
    out += buf;
  }
  return out;
}

Tensor<float> network_input(const Sample& sample, const AugmentSpec& spec) {
  sample.validate();
  std::vector<float> rgb = sample.rgb;
  normalize(rgb, spec.mean, spec.std);
  return Tensor<float>(Shape{1, 3, sample.height, sample.width}, std::move(rgb));
}

TrainResult train(const TrainConfig& config, const NetworkConfig& network, std::span<const Sample> train_set,
                  std::span<const Sample> eval_set, const Checkpoint* resume, const TrainCallbacks& callbacks) {
  config.validate();
  network.validate();
  if (config.discretization.bins != network.depth_bins) {
    throw ConfigError("discretization.bins (" + std::to_string(config.discretization.bins) +
                      ") must equal network.depth_bins (" + std::to_string(network.depth_bins) + ")");
  }
  if (train_set.empty()) throw DataError("training set is empty");
  check_uniform_size(train_set, network, "training set");
  if (!eval_set.empty()) check_uniform_size(eval_set, network, "evaluation set");

  TrainResult result;
  Checkpoint& state = result.checkpoint;
  Rng sampler(derive_seed(config.seed, kSamplerStream));
  if (resume) {
    state = *resume;
    if (state.iteration > config.iterations) {
      throw ConfigError("checkpoint iteration " + std::to_string(state.iteration) + " exceeds the budget of " +
                        std::to_string(config.iterations));
    }
    sampler = rng_from_string(state.rng_state);
  } else {
    state.params = DepthNetwork<float>::build(network, config.init_seed).parameters();
  }
  // Validates names and shapes against the config.
  DepthNetwork<float> net(network, std::move(state.params));

  const std::size_t batch_size = config.optimizer.batch_size;
  std::vector<Sample> batch(batch_size);
  for (std::uint64_t it = state.iteration; it < config.iterations; ++it) {
    for (std::size_t b = 0; b < batch_size; ++b) {
      const Sample& src = train_set[uniform_index(sampler, train_set.size())];
      if (config.augment_enabled) {
        Rng rng(derive_seed(config.seed, it, b + 1));
        batch[b] = augment(src, config.augment, rng);
      } else {
        batch[b] = src;
        normalize(batch[b].rgb, config.augment.mean, config.augment.std);
      }
    }
    const Batch data = assemble(batch);

    Tape<float> tape;
    BoundParameters<float> bound(tape, net.parameters(), true);
    const Var<float> image = tape.constant(data.image);
    const NetworkOutput<float> out = net.forward(bound, image);
    const CombinedLoss<float> loss =
        combined_loss(out.depth, out.logits, data.depth, data.valid, config.loss, config.discretization);
    const LossBreakdown& br = loss.breakdown;
    if (!std::isfinite(br.total) || !std::isfinite(br.depth) || !std::isfinite(br.ssim) ||
        !std::isfinite(br.logistic)) {
      throw NumericalError("non-finite loss at iteration " + std::to_string(it + 1) + ": " + describe(br));
    }
    tape.backward(loss.total);
    std::vector<Tensor<float>> grads;
    grads.reserve(bound.size());
    for (std::size_t i = 0; i < bound.size(); ++i) grads.push_back(tape.grad(bound[i]));
    optimizer_step<float>(net.parameters(), grads, state.optimizer, config.optimizer);

    const IterationRecord record{it + 1, br};
    result.history.iterations.push_back(record);
    if (callbacks.on_iteration) callbacks.on_iteration(record);

    const std::uint64_t done = it + 1;
    if (config.eval_interval != 0 && done % config.eval_interval == 0 && !eval_set.empty()) {
      const EvalRecord ev{done, evaluate_network(net, eval_set, config.augment, std::nullopt, batch_size)};
      result.history.evaluations.push_back(ev);
      if (callbacks.on_eval) callbacks.on_eval(ev);
    }
    if (config.checkpoint_interval != 0 && done % config.checkpoint_interval == 0 && callbacks.on_checkpoint) {
      Checkpoint snapshot;
      snapshot.params = net.parameters();
      snapshot.optimizer = state.optimizer;
      snapshot.iteration = done;
      snapshot.rng_state = rng_to_string(sampler);
      snapshot.fingerprint = state.fingerprint;
      snapshot.config_json = state.config_json;
      callbacks.on_checkpoint(snapshot);
    }
  }
  state.params = net.parameters();
  state.iteration = config.iterations;
  state.rng_state = rng_to_string(sampler);
  return result;
}

std::vector<std::vector<float>> predict(const DepthNetwork<float>& network, std::span<const Sample> samples,
                                        const AugmentSpec& spec, std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("predict: batch size must be positive");
  std::vector<std::vector<float>> out;
  out.reserve(samples.size());
  const std::size_t f = network.config().downsample_factor();
  for (std::size_t first = 0; first < samples.size(); first += batch_size) {
    const std::size_t count = std::min(batch_size, samples.size() - first);
    const auto group = samples.subspan(first, count);
    std::size_t h = group[0].height, w = group[0].width;
    for (const Sample& s : group) {
      s.validate();
      if (s.height % f != 0 || s.width % f != 0 || s.height == 0 || s.width == 0) {
        throw ConfigError("image size " + std::to_string(s.height) + "x" + std::to_string(s.width) +
                          " must be a positive multiple of " + std::to_string(f));
      }
    }
    // Mixed sizes fall back to one sample per forward pass.
    bool uniform = true;
    for (const Sample& s : group) uniform = uniform && s.height == h && s.width == w;
    if (!uniform) {
      for (const Sample& s : group) {
        auto single = predict(network, std::span<const Sample>(&s, 1), spec, 1);
        out.push_back(std::move(single[0]));
      }
      continue;
    }
    Tensor<float> image(Shape{count, 3, h, w});
    for (std::size_t i = 0; i < count; ++i) {
      const Tensor<float> x = network_input(group[i], spec);
      std::copy(x.raw(), x.raw() + x.numel(), image.raw() + i * 3 * h * w);
    }
    Tape<float> tape;
    const NetworkOutput<float> o = network.forward(tape, image);
    const float* d = o.depth.value().raw();
    for (std::size_t i = 0; i < count; ++i) out.emplace_back(d + i * h * w, d + (i + 1) * h * w);
  }
  return out;
}

MetricsReport evaluate_network(const DepthNetwork<float>& network, std::span<const Sample> samples,
                               const AugmentSpec& spec, std::optional<double> cap, std::size_t batch_size) {
  if (samples.empty()) throw EvaluationError("evaluation set is empty");
  const auto preds = predict(network, samples, spec, batch_size);
  MetricsAccumulator acc(cap);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    std::vector<double> p(preds[i].begin(), preds[i].end());
    std::vector<double> t(s.depth.begin(), s.depth.end());
    acc.add(DepthPair{std::move(p), std::move(t), s.valid});
  }
  return acc.report();
}

}  // namespace depthfuse
