#include "depthfuse/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "depthfuse/error.hpp"
#include "depthfuse/losses.hpp"
#include "depthfuse/ops.hpp"
#include "depthfuse/random.hpp"

namespace depthfuse {
namespace {

Tensor<double> random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(shape);
  for (double& v : t.data()) v = uniform(rng, lo, hi);
  return t;
}

// Uniform in [-hi, -lo] U [lo, hi], keeping values away from zero.
Tensor<double> random_away_from_zero(Rng& rng, Shape shape, double lo, double hi) {
  Tensor<double> t(shape);
  for (double& v : t.data()) v = (bernoulli(rng, 0.5) ? 1.0 : -1.0) * uniform(rng, lo, hi);
  return t;
}

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(uniform_index(rng, hi - lo + 1));
}

Var<double> to_scalar(Tape<double>& tape, Var<double> out, std::uint64_t seed) {
  if (out.value().is_scalar()) return out;
  Rng rng(seed);
  Tensor<double> weights = random_tensor(rng, out.shape());
  (void)tape;
  return dot(out, weights);
}

double evaluate(const GradFunction& fn, std::span<const Tensor<double>> inputs, std::uint64_t seed) {
  Tape<double> tape;
  std::vector<Var<double>> vars;
  for (const auto& t : inputs) vars.push_back(tape.constant(t));
  return to_scalar(tape, fn(tape, vars), seed).value().item();
}

using Case = std::function<GradCheckReport(Rng&, const GradCheckOptions&)>;

struct SuiteCase {
  std::string name;
  Case run;
};

std::vector<SuiteCase> suite_cases() {
  std::vector<SuiteCase> cases;

  cases.push_back({"conv2d", [](Rng& rng, const GradCheckOptions& o) {
    ConvSpec spec;
    std::size_t h = 0, w = 0, cin = 0, cout = 0, n = 0;
    for (;;) {
      const std::size_t k = 2 * pick(rng, 0, 2) + 1;
      spec = ConvSpec{k, k, pick(rng, 1, 2), pick(rng, 0, 3), pick(rng, 1, 4)};
      h = pick(rng, 4, 9);
      w = pick(rng, 4, 9);
      if (h + 2 * spec.padding >= spec.extent_h() && w + 2 * spec.padding >= spec.extent_w()) break;
    }
    n = pick(rng, 1, 2);
    cin = pick(rng, 1, 3);
    cout = pick(rng, 1, 3);
    const std::vector<Tensor<double>> in = {
        random_tensor(rng, Shape{n, cin, h, w}),
        random_tensor(rng, Shape{cout, cin, spec.kernel_h, spec.kernel_w}),
        random_tensor(rng, Shape{1, cout, 1, 1})};
    return grad_check([spec](Tape<double>&, std::span<const Var<double>> v) {
      return conv2d(v[0], v[1], v[2], spec);
    }, in, o);
  }});

  cases.push_back({"concat_channels", [](Rng& rng, const GradCheckOptions& o) {
    const std::size_t n = pick(rng, 1, 2), h = pick(rng, 1, 5), w = pick(rng, 1, 5);
    std::vector<Tensor<double>> in;
    const std::size_t parts = pick(rng, 1, 4);
    for (std::size_t i = 0; i < parts; ++i) in.push_back(random_tensor(rng, Shape{n, pick(rng, 1, 3), h, w}));
    return grad_check([](Tape<double>&, std::span<const Var<double>> v) {
      return concat_channels<double>(v);
    }, in, o);
  }});

  cases.push_back({"relu", [](Rng& rng, const GradCheckOptions& o) {
    const std::vector<Tensor<double>> in = {
        random_away_from_zero(rng, Shape{pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 1, 6), pick(rng, 1, 6)}, 1e-2, 1.0)};
    return grad_check([](Tape<double>&, std::span<const Var<double>> v) { return relu(v[0]); }, in, o);
  }});

  cases.push_back({"softplus", [](Rng& rng, const GradCheckOptions& o) {
    const std::vector<Tensor<double>> in = {
        random_tensor(rng, Shape{1, pick(rng, 1, 3), pick(rng, 1, 6), pick(rng, 1, 6)}, -6.0, 6.0)};
    return grad_check([](Tape<double>&, std::span<const Var<double>> v) { return softplus(v[0]); }, in, o);
  }});

  cases.push_back({"group_norm", [](Rng& rng, const GradCheckOptions& o) {
    const std::size_t groups = pick(rng, 1, 2);
    const std::size_t c = groups * pick(rng, 1, 3);
    const std::vector<Tensor<double>> in = {
        random_tensor(rng, Shape{pick(rng, 1, 2), c, pick(rng, 2, 5), pick(rng, 2, 5)}),
        random_tensor(rng, Shape{1, c, 1, 1}, 0.5, 2.0), random_tensor(rng, Shape{1, c, 1, 1})};
    return grad_check([groups](Tape<double>&, std::span<const Var<double>> v) {
      return group_norm(v[0], v[1], v[2], groups);
    }, in, o);
  }});

  cases.push_back({"add", [](Rng& rng, const GradCheckOptions& o) {
    const Shape s{pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 1, 5), pick(rng, 1, 5)};
    const std::vector<Tensor<double>> in = {random_tensor(rng, s), random_tensor(rng, s), random_tensor(rng, s)};
    return grad_check([](Tape<double>&, std::span<const Var<double>> v) { return add_n<double>(v); }, in, o);
  }});

  cases.push_back({"avg_pool2", [](Rng& rng, const GradCheckOptions& o) {
    const std::vector<Tensor<double>> in = {
        random_tensor(rng, Shape{pick(rng, 1, 2), pick(rng, 1, 3), 2 * pick(rng, 1, 4), 2 * pick(rng, 1, 4)})};
    return grad_check([](Tape<double>&, std::span<const Var<double>> v) { return avg_pool2(v[0]); }, in, o);
  }});

  cases.push_back({"upsample_bilinear", [](Rng& rng, const GradCheckOptions& o) {
    const std::size_t factor = pick(rng, 1, 4);
    const std::vector<Tensor<double>> in = {
        random_tensor(rng, Shape{pick(rng, 1, 2), pick(rng, 1, 2), pick(rng, 1, 5), pick(rng, 1, 5)})};
    return grad_check([factor](Tape<double>&, std::span<const Var<double>> v) {
      return upsample_bilinear(v[0], factor);
    }, in, o);
  }});

  cases.push_back({"sum_mean_scale", [](Rng& rng, const GradCheckOptions& o) {
    const double factor = uniform(rng, -2.0, 2.0);
    const std::vector<Tensor<double>> in = {random_tensor(rng, Shape{1, 2, pick(rng, 1, 4), pick(rng, 1, 4)})};
    return grad_check([factor](Tape<double>&, std::span<const Var<double>> v) {
      const Var<double> parts[] = {sum(v[0]), mean(scale(v[0], factor))};
      const double w[] = {0.5, 1.5};
      return weighted_sum<double>(parts, w);
    }, in, o);
  }});

  cases.push_back({"l1_depth_loss", [](Rng& rng, const GradCheckOptions& o) {
    const Shape s{pick(rng, 1, 2), 1, pick(rng, 2, 6), pick(rng, 2, 6)};
    Tensor<double> truth = random_tensor(rng, s, 1.0, 10.0);
    Tensor<double> pred = truth;
    // offsets of at least 1e-3 keep every pixel far from an |.| tie
    for (double& v : pred.data()) v += (bernoulli(rng, 0.5) ? 1.0 : -1.0) * uniform(rng, 1e-3, 2.0);
    std::vector<std::uint8_t> mask(s.numel());
    for (auto& m : mask) m = bernoulli(rng, 0.8) ? 1 : 0;
    mask[0] = 1;
    const std::vector<Tensor<double>> in = {pred};
    return grad_check([truth, mask](Tape<double>&, std::span<const Var<double>> v) {
      return l1_depth_loss(v[0], truth, mask);
    }, in, o);
  }});

  cases.push_back({"ssim_loss", [](Rng& rng, const GradCheckOptions& o) {
    const std::size_t window = 2 * pick(rng, 1, 3) + 1;
    const Shape s{pick(rng, 1, 2), 1, window + pick(rng, 0, 4), window + pick(rng, 0, 4)};
    const Tensor<double> truth = random_tensor(rng, s, 1.0, 10.0);
    const Tensor<double> pred = random_tensor(rng, s, 1.0, 10.0);
    std::vector<std::uint8_t> mask(s.numel(), 1);
    // A masked corner still leaves windows that avoid it.
    if (s.h > window && s.w > window && bernoulli(rng, 0.5)) mask[0] = 0;
    const SsimParams params{window, 0.01, 0.09};
    const std::vector<Tensor<double>> in = {pred};
    return grad_check([truth, mask, params](Tape<double>&, std::span<const Var<double>> v) {
      return ssim_loss(v[0], truth, mask, params);
    }, in, o);
  }});

  cases.push_back({"multinomial_logistic_loss", [](Rng& rng, const GradCheckOptions& o) {
    const std::size_t k = pick(rng, 2, 6);
    const Shape s{pick(rng, 1, 2), k, pick(rng, 1, 4), pick(rng, 1, 4)};
    const std::size_t pixels = s.n * s.plane();
    std::vector<std::int32_t> labels(pixels);
    for (auto& l : labels) l = static_cast<std::int32_t>(uniform_index(rng, k));
    std::vector<std::uint8_t> mask(pixels, 1);
    const std::vector<Tensor<double>> in = {random_tensor(rng, s, -3.0, 3.0)};
    return grad_check([labels, mask](Tape<double>&, std::span<const Var<double>> v) {
      return multinomial_logistic_loss<double>(v[0], labels, mask);
    }, in, o);
  }});

  cases.push_back({"combined_loss", [](Rng& rng, const GradCheckOptions& o) {
    DiscretizationSpec spec{pick(rng, 2, 8), 1.0, 10.0};
    LossWeights weights;
    weights.alpha = uniform(rng, 0.1, 2.0);
    weights.beta = uniform(rng, 0.1, 2.0);
    weights.gamma = uniform(rng, 0.1, 2.0);
    weights.ssim_window = 3;
    const Shape s{1, 1, pick(rng, 3, 6), pick(rng, 3, 6)};
    Tensor<double> truth = random_tensor(rng, s, 1.0, 10.0);
    Tensor<double> pred = truth;
    for (double& v : pred.data()) v += (bernoulli(rng, 0.5) ? 1.0 : -1.0) * uniform(rng, 1e-2, 0.9);
    const std::vector<Tensor<double>> in = {pred, random_tensor(rng, Shape{1, spec.bins, s.h, s.w})};
    return grad_check([truth, weights, spec](Tape<double>&, std::span<const Var<double>> v) {
      return combined_loss(v[0], v[1], truth, {}, weights, spec).total;
    }, in, o);
  }});

  return cases;
}

}  // namespace

GradCheckReport grad_check(const GradFunction& fn, std::span<const Tensor<double>> inputs,
                           const GradCheckOptions& options, std::span<const bool> differentiate) {
  if (!differentiate.empty() && differentiate.size() != inputs.size()) {
    throw UsageError("grad_check: differentiate flags must match the inputs");
  }
  // reverse-mode gradients
  std::vector<Tensor<double>> analytic;
  {
    Tape<double> tape;
    std::vector<Var<double>> vars;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const bool want = differentiate.empty() || differentiate[i];
      vars.push_back(want ? tape.variable(inputs[i]) : tape.constant(inputs[i]));
    }
    const Var<double> loss = to_scalar(tape, fn(tape, vars), options.seed);
    tape.backward(loss);
    for (const auto& v : vars) analytic.push_back(tape.grad(v));
  }

  GradCheckReport report;
  std::vector<Tensor<double>> probe(inputs.begin(), inputs.end());
  const double h = options.step;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!differentiate.empty() && !differentiate[i]) continue;
    auto values = probe[i].data();
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double original = values[j];
      values[j] = original + h;
      const double f_plus = evaluate(fn, probe, options.seed);
      values[j] = original - h;
      const double f_minus = evaluate(fn, probe, options.seed);
      values[j] = original;
      const double numeric = (f_plus - f_minus) / (2.0 * h);
      const double auto_grad = analytic[i].data()[j] * options.corrupt_factor;
      const double scale = std::max({std::abs(auto_grad), std::abs(numeric), options.floor});
      if (options.skip_nonsmooth) {
        const double f0 = evaluate(fn, probe, options.seed);
        const double forward = (f_plus - f0) / h;
        const double backward = (f0 - f_minus) / h;
        if (std::abs(forward - backward) > 1e-3 * scale) {
          ++report.skipped;
          continue;
        }
      }
      report.max_rel_error = std::max(report.max_rel_error, std::abs(auto_grad - numeric) / scale);
      ++report.checked;
    }
  }
  report.passed = report.max_rel_error < options.tolerance;
  return report;
}

std::vector<GradSuiteEntry> run_gradcheck_suite(const GradSuiteOptions& options) {
  std::vector<GradSuiteEntry> entries;
  const auto cases = suite_cases();
  for (std::size_t c = 0; c < cases.size(); ++c) {
    GradSuiteEntry entry;
    entry.name = cases[c].name;
    GradCheckOptions o;
    o.tolerance = options.tolerance;
    if (options.corrupt && *options.corrupt == entry.name) o.corrupt_factor = 1.0 + 1e-3;
    for (std::size_t i = 0; i < options.instances; ++i) {
      Rng rng(derive_seed(options.seed, c, i));
      o.seed = derive_seed(options.seed, c, i + 1000003);
      const auto r = cases[c].run(rng, o);
      entry.max_rel_error = std::max(entry.max_rel_error, r.max_rel_error);
      entry.passed = entry.passed && r.passed;
      ++entry.instances;
    }
    entries.push_back(entry);
  }
  return entries;
}

}  // namespace depthfuse
