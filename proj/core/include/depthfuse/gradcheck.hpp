#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "depthfuse/autodiff.hpp"
#include "depthfuse/tensor.hpp"

namespace depthfuse {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-5;
  // Denominator floor of the relative error |a - n| / max(|a|, |n|, floor).
  double floor = 1e-3;
  // Skip elements where forward and backward one-sided differences disagree,
  // i.e. where the step straddles a ReLU/abs kink.
  bool skip_nonsmooth = false;
  // Seeds the projection applied to non-scalar outputs.
  std::uint64_t seed = 7;
  // Multiplies the autodiff gradient before comparison; 1 disables it.
  // Fault-injection hook for testing the checker itself.
  double corrupt_factor = 1.0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  bool passed = true;
};

// Builds the function under test on a fresh tape from the given input vars.
// Non-scalar results are reduced with a fixed random projection.
using GradFunction =
    std::function<Var<double>(Tape<double>&, std::span<const Var<double>>)>;

// Compares reverse-mode gradients with central differences for every element
// of every input whose flag in `differentiate` is set (all when empty).
GradCheckReport grad_check(const GradFunction& fn, std::span<const Tensor<double>> inputs,
                           const GradCheckOptions& options = {},
                           std::span<const bool> differentiate = {});

struct GradSuiteOptions {
  std::size_t instances = 20;
  double tolerance = 1e-5;
  std::uint64_t seed = 2024;
  // Entry whose autodiff gradient gets perturbed, for fault injection.
  std::optional<std::string> corrupt;
};

struct GradSuiteEntry {
  std::string name;
  std::size_t instances = 0;
  double max_rel_error = 0.0;
  bool passed = true;
};

// Every differentiable primitive and loss term on random 64-bit instances.
std::vector<GradSuiteEntry> run_gradcheck_suite(const GradSuiteOptions& options = {});

}  // namespace depthfuse
