#pragma once

#include "cpd/nn/rng.hpp"
#include "cpd/nn/tape.hpp"

#include <functional>
#include <vector>

namespace cpd::nn {

// A composed computation: builds outputs and a scalar loss on a tape from input
// leaves and parameters.
struct GraphOutput {
  std::vector<Var> outputs;
  Var loss;
};
using Graph = std::function<GraphOutput(Tape&, const std::vector<Var>& inputs, const ParamStore&)>;

struct Evaluation {
  std::vector<Mat> outputs;
  double loss = 0.0;
  GradMap param_grads;
  // One entry per input; zero-sized for inputs without requires_grad.
  std::vector<Mat> input_grads;
};

// Runs the graph once and back-propagates the loss to every parameter and to the
// inputs flagged requires_grad.
Evaluation evaluate_with_grads(const Graph& graph, const std::vector<Tensor>& inputs, const ParamStore& params);

// Compares analytic gradients with central differences on n_probes randomly chosen
// scalars (drawn over parameters and requires_grad inputs). Returns the worst
// relative error |a - n| / max(|a|, |n|, 1e-6).
double finite_diff_check(const Graph& graph, const std::vector<Tensor>& inputs, const ParamStore& params,
                         int n_probes, double h, Rng& rng);

}  // namespace cpd::nn
