#include "cpd/nn/graph.hpp"

#include "cpd/error.hpp"

#include <algorithm>
#include <cmath>

namespace cpd::nn {

namespace {

double loss_only(const Graph& graph, const std::vector<Tensor>& inputs, const ParamStore& params) {
  Tape tape(false);
  std::vector<Var> in;
  in.reserve(inputs.size());
  for (const auto& t : inputs) in.push_back(tape.constant(t.matrix()));
  GraphOutput out = graph(tape, in, params);
  const Mat& l = out.loss.value();
  require(l.size() == 1, ErrorKind::ShapeMismatch, "finite_diff_check: loss must be scalar");
  return l(0, 0);
}

}  // namespace

Evaluation evaluate_with_grads(const Graph& graph, const std::vector<Tensor>& inputs, const ParamStore& params) {
  Tape tape(true);
  std::vector<Var> in;
  in.reserve(inputs.size());
  for (const auto& t : inputs) in.push_back(t.requires_grad() ? tape.leaf(t.matrix()) : tape.constant(t.matrix()));
  GraphOutput out = graph(tape, in, params);
  tape.backward(out.loss);

  Evaluation ev;
  for (const Var& o : out.outputs) ev.outputs.push_back(o.value());
  ev.loss = out.loss.value()(0, 0);
  ev.param_grads = tape.param_grads();
  for (std::size_t i = 0; i < inputs.size(); ++i)
    ev.input_grads.push_back(inputs[i].requires_grad() ? tape.grad(in[i]) : Mat());
  return ev;
}

double finite_diff_check(const Graph& graph, const std::vector<Tensor>& inputs, const ParamStore& params,
                         int n_probes, double h, Rng& rng) {
  require(n_probes >= 1, ErrorKind::InvalidArgument, "finite_diff_check: n_probes must be >= 1");
  const Evaluation ev = evaluate_with_grads(graph, inputs, params);

  // Candidate probe targets: (is_input, index/name, flat offset).
  struct Target {
    int input = -1;
    std::string param;
    std::size_t size = 0;
  };
  std::vector<Target> targets;
  for (std::size_t i = 0; i < inputs.size(); ++i)
    if (inputs[i].requires_grad()) targets.push_back({static_cast<int>(i), {}, inputs[i].size()});
  for (const auto& [name, g] : ev.param_grads) targets.push_back({-1, name, static_cast<std::size_t>(g.size())});
  require(!targets.empty(), ErrorKind::InvalidArgument, "finite_diff_check: nothing to differentiate");

  double worst = 0.0;
  for (int p = 0; p < n_probes; ++p) {
    const Target& tg = targets[rng.index(targets.size())];
    const std::size_t k = rng.index(tg.size);
    double analytic = 0.0;
    double numeric = 0.0;
    if (tg.input >= 0) {
      analytic = ev.input_grads[tg.input].data()[k];
      std::vector<Tensor> plus = inputs;
      std::vector<Tensor> minus = inputs;
      plus[tg.input].values()[k] += h;
      minus[tg.input].values()[k] -= h;
      numeric = (loss_only(graph, plus, params) - loss_only(graph, minus, params)) / (2.0 * h);
    } else {
      analytic = ev.param_grads.at(tg.param).data()[k];
      ParamStore plus = params;
      ParamStore minus = params;
      plus.at(tg.param).values()[k] += h;
      minus.at(tg.param).values()[k] -= h;
      numeric = (loss_only(graph, inputs, plus) - loss_only(graph, inputs, minus)) / (2.0 * h);
    }
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    worst = std::max(worst, std::abs(analytic - numeric) / denom);
  }
  return worst;
}

}  // namespace cpd::nn
