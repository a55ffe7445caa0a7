#include "cpd/nn/adam.hpp"

#include "cpd/error.hpp"

#include <cmath>

namespace cpd::nn {

void adam_step(ParamStore& params, const GradMap& grads, const AdamConfig& config) {
  require(config.lr > 0.0, ErrorKind::InvalidArgument, "adam_step: learning rate must be positive");
  for (const auto& [name, g] : grads) {
    const Tensor& p = params.at(name);
    require(static_cast<std::size_t>(g.rows()) == p.rows() && static_cast<std::size_t>(g.cols()) == p.cols(),
            ErrorKind::ShapeMismatch, "adam_step: gradient shape mismatch for '" + name + "'");
    require(g.allFinite(), ErrorKind::NumericalFailure, "adam_step: non-finite gradient for parameter '" + name + "'");
  }

  const std::int64_t step = params.step() + 1;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
  auto& moments = params.moments();
  for (const auto& [name, g] : grads) {
    Tensor& p = params.at(name);
    auto& mom = moments[name];
    if (mom.m.size() == 0) {
      mom.m = Mat::Zero(g.rows(), g.cols());
      mom.v = Mat::Zero(g.rows(), g.cols());
    }
    mom.m = config.beta1 * mom.m + (1.0 - config.beta1) * g;
    mom.v = config.beta2 * mom.v + (1.0 - config.beta2) * g.cwiseProduct(g);
    Mat value = p.matrix();
    value.array() -= config.lr * (mom.m.array() / bc1) / ((mom.v.array() / bc2).sqrt() + config.eps);
    p.assign(value);
  }
  params.set_step(step);
}

void accumulate_grads(GradMap& dst, const GradMap& src, double weight) {
  for (const auto& [name, g] : src) {
    auto it = dst.find(name);
    if (it == dst.end()) {
      dst.emplace(name, g * weight);
    } else {
      it->second += g * weight;
    }
  }
}

}  // namespace cpd::nn
