#pragma once

#include "cpd/nn/tensor.hpp"

namespace cpd::nn {

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam update for every parameter named in grads (a subset of
// the store). Increments the store's step counter. A non-finite gradient aborts
// the update before any parameter is touched.
void adam_step(ParamStore& params, const GradMap& grads, const AdamConfig& config);

// Adds src into dst, creating entries as needed.
void accumulate_grads(GradMap& dst, const GradMap& src, double weight = 1.0);

}  // namespace cpd::nn
