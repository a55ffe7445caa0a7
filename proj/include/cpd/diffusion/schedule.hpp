#pragma once

#include "cpd/nn/tensor.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cpd::diffusion {

using nn::Mat;
using nn::RowVec;

// Linear beta ramp over k_train steps. Step index -1 denotes the clean state
// (alpha_bar = 1).
struct DiffusionSchedule {
  int k_train = 1000;
  int k_infer = 100;
  double beta_start = 1e-4;
  double beta_end = 2e-2;
  std::vector<double> betas;
  std::vector<double> alpha_bar;
  // Descending inference timesteps, k_infer entries in [0, k_train).
  std::vector<int> timesteps;

  double alpha_bar_at(int k) const;
  // Timestep that follows timesteps[i] during sampling; -1 after the last one.
  int previous(int i) const { return i + 1 < static_cast<int>(timesteps.size()) ? timesteps[i + 1] : -1; }

  std::string describe() const;
  std::uint64_t digest() const;
  static DiffusionSchedule parse(const std::string& described);
};

DiffusionSchedule make_schedule(int k_train = 1000, int k_infer = 100, double beta_start = 1e-4,
                                double beta_end = 2e-2);

// Pk = sqrt(abar_k) P0 + sqrt(1 - abar_k) eps.
RowVec add_noise(const RowVec& p0, const RowVec& eps, int k, const DiffusionSchedule& s);
RowVec eps_to_x0(const RowVec& pk, const RowVec& eps_hat, int k, const DiffusionSchedule& s);

struct DdimStep {
  RowVec prev;
  RowVec x0;
};

// Deterministic DDIM update from step k to k_prev < k.
DdimStep ddim_step(const RowVec& pk, const RowVec& eps_hat, int k, int k_prev, const DiffusionSchedule& s);

// (k_index / k_infer)^3 for conditioned segments, 1 otherwise.
double mixing_weight(int k_index, int k_infer, bool conditioned);

// r * mean(directional) + (1 - r) * semantic. Without a semantic input r is taken as 1;
// a single directional input stands in for the mean.
RowVec phase_mix(const std::optional<RowVec>& eps_f, const std::optional<RowVec>& eps_b,
                 const std::optional<RowVec>& eps_c, double r);

}  // namespace cpd::diffusion
