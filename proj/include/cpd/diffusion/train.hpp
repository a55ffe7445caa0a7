#pragma once

#include "cpd/diffusion/denoiser.hpp"
#include "cpd/synth/corpus.hpp"

#include <functional>

namespace cpd::diffusion {

// Normalized latents of one (X_p, X_t, X_s) pair with the texts of its semantic segments.
struct LatentTriple {
  RowVec p, t, s;
  std::vector<std::string> c_p, c_s;
};

std::vector<LatentTriple> encode_pairs(const phase::ActPae& pae, const std::vector<synth::PairSample>& pairs);

// One training example: noise is added to target; cond is the clean neighbor (Tpdm)
// and text the prompt (Spdm).
struct DenoiserSample {
  RowVec target;
  RowVec cond;
  std::vector<std::string> text;
};

// Spdm: (C_p, P_p), (C_s, P_s). Forward: P_t | P_p, P_s | P_t. Backward: P_p | P_t, P_t | P_s.
std::vector<DenoiserSample> denoiser_samples(DenoiserKind kind, const std::vector<LatentTriple>& data);

struct DenoiserTrainConfig {
  int epochs = 40;
  std::int64_t max_updates = 3000;
  int batch = 64;
  double lr = 3e-4;
  std::uint64_t seed = 1;
  // Fraction of Spdm examples whose prompt is replaced by the empty list.
  double null_prompt_rate = 0.0;
};

struct DenoiserLogEntry {
  int epoch = 0;
  std::int64_t updates = 0;
  double loss = 0.0;
};

struct DenoiserTrainResult {
  Denoiser model;
  std::vector<DenoiserLogEntry> log;
};

// l1 between predicted and injected noise, step drawn uniformly from [0, K_train).
DenoiserTrainResult train_denoiser(DenoiserKind kind, const std::vector<LatentTriple>& data,
                                   const DenoiserConfig& config, const DiffusionSchedule& schedule,
                                   const phase::LatentStats& stats, const DenoiserTrainConfig& train,
                                   const std::function<void(const DenoiserLogEntry&)>& on_epoch = {});

struct DenoiserStackResult {
  DenoiserTrainResult spdm, tpdm_f, tpdm_b;
};

// The three denoisers on latents of one trained autoencoder, sharing config and schedule.
DenoiserStackResult train_denoisers(const phase::ActPae& pae, const std::vector<LatentTriple>& data,
                                    const DenoiserConfig& config, const DiffusionSchedule& schedule,
                                    const DenoiserTrainConfig& train,
                                    const std::function<void(DenoiserKind, const DenoiserLogEntry&)>& on_epoch = {});

struct HeldOutL1 {
  double model = 0.0;
  // l1 of predicting zero noise.
  double zero = 0.0;
};

// Seeded noising of every sample of data; identical seeds give identical draws.
HeldOutL1 heldout_l1(const Denoiser& model, const std::vector<LatentTriple>& data, std::uint64_t seed);

}  // namespace cpd::diffusion
