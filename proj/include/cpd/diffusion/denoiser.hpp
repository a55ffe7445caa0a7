#pragma once

#include "cpd/diffusion/schedule.hpp"
#include "cpd/nn/checkpoint.hpp"
#include "cpd/nn/layers.hpp"
#include "cpd/phase/actpae.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace cpd::diffusion {

// Spdm is the text-conditioned self-attention model; the two Tpdm variants attend to
// the clean latent of the previous (forward) or next (backward) segment.
enum class DenoiserKind { Spdm, TpdmForward, TpdmBackward };

const char* kind_name(DenoiserKind kind);
DenoiserKind parse_kind(const std::string& name);

struct DenoiserConfig {
  int q = 32;
  int width = 64;
  int heads = 4;
  int ff = 128;
  int layers = 2;
  int d_text = 32;
  // Frame tokens sample the periodic signal on this many frames, anchored at the center.
  int n_tok = 48;
  std::vector<std::string> vocabulary;

  nn::BlockShape block() const { return {width, heads, ff}; }
  std::string describe() const;
  static DenoiserConfig parse(const std::string& described);
};

// Maps action-token lists to mean-pooled rows of a learned table.
class TextEncoder {
 public:
  explicit TextEncoder(std::vector<std::string> vocabulary) : vocabulary_(std::move(vocabulary)) {}
  int index(const std::string& token) const;
  // B x V pooling weights: row b averages the table rows of texts[b]; an empty list is a zero row.
  Mat pooling(const std::vector<std::vector<std::string>>& texts) const;
  const std::vector<std::string>& vocabulary() const { return vocabulary_; }

 private:
  std::vector<std::string> vocabulary_;
};

// epsilon-model over normalized 4Q latents.
//   Spdm tokens:  [step, text, F, A, B, S, frame_0 .. frame_{n_tok-1}], self-attention.
//   Tpdm tokens:  [step, F, A, B, S, frames...] attending to [F, A, B, S, frames...] of the neighbor.
// Frame tokens are rows of the periodic signal of an unnormalized clean-latent estimate:
// sqrt(abar_k) * Pk for the noisy input, the neighbor latent itself for Tpdm memory.
class Denoiser {
 public:
  Denoiser(DenoiserKind kind, DenoiserConfig config, DiffusionSchedule schedule, phase::LatentStats stats,
           std::uint64_t seed = 0);

  DenoiserKind kind() const { return kind_; }
  const DenoiserConfig& config() const { return config_; }
  const DiffusionSchedule& schedule() const { return schedule_; }
  const phase::LatentStats& stats() const { return stats_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }
  bool trained() const { return trained_; }
  void mark_trained() { trained_ = true; }
  int latent_size() const { return 4 * config_.q; }
  bool is_tpdm() const { return kind_ != DenoiserKind::Spdm; }

  // Tape-level model. pk and cond are B x 4Q nodes; text_pool is the B x V pooling
  // matrix (Spdm only); cond is ignored by Spdm. Returns B x 4Q predicted noise.
  nn::Var eps_graph(nn::Tape& tape, nn::Var pk, const std::vector<int>& steps, const Mat* text_pool,
                    const nn::Var* cond) const;

  // Batched inference. texts is used by Spdm, cond (B x 4Q) by Tpdm.
  Mat eps_batch(const Mat& pk, const std::vector<int>& steps, const std::vector<std::vector<std::string>>& texts,
                const Mat& cond) const;

  RowVec spdm_denoise(int k, const std::vector<std::string>& text, const RowVec& pk) const;
  RowVec tpdm_denoise(int k, const RowVec& pk, const RowVec& neighbor_p0) const;
  RowVec text_encode(const std::vector<std::string>& tokens) const;

  nn::Checkpoint to_checkpoint() const;
  static Denoiser from_checkpoint(const nn::Checkpoint& ck);
  void save(const std::filesystem::path& path) const;
  static Denoiser load(const std::filesystem::path& path);

  // Raises DigestMismatch unless schedule, latent statistics and vocabulary agree.
  void verify_compatible(const Denoiser& other) const;
  void verify_compatible(const phase::ActPae& pae) const;

 private:
  nn::Var frame_tokens(nn::Tape& tape, nn::Var latents_raw, const std::string& prefix) const;
  nn::Var param_tokens(nn::Tape& tape, nn::Var latents, const std::string& prefix) const;

  DenoiserKind kind_;
  DenoiserConfig config_;
  DiffusionSchedule schedule_;
  phase::LatentStats stats_;
  TextEncoder text_;
  nn::ParamStore params_;
  bool trained_ = false;
  // Frame time window and positional rows, fixed by the config.
  Mat window_;
  Mat frame_pe_;
};

}  // namespace cpd::diffusion
