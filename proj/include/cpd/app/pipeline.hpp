#pragma once

#include "cpd/composer/composer.hpp"
#include "cpd/diffusion/train.hpp"
#include "cpd/phase/actpae.hpp"
#include "cpd/synth/corpus.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace cpd::app {

// Checkpoint file names inside a checkpoint directory.
struct CheckpointPaths {
  std::filesystem::path dir;

  std::filesystem::path pae() const { return dir / "pae.ckpt"; }
  std::filesystem::path spdm() const { return dir / "spdm.ckpt"; }
  std::filesystem::path tpdm_f() const { return dir / "tpdm_f.ckpt"; }
  std::filesystem::path tpdm_b() const { return dir / "tpdm_b.ckpt"; }
};

// X_p and X_s at their centers and X_t at its boundary, for every pair of one split.
std::vector<phase::PaeSample> pae_samples(const synth::Corpus& corpus, bool test);
std::vector<synth::PairSample> pair_samples(const synth::Corpus& corpus, bool test);

// Owns a loaded model stack.
struct ModelStack {
  phase::ActPae pae;
  diffusion::Denoiser spdm, tpdm_f, tpdm_b;

  composer::Stack view() const { return {&pae, &spdm, &tpdm_f, &tpdm_b}; }
};

// Raises MissingCheckpoint for absent files and DigestMismatch for inconsistent ones.
ModelStack load_stack(const CheckpointPaths& paths);

// "epoch updates loss" lines, one per entry.
std::string format_loss_log(const std::vector<phase::PaeLogEntry>& log);
std::string format_loss_log(const std::vector<diffusion::DenoiserLogEntry>& log);

void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace cpd::app
