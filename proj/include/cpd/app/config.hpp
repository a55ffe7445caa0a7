#pragma once

#include "cpd/diffusion/denoiser.hpp"
#include "cpd/diffusion/train.hpp"
#include "cpd/phase/actpae.hpp"
#include "cpd/synth/corpus.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace cpd::app {

struct ConfigKey {
  std::string name;
  std::string fallback;
  std::string help;
};

// Every key any command understands, in documentation order.
const std::vector<ConfigKey>& config_keys();

// Resolved key=value settings. Unknown keys are rejected at every entry point.
class RunConfig {
 public:
  RunConfig();

  // key=value text; later sources override earlier ones.
  void merge_text(const std::string& text, const std::string& source);
  void merge_file(const std::filesystem::path& path);
  void set(const std::string& key, const std::string& value);

  const std::string& text(const std::string& key) const;
  long long integer(const std::string& key) const;
  double real(const std::string& key) const;
  std::uint64_t seed(const std::string& key) const;
  // Whitespace-separated tokens of a text value.
  std::vector<std::string> tokens(const std::string& key) const;

  // Every key in documentation order, one key=value line each.
  std::string describe() const;

  synth::CorpusConfig corpus() const;
  phase::PaeConfig pae() const;
  phase::PaeTrainConfig pae_train() const;
  diffusion::DenoiserConfig denoiser(std::vector<std::string> vocabulary) const;
  diffusion::DenoiserTrainConfig denoiser_train() const;
  diffusion::DiffusionSchedule schedule() const;

  std::filesystem::path corpus_dir() const { return text("corpus_dir"); }
  std::filesystem::path checkpoint_dir() const { return text("checkpoint_dir"); }
  std::filesystem::path output_dir() const { return text("output_dir"); }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace cpd::app
