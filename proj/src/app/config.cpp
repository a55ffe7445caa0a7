#include "cpd/app/config.hpp"

#include "cpd/error.hpp"
#include "cpd/text.hpp"

#include <fstream>
#include <sstream>

namespace cpd::app {

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"corpus_dir", "corpus", "corpus directory"},
      {"checkpoint_dir", "checkpoints", "directory holding pae.ckpt, spdm.ckpt, tpdm_f.ckpt, tpdm_b.ckpt"},
      {"output_dir", "out", "directory for generated motion, reports and exports"},
      {"seed", "1", "sampling seed for compose, inbetween, longgen and eval"},
      {"streams", "2500", "synthetic streams to generate"},
      {"corpus_seed", "20240501", "corpus generator seed"},
      {"test_modulus", "5", "a stream is held out when its hash is divisible by this"},
      {"min_actions", "2", "fewest actions per stream"},
      {"max_actions", "4", "most actions per stream"},
      {"transition_frames", "12", "cross-fade window between generated actions"},
      {"idle_amplitude", "0.05", "bound on idle joint deviation (rad)"},
      {"fps", "24", "frame rate"},
      {"n_min", "24", "shortest segment (frames)"},
      {"n_max", "96", "longest segment (frames)"},
      {"pae_q", "32", "phase channels Q"},
      {"pae_width", "64", "autoencoder model width"},
      {"pae_heads", "4", "autoencoder attention heads"},
      {"pae_ff", "128", "autoencoder feed-forward width"},
      {"pae_layers", "2", "encoder and decoder depth"},
      {"pae_pe_dim", "16", "positional code width per block"},
      {"pae_emphasis", "15", "root translation emphasis factor"},
      {"pae_epochs", "40", "autoencoder epoch cap"},
      {"pae_max_updates", "2500", "autoencoder update cap"},
      {"pae_batch", "32", "autoencoder batch size"},
      {"pae_lr", "1e-3", "autoencoder learning rate"},
      {"pae_seed", "1", "autoencoder initialization and shuffling seed"},
      {"diff_width", "64", "denoiser model width"},
      {"diff_heads", "4", "denoiser attention heads"},
      {"diff_ff", "128", "denoiser feed-forward width"},
      {"diff_layers", "2", "denoiser depth"},
      {"diff_d_text", "32", "text embedding width"},
      {"diff_n_tok", "48", "frame tokens per latent"},
      {"diff_epochs", "40", "denoiser epoch cap"},
      {"diff_max_updates", "2500", "denoiser update cap (each model)"},
      {"diff_batch", "64", "denoiser batch size"},
      {"diff_lr", "5e-4", "denoiser learning rate"},
      {"diff_null_prompt_rate", "0", "fraction of semantic examples trained with an empty prompt"},
      {"diff_seed", "1", "denoiser initialization and noise seed"},
      {"k_train", "1000", "training diffusion steps"},
      {"k_infer", "100", "inference steps"},
      {"beta_start", "1e-4", "first noise variance"},
      {"beta_end", "2e-2", "last noise variance"},
      {"request", "", "composition request file (longgen; compose when set)"},
      {"p_text", "walk", "compose: first segment tokens"},
      {"s_text", "squat", "compose: second segment tokens"},
      {"p_frames", "48", "compose: first segment length"},
      {"s_frames", "48", "compose: second segment length"},
      {"x_p", "", "inbetween: leading clip (motion file, world root)"},
      {"x_s", "", "inbetween: trailing clip (motion file, world root)"},
      {"gap_frames", "24", "inbetween: generated frames"},
      {"text", "", "inbetween: tokens for the generated region; empty means unconditioned"},
      {"eval_cases", "100", "eval: unconditioned inbetweening gaps"},
      {"eval_gap", "24", "eval: unconditioned gap length"},
      {"cmib_cases", "60", "eval: conditioned inbetweening gaps"},
      {"cmib_gap", "48", "eval: conditioned gap length"},
      {"pair_runs", "50", "eval: pair compositions scored for smoothness"},
      {"export_input", "", "export: motion file to convert"},
  };
  return keys;
}

RunConfig::RunConfig() {
  for (const auto& k : config_keys()) values_[k.name] = k.fallback;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  require(it != values_.end(), ErrorKind::MalformedConfig, "unknown config key '" + key + "'");
  it->second = value;
}

void RunConfig::merge_text(const std::string& text, const std::string& source) {
  for (const auto& [k, v] : parse_key_values(text, source)) {
    require(values_.count(k) > 0, ErrorKind::MalformedConfig, source + ": unknown config key '" + k + "'");
    values_[k] = v;
  }
}

void RunConfig::merge_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  require(static_cast<bool>(f), ErrorKind::MalformedConfig, "cannot read config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  merge_text(ss.str(), path.string());
}

const std::string& RunConfig::text(const std::string& key) const {
  auto it = values_.find(key);
  require(it != values_.end(), ErrorKind::MalformedConfig, "unknown config key '" + key + "'");
  return it->second;
}

long long RunConfig::integer(const std::string& key) const { return parse_int(text(key), key); }
double RunConfig::real(const std::string& key) const { return parse_double(text(key), key); }

std::uint64_t RunConfig::seed(const std::string& key) const {
  const long long v = integer(key);
  require(v >= 0, ErrorKind::MalformedConfig, key + " must be nonnegative");
  return static_cast<std::uint64_t>(v);
}

std::vector<std::string> RunConfig::tokens(const std::string& key) const { return words(text(key)); }

std::string RunConfig::describe() const {
  std::string out;
  for (const auto& k : config_keys()) out += k.name + "=" + values_.at(k.name) + "\n";
  return out;
}

namespace {

int positive(const RunConfig& c, const std::string& key) {
  const long long v = c.integer(key);
  require(v > 0 && v < (1LL << 31), ErrorKind::MalformedConfig, key + " must be a positive integer");
  return static_cast<int>(v);
}

}  // namespace

synth::CorpusConfig RunConfig::corpus() const {
  synth::CorpusConfig c;
  c.streams = positive(*this, "streams");
  c.seed = seed("corpus_seed");
  c.fps = real("fps");
  c.n_min = positive(*this, "n_min");
  c.n_max = positive(*this, "n_max");
  c.min_actions = positive(*this, "min_actions");
  c.max_actions = positive(*this, "max_actions");
  c.transition_frames = positive(*this, "transition_frames");
  c.idle_amplitude = real("idle_amplitude");
  c.test_modulus = positive(*this, "test_modulus");
  require(c.fps > 0.0 && c.n_min <= c.n_max && c.min_actions >= 2 && c.min_actions <= c.max_actions,
          ErrorKind::MalformedConfig, "inconsistent corpus settings");
  return c;
}

phase::PaeConfig RunConfig::pae() const {
  phase::PaeConfig c;
  c.q = positive(*this, "pae_q");
  c.width = positive(*this, "pae_width");
  c.heads = positive(*this, "pae_heads");
  c.ff = positive(*this, "pae_ff");
  c.layers = positive(*this, "pae_layers");
  c.pe_dim = positive(*this, "pae_pe_dim");
  c.n_min = positive(*this, "n_min");
  c.n_max = positive(*this, "n_max");
  c.fps = real("fps");
  c.emphasis = real("pae_emphasis");
  require(c.width % c.heads == 0, ErrorKind::MalformedConfig, "pae_width must be a multiple of pae_heads");
  return c;
}

phase::PaeTrainConfig RunConfig::pae_train() const {
  phase::PaeTrainConfig t;
  t.epochs = positive(*this, "pae_epochs");
  t.max_updates = positive(*this, "pae_max_updates");
  t.batch = positive(*this, "pae_batch");
  t.lr = real("pae_lr");
  t.seed = seed("pae_seed");
  require(t.lr > 0.0, ErrorKind::MalformedConfig, "pae_lr must be positive");
  return t;
}

diffusion::DenoiserConfig RunConfig::denoiser(std::vector<std::string> vocabulary) const {
  diffusion::DenoiserConfig c;
  c.q = positive(*this, "pae_q");
  c.width = positive(*this, "diff_width");
  c.heads = positive(*this, "diff_heads");
  c.ff = positive(*this, "diff_ff");
  c.layers = positive(*this, "diff_layers");
  c.d_text = positive(*this, "diff_d_text");
  c.n_tok = positive(*this, "diff_n_tok");
  c.vocabulary = std::move(vocabulary);
  require(c.width % c.heads == 0, ErrorKind::MalformedConfig, "diff_width must be a multiple of diff_heads");
  return c;
}

diffusion::DenoiserTrainConfig RunConfig::denoiser_train() const {
  diffusion::DenoiserTrainConfig t;
  t.epochs = positive(*this, "diff_epochs");
  t.max_updates = positive(*this, "diff_max_updates");
  t.batch = positive(*this, "diff_batch");
  t.lr = real("diff_lr");
  t.seed = seed("diff_seed");
  t.null_prompt_rate = real("diff_null_prompt_rate");
  require(t.lr > 0.0 && t.null_prompt_rate >= 0.0 && t.null_prompt_rate <= 1.0, ErrorKind::MalformedConfig,
          "invalid denoiser training settings");
  return t;
}

diffusion::DiffusionSchedule RunConfig::schedule() const {
  try {
    return diffusion::make_schedule(positive(*this, "k_train"), positive(*this, "k_infer"), real("beta_start"),
                                    real("beta_end"));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::MalformedConfig) throw;
    fail(ErrorKind::MalformedConfig, std::string("invalid schedule: ") + e.what());
  }
}

}  // namespace cpd::app
