#include "cpd/diffusion/denoiser.hpp"

#include "cpd/error.hpp"
#include "cpd/nn/positional.hpp"
#include "cpd/text.hpp"

#include <algorithm>
#include <cmath>

namespace cpd::diffusion {

using nn::Tape;
using nn::Var;
namespace ops = nn::ops;

const char* kind_name(DenoiserKind kind) {
  switch (kind) {
    case DenoiserKind::Spdm: return "spdm";
    case DenoiserKind::TpdmForward: return "tpdm_f";
    case DenoiserKind::TpdmBackward: return "tpdm_b";
  }
  return "?";
}

DenoiserKind parse_kind(const std::string& name) {
  for (DenoiserKind k : {DenoiserKind::Spdm, DenoiserKind::TpdmForward, DenoiserKind::TpdmBackward})
    if (name == kind_name(k)) return k;
  fail(ErrorKind::MalformedFile, "unknown denoiser kind '" + name + "'");
}

std::string DenoiserConfig::describe() const {
  std::string s;
  s += "q=" + std::to_string(q) + "\n";
  s += "width=" + std::to_string(width) + "\n";
  s += "heads=" + std::to_string(heads) + "\n";
  s += "ff=" + std::to_string(ff) + "\n";
  s += "layers=" + std::to_string(layers) + "\n";
  s += "d_text=" + std::to_string(d_text) + "\n";
  s += "n_tok=" + std::to_string(n_tok) + "\n";
  s += "vocabulary=" + join(vocabulary, " ") + "\n";
  return s;
}

DenoiserConfig DenoiserConfig::parse(const std::string& described) {
  const auto kv = parse_key_values(described, "denoiser config");
  auto get = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    require(it != kv.end(), ErrorKind::MalformedFile, std::string("denoiser config lacks '") + key + "'");
    return it->second;
  };
  DenoiserConfig c;
  c.q = static_cast<int>(parse_int(get("q"), "q"));
  c.width = static_cast<int>(parse_int(get("width"), "width"));
  c.heads = static_cast<int>(parse_int(get("heads"), "heads"));
  c.ff = static_cast<int>(parse_int(get("ff"), "ff"));
  c.layers = static_cast<int>(parse_int(get("layers"), "layers"));
  c.d_text = static_cast<int>(parse_int(get("d_text"), "d_text"));
  c.n_tok = static_cast<int>(parse_int(get("n_tok"), "n_tok"));
  c.vocabulary = words(get("vocabulary"));
  return c;
}

int TextEncoder::index(const std::string& token) const {
  auto it = std::find(vocabulary_.begin(), vocabulary_.end(), token);
  require(it != vocabulary_.end(), ErrorKind::InvalidArgument, "unknown text token '" + token + "'");
  return static_cast<int>(it - vocabulary_.begin());
}

Mat TextEncoder::pooling(const std::vector<std::vector<std::string>>& texts) const {
  Mat w = Mat::Zero(static_cast<Eigen::Index>(texts.size()), static_cast<Eigen::Index>(vocabulary_.size()));
  for (std::size_t b = 0; b < texts.size(); ++b)
    for (const auto& tok : texts[b]) w(static_cast<Eigen::Index>(b), index(tok)) += 1.0 / texts[b].size();
  return w;
}

Denoiser::Denoiser(DenoiserKind kind, DenoiserConfig config, DiffusionSchedule schedule, phase::LatentStats stats,
                   std::uint64_t seed)
    : kind_(kind),
      config_(std::move(config)),
      schedule_(std::move(schedule)),
      stats_(std::move(stats)),
      text_(config_.vocabulary) {
  const auto& c = config_;
  require(c.q > 0 && c.q % 2 == 0 && c.n_tok >= 2 && c.width % 2 == 0, ErrorKind::InvalidArgument,
          "invalid denoiser dimensions");
  require(!stats_.empty() && stats_.mean.size() == 4 * c.q, ErrorKind::Untrained,
          "denoiser needs latent statistics of the phase autoencoder");
  require(kind_ != DenoiserKind::Spdm || !c.vocabulary.empty(), ErrorKind::InvalidArgument,
          "semantic denoiser needs a vocabulary");
  window_ = phase::build_time_window(c.n_tok, c.q, phase::TimeMode::MixT, phase::center_anchor(c.n_tok)).T;
  frame_pe_ = nn::sinusoidal_pe(c.n_tok, c.width);

  nn::Rng rng(seed);
  const int w = c.width;
  init_linear(params_, "step.0", w, w, rng);
  init_linear(params_, "step.1", w, w, rng);
  if (kind_ == DenoiserKind::Spdm) {
    init_embedding(params_, "text.embed", static_cast<int>(c.vocabulary.size()), c.d_text, rng);
    init_linear(params_, "text.proj", c.d_text, w, rng);
  }
  for (const char* p : {"in", "mem"}) {
    if (std::string(p) == "mem" && !is_tpdm()) continue;
    init_linear(params_, std::string(p) + ".param", c.q, w, rng);
    init_embedding(params_, std::string(p) + ".type", 4, w, rng);
    init_linear(params_, std::string(p) + ".frame", c.q, w, rng);
  }
  for (int l = 0; l < c.layers; ++l) {
    const std::string name = "block" + std::to_string(l);
    if (is_tpdm())
      init_cross_block(params_, name, c.block(), rng);
    else
      init_encoder_block(params_, name, c.block(), rng);
  }
  init_layer_norm(params_, "ln", w);
  init_linear(params_, "out", w, c.q, rng);
}

Var Denoiser::param_tokens(Tape& tape, Var latents, const std::string& prefix) const {
  const int batch = static_cast<int>(latents.rows());
  std::vector<int> type_rows;
  for (int b = 0; b < batch; ++b)
    for (int j = 0; j < 4; ++j) type_rows.push_back(j);
  Var rows = ops::reshape(latents, 4 * batch, config_.q);
  return ops::add(linear(tape, params_, prefix + ".param", rows),
                  ops::gather_rows(tape.param(params_, prefix + ".type"), type_rows));
}

Var Denoiser::frame_tokens(Tape& tape, Var latents_raw, const std::string& prefix) const {
  const int batch = static_cast<int>(latents_raw.rows());
  std::vector<Var> parts;
  for (int b = 0; b < batch; ++b)
    parts.push_back(ops::periodic_signal(ops::reshape(ops::slice_rows(latents_raw, b, 1), 4, config_.q), window_));
  Mat pe(static_cast<Eigen::Index>(batch) * config_.n_tok, config_.width);
  for (int b = 0; b < batch; ++b) pe.middleRows(static_cast<Eigen::Index>(b) * config_.n_tok, config_.n_tok) = frame_pe_;
  return ops::add(linear(tape, params_, prefix + ".frame", ops::concat_rows(parts)), tape.constant(std::move(pe)));
}

Var Denoiser::eps_graph(Tape& tape, Var pk, const std::vector<int>& steps, const Mat* text_pool,
                        const Var* cond) const {
  const auto& c = config_;
  const int batch = static_cast<int>(pk.rows());
  require(batch > 0 && pk.cols() == latent_size(), ErrorKind::ShapeMismatch,
          "denoiser input must be B x " + std::to_string(latent_size()));
  require(static_cast<int>(steps.size()) == batch, ErrorKind::ShapeMismatch, "one diffusion step per latent required");

  Mat step_in(batch, c.width);
  Mat root_ab(batch, latent_size());
  for (int b = 0; b < batch; ++b) {
    step_in.row(b) = nn::sinusoidal_row(steps[b], c.width);
    root_ab.row(b).setConstant(std::sqrt(schedule_.alpha_bar_at(steps[b])));
  }
  Var step_tok = linear(tape, params_, "step.1", ops::gelu(linear(tape, params_, "step.0", tape.constant(step_in))));
  Var mean = tape.constant(stats_.mean);
  Var sd = tape.constant(stats_.std);
  auto raw = [&](Var normalized) { return ops::add_row(ops::mul_row(normalized, sd), mean); };

  Var params_in = param_tokens(tape, pk, "in");
  Var frames_in = frame_tokens(tape, raw(ops::mul(pk, tape.constant(root_ab))), "in");
  Var text_tok;
  if (!is_tpdm()) {
    require(text_pool && text_pool->rows() == batch, ErrorKind::ShapeMismatch, "one text per latent required");
    text_tok = linear(tape, params_, "text.proj", ops::matmul(tape.constant(*text_pool), tape.param(params_, "text.embed")));
  }

  const int lead = is_tpdm() ? 1 : 2;
  const int tokens = lead + 4 + c.n_tok;
  std::vector<Var> seq;
  for (int b = 0; b < batch; ++b) {
    seq.push_back(ops::slice_rows(step_tok, b, 1));
    if (!is_tpdm()) seq.push_back(ops::slice_rows(text_tok, b, 1));
    seq.push_back(ops::slice_rows(params_in, 4 * b, 4));
    seq.push_back(ops::slice_rows(frames_in, static_cast<Eigen::Index>(b) * c.n_tok, c.n_tok));
  }
  Var h = ops::concat_rows(seq);

  if (is_tpdm()) {
    require(cond && cond->rows() == batch && cond->cols() == latent_size(), ErrorKind::ShapeMismatch,
            "neighbor latents must be B x " + std::to_string(latent_size()));
    Var params_mem = param_tokens(tape, *cond, "mem");
    Var frames_mem = frame_tokens(tape, raw(*cond), "mem");
    std::vector<Var> mem;
    for (int b = 0; b < batch; ++b) {
      mem.push_back(ops::slice_rows(params_mem, 4 * b, 4));
      mem.push_back(ops::slice_rows(frames_mem, static_cast<Eigen::Index>(b) * c.n_tok, c.n_tok));
    }
    Var memory = ops::concat_rows(mem);
    for (int l = 0; l < c.layers; ++l)
      h = cross_block(tape, params_, "block" + std::to_string(l), h, memory, c.block(), batch);
  } else {
    for (int l = 0; l < c.layers; ++l)
      h = encoder_block(tape, params_, "block" + std::to_string(l), h, c.block(), batch);
  }
  h = layer_norm(tape, params_, "ln", h);
  std::vector<int> rows;
  for (int b = 0; b < batch; ++b)
    for (int j = 0; j < 4; ++j) rows.push_back(b * tokens + lead + j);
  Var eps = linear(tape, params_, "out", ops::gather_rows(h, rows));
  return ops::reshape(eps, batch, latent_size());
}

Mat Denoiser::eps_batch(const Mat& pk, const std::vector<int>& steps,
                        const std::vector<std::vector<std::string>>& texts, const Mat& cond) const {
  require(trained_, ErrorKind::Untrained, std::string(kind_name(kind_)) + " denoiser is untrained");
  Tape tape(false);
  Var x = tape.constant(pk);
  Mat pool;
  if (!is_tpdm()) pool = text_.pooling(texts);
  Var c;
  if (is_tpdm()) c = tape.constant(cond);
  Var out = eps_graph(tape, x, steps, is_tpdm() ? nullptr : &pool, is_tpdm() ? &c : nullptr);
  require(out.value().allFinite(), ErrorKind::NumericalFailure, "denoiser produced non-finite noise estimates");
  return out.value();
}

RowVec Denoiser::spdm_denoise(int k, const std::vector<std::string>& text, const RowVec& pk) const {
  require(!is_tpdm(), ErrorKind::InvalidArgument, "spdm_denoise called on a transitional denoiser");
  require(pk.size() == latent_size(), ErrorKind::ShapeMismatch, "latent has the wrong size");
  return eps_batch(pk, {k}, {text}, Mat());
}

RowVec Denoiser::tpdm_denoise(int k, const RowVec& pk, const RowVec& neighbor_p0) const {
  require(is_tpdm(), ErrorKind::InvalidArgument, "tpdm_denoise called on the semantic denoiser");
  require(pk.size() == latent_size() && neighbor_p0.size() == latent_size(), ErrorKind::ShapeMismatch,
          "latent has the wrong size");
  return eps_batch(pk, {k}, {}, neighbor_p0);
}

RowVec Denoiser::text_encode(const std::vector<std::string>& tokens) const {
  require(!is_tpdm(), ErrorKind::InvalidArgument, "transitional denoisers carry no text encoder");
  return text_.pooling({tokens}) * params_.at("text.embed").matrix();
}

namespace {

std::uint64_t stack_digest(DenoiserKind kind, const DenoiserConfig& c, const DiffusionSchedule& s) {
  return nn::fnv1a64(std::string("kind=") + kind_name(kind) + "\n" + c.describe() + s.describe());
}

}  // namespace

nn::Checkpoint Denoiser::to_checkpoint() const {
  nn::Checkpoint ck;
  ck.config_digest = stack_digest(kind_, config_, schedule_);
  ck.metadata["kind"] = kind_name(kind_);
  ck.metadata["config"] = config_.describe();
  ck.metadata["schedule"] = schedule_.describe();
  ck.metadata["schedule_digest"] = nn::hex64(schedule_.digest());
  ck.metadata["stats_digest"] = nn::hex64(stats_.digest());
  ck.metadata["trained"] = trained_ ? "1" : "0";
  ck.metadata["adam_step"] = std::to_string(params_.step());
  ck.params = nn::params_of(params_);
  ck.stats["latent.mean"] = nn::Tensor::from_matrix(stats_.mean, true);
  ck.stats["latent.std"] = nn::Tensor::from_matrix(stats_.std, true);
  return ck;
}

Denoiser Denoiser::from_checkpoint(const nn::Checkpoint& ck) {
  auto meta = [&](const char* key) -> const std::string& {
    auto it = ck.metadata.find(key);
    require(it != ck.metadata.end(), ErrorKind::MalformedFile, std::string("denoiser checkpoint lacks '") + key + "'");
    return it->second;
  };
  const DenoiserKind kind = parse_kind(meta("kind"));
  const DenoiserConfig config = DenoiserConfig::parse(meta("config"));
  const DiffusionSchedule schedule = DiffusionSchedule::parse(meta("schedule"));
  require(stack_digest(kind, config, schedule) == ck.config_digest, ErrorKind::DigestMismatch,
          "denoiser checkpoint config digest mismatch");
  require(nn::hex64(schedule.digest()) == meta("schedule_digest"), ErrorKind::DigestMismatch,
          "denoiser checkpoint schedule digest mismatch");
  auto mean = ck.stats.find("latent.mean");
  auto sd = ck.stats.find("latent.std");
  require(mean != ck.stats.end() && sd != ck.stats.end(), ErrorKind::MalformedFile,
          "denoiser checkpoint lacks latent statistics");
  phase::LatentStats stats{mean->second.matrix(), sd->second.matrix()};
  require(stats.mean.size() == 4 * config.q && stats.std.size() == 4 * config.q, ErrorKind::MalformedFile,
          "denoiser latent statistics have the wrong size");
  require(nn::hex64(stats.digest()) == meta("stats_digest"), ErrorKind::DigestMismatch,
          "denoiser checkpoint latent statistics digest mismatch");
  Denoiser model(kind, config, schedule, std::move(stats), 0);
  for (const auto& [name, t] : model.params_.params()) {
    auto it = ck.params.find(name);
    require(it != ck.params.end(), ErrorKind::MalformedFile, "denoiser checkpoint lacks parameter " + name);
    require(it->second.shape() == t.shape(), ErrorKind::ShapeMismatch,
            "denoiser parameter " + name + " has shape " + nn::shape_string(it->second.shape()));
  }
  require(ck.params.size() == model.params_.params().size(), ErrorKind::MalformedFile,
          "denoiser checkpoint has unexpected parameters");
  model.params_ = nn::store_of(ck.params);
  model.params_.set_step(parse_int(meta("adam_step"), "adam_step"));
  model.trained_ = meta("trained") == "1";
  return model;
}

void Denoiser::save(const std::filesystem::path& path) const { nn::save_checkpoint(path, to_checkpoint()); }

Denoiser Denoiser::load(const std::filesystem::path& path) { return from_checkpoint(nn::load_checkpoint(path)); }

void Denoiser::verify_compatible(const Denoiser& other) const {
  require(schedule_.digest() == other.schedule_.digest(), ErrorKind::DigestMismatch,
          std::string(kind_name(kind_)) + " and " + kind_name(other.kind_) + " use different schedules");
  require(stats_.digest() == other.stats_.digest(), ErrorKind::DigestMismatch,
          std::string(kind_name(kind_)) + " and " + kind_name(other.kind_) + " use different latent statistics");
  require(config_.q == other.config_.q, ErrorKind::DigestMismatch, "denoisers disagree on the latent size");
  require(config_.vocabulary == other.config_.vocabulary, ErrorKind::DigestMismatch,
          "denoisers disagree on the vocabulary");
}

void Denoiser::verify_compatible(const phase::ActPae& pae) const {
  require(!pae.stats().empty() && pae.stats().digest() == stats_.digest(), ErrorKind::DigestMismatch,
          std::string(kind_name(kind_)) + " was trained on other phase autoencoder statistics");
  require(pae.config().q == config_.q, ErrorKind::DigestMismatch, "denoiser and autoencoder disagree on Q");
}

}  // namespace cpd::diffusion
