#include "cpd/phase/actpae.hpp"

#include "cpd/error.hpp"
#include "cpd/nn/adam.hpp"
#include "cpd/text.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

namespace cpd::phase {

using nn::Tape;
using nn::Var;
namespace ops = nn::ops;

std::string PaeConfig::describe() const {
  std::string s;
  s += "layout=" + layout.to_string() + "\n";
  s += "q=" + std::to_string(q) + "\n";
  s += "width=" + std::to_string(width) + "\n";
  s += "heads=" + std::to_string(heads) + "\n";
  s += "ff=" + std::to_string(ff) + "\n";
  s += "layers=" + std::to_string(layers) + "\n";
  s += "pe_dim=" + std::to_string(pe_dim) + "\n";
  s += "n_min=" + std::to_string(n_min) + "\n";
  s += "n_max=" + std::to_string(n_max) + "\n";
  s += "fps=" + format_double(fps) + "\n";
  s += "emphasis=" + format_double(emphasis) + "\n";
  return s;
}

std::uint64_t PaeConfig::digest() const { return nn::fnv1a64(describe()); }

PaeConfig PaeConfig::parse(const std::string& described) {
  const auto kv = parse_key_values(described, "pae config");
  auto get = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    require(it != kv.end(), ErrorKind::MalformedFile, std::string("pae config lacks '") + key + "'");
    return it->second;
  };
  PaeConfig c;
  c.layout = ChannelLayout::parse(get("layout"));
  c.q = static_cast<int>(parse_int(get("q"), "q"));
  c.width = static_cast<int>(parse_int(get("width"), "width"));
  c.heads = static_cast<int>(parse_int(get("heads"), "heads"));
  c.ff = static_cast<int>(parse_int(get("ff"), "ff"));
  c.layers = static_cast<int>(parse_int(get("layers"), "layers"));
  c.pe_dim = static_cast<int>(parse_int(get("pe_dim"), "pe_dim"));
  c.n_min = static_cast<int>(parse_int(get("n_min"), "n_min"));
  c.n_max = static_cast<int>(parse_int(get("n_max"), "n_max"));
  c.fps = parse_double(get("fps"), "fps");
  c.emphasis = parse_double(get("emphasis"), "emphasis");
  return c;
}

PhaseParams LatentStats::normalize(const PhaseParams& p) const {
  require(!empty(), ErrorKind::Untrained, "latent statistics are missing");
  require(!p.normalized, ErrorKind::InvalidArgument, "phase params are already normalized");
  RowVec f = p.flat();
  require(f.size() == mean.size(), ErrorKind::ShapeMismatch, "latent size does not match statistics");
  return PhaseParams::from_flat(((f - mean).array() / std.array()).matrix(), true);
}

PhaseParams LatentStats::denormalize(const PhaseParams& p) const {
  require(!empty(), ErrorKind::Untrained, "latent statistics are missing");
  require(p.normalized, ErrorKind::InvalidArgument, "phase params are not normalized");
  RowVec f = p.flat();
  require(f.size() == mean.size(), ErrorKind::ShapeMismatch, "latent size does not match statistics");
  return PhaseParams::from_flat((f.array() * std.array()).matrix() + mean, false);
}

std::uint64_t LatentStats::digest() const {
  std::map<std::string, nn::Tensor> t;
  t["latent.mean"] = nn::Tensor::from_matrix(mean, true);
  t["latent.std"] = nn::Tensor::from_matrix(std, true);
  return nn::digest_tensors(t);
}

ActPae::ActPae(PaeConfig config, std::uint64_t seed) : config_(std::move(config)) {
  const auto& c = config_;
  require(c.q > 0 && c.q % 2 == 0, ErrorKind::InvalidArgument, "Q must be positive and even");
  require(c.pe_dim > 0 && c.pe_dim % 2 == 0, ErrorKind::InvalidArgument, "pe_dim must be positive and even");
  require(c.n_min >= 2 && c.n_min <= c.n_max, ErrorKind::InvalidArgument, "invalid length range");
  nn::Rng rng(seed);
  const int e = c.channels();
  const int w = c.width;
  init_linear(params_, "enc.in", e, w, rng);
  init_linear(params_, "enc.pe", 3 * c.pe_dim, w, rng);
  init_embedding(params_, "enc.query", 4, w, rng);
  for (int l = 0; l < c.layers; ++l) init_encoder_block(params_, "enc.block" + std::to_string(l), c.block(), rng);
  init_layer_norm(params_, "enc.ln", w);
  init_linear(params_, "enc.out", w, c.q, rng);

  init_linear(params_, "dec.in", c.q, w, rng);
  init_linear(params_, "dec.pe", 3 * c.pe_dim, w, rng);
  for (int l = 0; l < c.layers; ++l) init_encoder_block(params_, "dec.block" + std::to_string(l), c.block(), rng);
  init_layer_norm(params_, "dec.ln", w);
  init_linear(params_, "dec.out", w, e, rng);
}

void ActPae::check_length(int n) const {
  require(n >= config_.n_min && n <= config_.n_max, ErrorKind::InvalidArgument,
          "segment length " + std::to_string(n) + " outside [" + std::to_string(config_.n_min) + ", " +
              std::to_string(config_.n_max) + "]");
}

Mat ActPae::prepare(const MotionSegment& m) const {
  require(m.channels() == config_.channels(), ErrorKind::ShapeMismatch,
          "motion has " + std::to_string(m.channels()) + " channels, model expects " +
              std::to_string(config_.channels()));
  require(m.layout == config_.layout, ErrorKind::ShapeMismatch, "motion channel layout differs from the model's");
  if (m.root == RootEncoding::World) return emphasize(to_features(m), config_.emphasis);
  m.validate();
  return emphasize(m, config_.emphasis);
}


namespace {

int max_length(const std::vector<int>& lengths) { return *std::max_element(lengths.begin(), lengths.end()); }

// Stacks per-sample matrices into (B * n_max) rows, zero padding the tail of each block.
Mat pad_stack(const std::vector<Mat>& parts, int n_max, Eigen::Index cols) {
  Mat out = Mat::Zero(static_cast<Eigen::Index>(parts.size()) * n_max, cols);
  for (std::size_t b = 0; b < parts.size(); ++b)
    out.block(static_cast<Eigen::Index>(b) * n_max, 0, parts[b].rows(), cols) = parts[b];
  return out;
}

}  // namespace

std::vector<Var> ActPae::encode_graph(Tape& tape, const std::vector<const Mat*>& inputs,
                                      const std::vector<int>& anchors) const {
  const auto& c = config_;
  const int batch = static_cast<int>(inputs.size());
  require(batch > 0 && anchors.size() == inputs.size(), ErrorKind::InvalidArgument,
          "encode: one anchor per input required");
  std::vector<int> lengths(batch);
  std::vector<Mat> xs(batch), pes(batch);
  for (int b = 0; b < batch; ++b) {
    lengths[b] = static_cast<int>(inputs[b]->rows());
    require(inputs[b]->cols() == c.channels(), ErrorKind::ShapeMismatch, "encode: wrong channel count");
    check_length(lengths[b]);
    xs[b] = *inputs[b];
    pes[b] = comp_pe(lengths[b], c.pe_dim, anchors[b]);
  }
  const int n_max = max_length(lengths);
  Var x = tape.constant(pad_stack(xs, n_max, c.channels()));
  Var pe = tape.constant(pad_stack(pes, n_max, 3 * c.pe_dim));
  Var frames = ops::add(linear(tape, params_, "enc.in", x), linear(tape, params_, "enc.pe", pe));
  Var query = tape.param(params_, "enc.query");

  std::vector<Var> parts;
  std::vector<int> key_lengths(batch);
  for (int b = 0; b < batch; ++b) {
    parts.push_back(query);
    parts.push_back(ops::slice_rows(frames, static_cast<Eigen::Index>(b) * n_max, n_max));
    key_lengths[b] = 4 + lengths[b];
  }
  Var h = ops::concat_rows(parts);
  for (int l = 0; l < c.layers; ++l)
    h = encoder_block(tape, params_, "enc.block" + std::to_string(l), h, c.block(), batch, &key_lengths);
  h = layer_norm(tape, params_, "enc.ln", h);

  std::vector<int> rows;
  for (int b = 0; b < batch; ++b)
    for (int j = 0; j < 4; ++j) rows.push_back(b * (4 + n_max) + j);
  Var readout = linear(tape, params_, "enc.out", ops::gather_rows(h, rows));
  std::vector<Var> out;
  for (int b = 0; b < batch; ++b) out.push_back(ops::slice_rows(readout, 4 * b, 4));
  return out;
}

Var ActPae::decode_graph(Tape& tape, const std::vector<Var>& params, const std::vector<int>& lengths,
                         const std::vector<int>& anchors) const {
  const auto& c = config_;
  const int batch = static_cast<int>(params.size());
  require(batch > 0 && lengths.size() == params.size() && anchors.size() == params.size(),
          ErrorKind::InvalidArgument, "decode: one length and anchor per latent required");
  for (int n : lengths) check_length(n);
  const int n_max = max_length(lengths);

  std::vector<Var> parts;
  std::vector<Mat> pes(batch);
  for (int b = 0; b < batch; ++b) {
    const TimeWindow w = build_time_window(lengths[b], c.q, TimeMode::MixT, anchors[b]);
    parts.push_back(ops::periodic_signal(params[b], w.T));
    if (lengths[b] < n_max) parts.push_back(tape.constant(Mat::Zero(n_max - lengths[b], c.q)));
    pes[b] = comp_pe(lengths[b], c.pe_dim, anchors[b]);
  }
  Var signal = ops::concat_rows(parts);
  Var pe = tape.constant(pad_stack(pes, n_max, 3 * c.pe_dim));
  Var h = ops::add(linear(tape, params_, "dec.in", signal), linear(tape, params_, "dec.pe", pe));
  for (int l = 0; l < c.layers; ++l)
    h = encoder_block(tape, params_, "dec.block" + std::to_string(l), h, c.block(), batch, &lengths);
  h = layer_norm(tape, params_, "dec.ln", h);
  return linear(tape, params_, "dec.out", h);
}

PhaseParams ActPae::encode(const MotionSegment& m, int anchor) const {
  return encode_batch({m}, {anchor}).front();
}

namespace {

// Sample order sorted by length so that chunks pad little.
std::vector<std::size_t> length_order(const std::vector<int>& lengths) {
  std::vector<std::size_t> order(lengths.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return lengths[a] < lengths[b]; });
  return order;
}

constexpr std::size_t kChunk = 64;

}  // namespace

std::vector<PhaseParams> ActPae::encode_batch(const std::vector<MotionSegment>& segments,
                                              const std::vector<int>& anchors) const {
  require(trained_, ErrorKind::Untrained, "ACT-PAE model is untrained");
  require(segments.size() == anchors.size(), ErrorKind::InvalidArgument, "encode: one anchor per segment required");
  std::vector<int> lengths;
  for (const auto& s : segments) lengths.push_back(s.length());
  const auto order = length_order(lengths);
  std::vector<PhaseParams> out(segments.size());
  for (std::size_t start = 0; start < order.size(); start += kChunk) {
    const std::size_t end = std::min(order.size(), start + kChunk);
    std::vector<Mat> xs;
    std::vector<const Mat*> ptrs;
    std::vector<int> an;
    for (std::size_t i = start; i < end; ++i) {
      const std::size_t k = order[i];
      xs.push_back(prepare(segments[k]));
      an.push_back(anchors[k] < 0 ? center_anchor(lengths[k]) : anchors[k]);
    }
    for (const auto& x : xs) ptrs.push_back(&x);
    Tape tape(false);
    const auto vars = encode_graph(tape, ptrs, an);
    for (std::size_t i = start; i < end; ++i) {
      const Mat& v = vars[i - start].value();
      require(v.allFinite(), ErrorKind::NumericalFailure, "encoder produced non-finite latents");
      out[order[i]] = PhaseParams{v, false};
    }
  }
  return out;
}

MotionSegment ActPae::decode(const PhaseParams& p, int n, int anchor) const {
  return decode_batch({p}, {n}, {anchor}).front();
}

std::vector<MotionSegment> ActPae::decode_batch(const std::vector<PhaseParams>& params,
                                                const std::vector<int>& lengths,
                                                const std::vector<int>& anchors) const {
  require(trained_, ErrorKind::Untrained, "ACT-PAE model is untrained");
  require(params.size() == lengths.size() && params.size() == anchors.size(), ErrorKind::InvalidArgument,
          "decode: one length and anchor per latent required");
  const auto order = length_order(lengths);
  std::vector<MotionSegment> out(params.size());
  for (std::size_t start = 0; start < order.size(); start += kChunk) {
    const std::size_t end = std::min(order.size(), start + kChunk);
    Tape tape(false);
    std::vector<Var> ps;
    std::vector<int> ns, an;
    for (std::size_t i = start; i < end; ++i) {
      const std::size_t k = order[i];
      require(!params[k].normalized, ErrorKind::InvalidArgument, "decode expects unnormalized phase params");
      require(params[k].values.rows() == 4 && params[k].q() == config_.q, ErrorKind::ShapeMismatch,
              "decode: latent has the wrong size");
      ps.push_back(tape.constant(params[k].values));
      ns.push_back(lengths[k]);
      an.push_back(anchors[k] < 0 ? center_anchor(lengths[k]) : anchors[k]);
    }
    Var y = decode_graph(tape, ps, ns, an);
    const int n_max = max_length(ns);
    for (std::size_t b = 0; b < ps.size(); ++b) {
      MotionSegment m;
      m.fps = config_.fps;
      m.layout = config_.layout;
      m.root = RootEncoding::LocalDelta;
      m.frames = deemphasize(y.value().middleRows(static_cast<Eigen::Index>(b) * n_max, ns[b]), config_.layout,
                             config_.emphasis);
      require(m.frames.allFinite(), ErrorKind::NumericalFailure, "decoder produced non-finite frames");
      out[order[start + b]] = std::move(m);
    }
  }
  return out;
}

nn::Checkpoint ActPae::to_checkpoint() const {
  nn::Checkpoint ck;
  ck.config_digest = config_.digest();
  ck.metadata["kind"] = "actpae";
  ck.metadata["config"] = config_.describe();
  ck.metadata["trained"] = trained_ ? "1" : "0";
  ck.metadata["adam_step"] = std::to_string(params_.step());
  ck.params = nn::params_of(params_);
  if (!stats_.empty()) {
    ck.stats["latent.mean"] = nn::Tensor::from_matrix(stats_.mean, true);
    ck.stats["latent.std"] = nn::Tensor::from_matrix(stats_.std, true);
  }
  return ck;
}

ActPae ActPae::from_checkpoint(const nn::Checkpoint& ck) {
  auto kind = ck.metadata.find("kind");
  require(kind != ck.metadata.end() && kind->second == "actpae", ErrorKind::MalformedFile,
          "checkpoint does not hold an ACT-PAE model");
  auto cfg = ck.metadata.find("config");
  require(cfg != ck.metadata.end(), ErrorKind::MalformedFile, "ACT-PAE checkpoint lacks its config");
  PaeConfig config = PaeConfig::parse(cfg->second);
  require(config.digest() == ck.config_digest, ErrorKind::DigestMismatch,
          "ACT-PAE checkpoint config digest mismatch");
  ActPae model(config, 0);
  for (const auto& [name, t] : model.params_.params()) {
    auto it = ck.params.find(name);
    require(it != ck.params.end(), ErrorKind::MalformedFile, "ACT-PAE checkpoint lacks parameter " + name);
    require(it->second.shape() == t.shape(), ErrorKind::ShapeMismatch, "ACT-PAE parameter " + name + " has shape " +
                                                                            nn::shape_string(it->second.shape()));
  }
  require(ck.params.size() == model.params_.params().size(), ErrorKind::MalformedFile,
          "ACT-PAE checkpoint has unexpected parameters");
  model.params_ = nn::store_of(ck.params);
  auto step = ck.metadata.find("adam_step");
  if (step != ck.metadata.end()) model.params_.set_step(parse_int(step->second, "adam_step"));
  auto mean = ck.stats.find("latent.mean");
  auto std = ck.stats.find("latent.std");
  if (mean != ck.stats.end() && std != ck.stats.end()) {
    model.stats_.mean = mean->second.matrix();
    model.stats_.std = std->second.matrix();
    require(model.stats_.mean.size() == 4 * config.q && model.stats_.std.size() == 4 * config.q,
            ErrorKind::MalformedFile, "ACT-PAE latent statistics have the wrong size");
  }
  auto trained = ck.metadata.find("trained");
  model.trained_ = trained != ck.metadata.end() && trained->second == "1";
  return model;
}

void ActPae::save(const std::filesystem::path& path) const { nn::save_checkpoint(path, to_checkpoint()); }

ActPae ActPae::load(const std::filesystem::path& path) { return from_checkpoint(nn::load_checkpoint(path)); }

namespace {

// Shuffled batches of similar length: shuffle, sort windows of 8 batches by length,
// cut into batches, then shuffle the batch order.
std::vector<std::vector<std::size_t>> make_batches(const std::vector<PaeSample>& data, int batch, nn::Rng rng) {
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
  const std::size_t window = static_cast<std::size_t>(batch) * 8;
  for (std::size_t s = 0; s < order.size(); s += window) {
    const auto e = std::min(order.size(), s + window);
    std::stable_sort(order.begin() + s, order.begin() + e, [&](std::size_t a, std::size_t b) {
      return data[a].segment.length() < data[b].segment.length();
    });
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t s = 0; s < order.size(); s += batch)
    batches.emplace_back(order.begin() + s, order.begin() + std::min(order.size(), s + batch));
  for (std::size_t i = batches.size(); i > 1; --i) std::swap(batches[i - 1], batches[rng.index(i)]);
  return batches;
}

}  // namespace

PaeTrainResult train_actpae(const std::vector<PaeSample>& data, const PaeConfig& config, const PaeTrainConfig& train,
                            const std::function<void(const PaeLogEntry&)>& on_epoch) {
  require(!data.empty(), ErrorKind::InvalidArgument, "ACT-PAE training set is empty");
  require(train.batch > 0 && train.epochs > 0 && train.lr > 0.0, ErrorKind::InvalidArgument,
          "invalid ACT-PAE training settings");
  nn::Rng rng(train.seed);
  PaeTrainResult result{ActPae(config, rng.fork(1).next_u64()), {}};
  ActPae& model = result.model;

  std::vector<Mat> prepared;
  prepared.reserve(data.size());
  for (const auto& s : data) prepared.push_back(model.prepare(s.segment));

  nn::AdamConfig adam;
  adam.lr = train.lr;
  std::int64_t updates = 0;
  for (int epoch = 1; epoch <= train.epochs && updates < train.max_updates; ++epoch) {
    double loss_sum = 0.0;
    int batches_run = 0;
    for (const auto& idx : make_batches(data, train.batch, rng.fork(1000 + epoch))) {
      if (updates >= train.max_updates) break;
      std::vector<const Mat*> xs;
      std::vector<int> lengths, anchors;
      for (std::size_t i : idx) {
        xs.push_back(&prepared[i]);
        lengths.push_back(data[i].segment.length());
        anchors.push_back(data[i].anchor);
      }
      const int n_max = max_length(lengths);
      std::vector<Mat> targets;
      std::vector<double> mask;
      for (std::size_t b = 0; b < idx.size(); ++b) {
        targets.push_back(prepared[idx[b]]);
        for (int t = 0; t < n_max; ++t) mask.push_back(t < lengths[b] ? 1.0 : 0.0);
      }
      Tape tape(true);
      auto latents = model.encode_graph(tape, xs, anchors);
      Var y = model.decode_graph(tape, latents, lengths, anchors);
      Var loss = ops::masked_mse(y, tape.constant(pad_stack(targets, n_max, config.channels())), mask);
      tape.backward(loss);
      nn::adam_step(model.params(), tape.param_grads(), adam);
      loss_sum += loss.value()(0, 0);
      ++batches_run;
      ++updates;
    }
    PaeLogEntry entry{epoch, updates, loss_sum / std::max(1, batches_run)};
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  model.mark_trained();
  model.set_stats(fit_latent_stats(model, data));
  return result;
}

LatentStats fit_latent_stats(const ActPae& model, const std::vector<PaeSample>& data) {
  require(!data.empty(), ErrorKind::InvalidArgument, "cannot fit latent statistics on an empty set");
  std::vector<MotionSegment> segs;
  std::vector<int> anchors;
  for (const auto& s : data) {
    segs.push_back(s.segment);
    anchors.push_back(s.anchor);
  }
  const auto latents = model.encode_batch(segs, anchors);
  const Eigen::Index dim = latents.front().values.size();
  RowVec mean = RowVec::Zero(dim);
  for (const auto& p : latents) mean += p.flat();
  mean /= static_cast<double>(latents.size());
  RowVec var = RowVec::Zero(dim);
  for (const auto& p : latents) var += (p.flat() - mean).array().square().matrix();
  var /= static_cast<double>(latents.size());
  LatentStats st;
  st.mean = mean;
  st.std = var.array().sqrt().max(1e-12).matrix();
  return st;
}

RowVec reconstruction_rmse(const ActPae& model, const std::vector<PaeSample>& data) {
  require(!data.empty(), ErrorKind::InvalidArgument, "empty evaluation set");
  std::vector<MotionSegment> segs;
  std::vector<int> anchors, lengths;
  for (const auto& s : data) {
    segs.push_back(s.segment);
    anchors.push_back(s.anchor);
    lengths.push_back(s.segment.length());
  }
  const auto recon = model.decode_batch(model.encode_batch(segs, anchors), lengths, anchors);
  const int e = model.config().channels();
  RowVec sq = RowVec::Zero(e);
  double frames = 0.0;
  for (std::size_t i = 0; i < segs.size(); ++i) {
    const Mat ref = segs[i].root == RootEncoding::World ? to_features(segs[i]).frames : segs[i].frames;
    sq += (recon[i].frames - ref).array().square().colwise().sum().matrix();
    frames += static_cast<double>(ref.rows());
  }
  return (sq / frames).array().sqrt().matrix();
}

}  // namespace cpd::phase
