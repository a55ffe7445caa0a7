#include "cpd/diffusion/train.hpp"

#include "cpd/error.hpp"
#include "cpd/nn/adam.hpp"

#include <numeric>

namespace cpd::diffusion {

using nn::Tape;
using nn::Var;
namespace ops = nn::ops;

std::vector<LatentTriple> encode_pairs(const phase::ActPae& pae, const std::vector<synth::PairSample>& pairs) {
  std::vector<phase::MotionSegment> segs;
  std::vector<int> anchors;
  for (const auto& p : pairs) {
    segs.push_back(p.x_p);
    anchors.push_back(phase::center_anchor(p.x_p.length()));
    segs.push_back(p.x_t);
    anchors.push_back(p.t_anchor);
    segs.push_back(p.x_s);
    anchors.push_back(phase::center_anchor(p.x_s.length()));
  }
  const auto latents = pae.encode_batch(segs, anchors);
  std::vector<LatentTriple> out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    LatentTriple t;
    t.p = pae.stats().normalize(latents[3 * i]).flat();
    t.t = pae.stats().normalize(latents[3 * i + 1]).flat();
    t.s = pae.stats().normalize(latents[3 * i + 2]).flat();
    t.c_p = pairs[i].c_p;
    t.c_s = pairs[i].c_s;
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<DenoiserSample> denoiser_samples(DenoiserKind kind, const std::vector<LatentTriple>& data) {
  std::vector<DenoiserSample> out;
  for (const auto& d : data) {
    switch (kind) {
      case DenoiserKind::Spdm:
        out.push_back({d.p, {}, d.c_p});
        out.push_back({d.s, {}, d.c_s});
        break;
      case DenoiserKind::TpdmForward:
        out.push_back({d.t, d.p, {}});
        out.push_back({d.s, d.t, {}});
        break;
      case DenoiserKind::TpdmBackward:
        out.push_back({d.p, d.t, {}});
        out.push_back({d.t, d.s, {}});
        break;
    }
  }
  return out;
}

namespace {

struct NoisedBatch {
  Mat pk, eps, cond;
  std::vector<int> steps;
  std::vector<std::vector<std::string>> texts;
};

NoisedBatch noise_batch(const std::vector<DenoiserSample>& samples, const std::vector<std::size_t>& idx,
                        const DiffusionSchedule& schedule, nn::Rng& rng, double null_rate) {
  const auto b = static_cast<Eigen::Index>(idx.size());
  const Eigen::Index dim = samples[idx[0]].target.size();
  NoisedBatch nb;
  nb.pk.resize(b, dim);
  nb.eps.resize(b, dim);
  nb.cond = Mat::Zero(b, dim);
  for (Eigen::Index i = 0; i < b; ++i) {
    const DenoiserSample& s = samples[idx[i]];
    const int k = static_cast<int>(rng.index(static_cast<std::size_t>(schedule.k_train)));
    RowVec eps(dim);
    for (Eigen::Index j = 0; j < dim; ++j) eps(j) = rng.normal();
    nb.pk.row(i) = add_noise(s.target, eps, k, schedule);
    nb.eps.row(i) = eps;
    if (s.cond.size() == dim) nb.cond.row(i) = s.cond;
    nb.steps.push_back(k);
    const bool drop = null_rate > 0.0 && rng.uniform() < null_rate;
    nb.texts.push_back(drop ? std::vector<std::string>{} : s.text);
  }
  return nb;
}

}  // namespace

DenoiserTrainResult train_denoiser(DenoiserKind kind, const std::vector<LatentTriple>& data,
                                   const DenoiserConfig& config, const DiffusionSchedule& schedule,
                                   const phase::LatentStats& stats, const DenoiserTrainConfig& train,
                                   const std::function<void(const DenoiserLogEntry&)>& on_epoch) {
  require(!stats.empty(), ErrorKind::Untrained, "denoiser training needs phase autoencoder statistics");
  require(!data.empty(), ErrorKind::InvalidArgument, "denoiser training set is empty");
  require(train.batch > 0 && train.epochs > 0 && train.lr > 0.0, ErrorKind::InvalidArgument,
          "invalid denoiser training settings");
  const nn::Rng root = nn::Rng(train.seed).fork(static_cast<std::uint64_t>(kind) + 1);
  DenoiserTrainResult result{Denoiser(kind, config, schedule, stats, root.fork(1).next_u64()), {}};
  Denoiser& model = result.model;
  const auto samples = denoiser_samples(kind, data);
  const TextEncoder text(config.vocabulary);

  nn::AdamConfig adam;
  adam.lr = train.lr;
  std::int64_t updates = 0;
  for (int epoch = 1; epoch <= train.epochs && updates < train.max_updates; ++epoch) {
    nn::Rng rng = root.fork(1000 + static_cast<std::uint64_t>(epoch));
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    double loss_sum = 0.0;
    int batches_run = 0;
    for (std::size_t s = 0; s < order.size() && updates < train.max_updates; s += train.batch) {
      const std::vector<std::size_t> idx(order.begin() + s,
                                         order.begin() + std::min(order.size(), s + train.batch));
      NoisedBatch nb = noise_batch(samples, idx, schedule, rng, kind == DenoiserKind::Spdm ? train.null_prompt_rate : 0.0);
      Tape tape(true);
      Var pk = tape.constant(nb.pk);
      Var cond = tape.constant(nb.cond);
      Mat pool;
      if (kind == DenoiserKind::Spdm) pool = text.pooling(nb.texts);
      Var eps_hat = model.eps_graph(tape, pk, nb.steps, model.is_tpdm() ? nullptr : &pool,
                                    model.is_tpdm() ? &cond : nullptr);
      Var loss = ops::l1(eps_hat, tape.constant(nb.eps));
      tape.backward(loss);
      nn::adam_step(model.params(), tape.param_grads(), adam);
      loss_sum += loss.value()(0, 0);
      ++batches_run;
      ++updates;
    }
    DenoiserLogEntry entry{epoch, updates, loss_sum / std::max(1, batches_run)};
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  model.mark_trained();
  return result;
}

DenoiserStackResult train_denoisers(const phase::ActPae& pae, const std::vector<LatentTriple>& data,
                                    const DenoiserConfig& config, const DiffusionSchedule& schedule,
                                    const DenoiserTrainConfig& train,
                                    const std::function<void(DenoiserKind, const DenoiserLogEntry&)>& on_epoch) {
  require(!pae.stats().empty(), ErrorKind::Untrained, "phase autoencoder checkpoint carries no latent statistics");
  auto run = [&](DenoiserKind kind) {
    return train_denoiser(kind, data, config, schedule, pae.stats(), train, [&](const DenoiserLogEntry& e) {
      if (on_epoch) on_epoch(kind, e);
    });
  };
  DenoiserTrainResult spdm = run(DenoiserKind::Spdm);
  DenoiserTrainResult fwd = run(DenoiserKind::TpdmForward);
  DenoiserTrainResult bwd = run(DenoiserKind::TpdmBackward);
  return {std::move(spdm), std::move(fwd), std::move(bwd)};
}

HeldOutL1 heldout_l1(const Denoiser& model, const std::vector<LatentTriple>& data, std::uint64_t seed) {
  const auto samples = denoiser_samples(model.kind(), data);
  require(!samples.empty(), ErrorKind::InvalidArgument, "empty evaluation set");
  nn::Rng rng(seed);
  double err = 0.0, zero = 0.0, count = 0.0;
  constexpr std::size_t kChunk = 256;
  for (std::size_t s = 0; s < samples.size(); s += kChunk) {
    std::vector<std::size_t> idx(std::min(kChunk, samples.size() - s));
    std::iota(idx.begin(), idx.end(), s);
    NoisedBatch nb = noise_batch(samples, idx, model.schedule(), rng, 0.0);
    const Mat eps_hat = model.eps_batch(nb.pk, nb.steps, nb.texts, nb.cond);
    err += (eps_hat - nb.eps).cwiseAbs().sum();
    zero += nb.eps.cwiseAbs().sum();
    count += static_cast<double>(nb.eps.size());
  }
  return {err / count, zero / count};
}

}  // namespace cpd::diffusion
