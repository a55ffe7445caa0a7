#pragma once

#include "cpd/nn/checkpoint.hpp"
#include "cpd/nn/layers.hpp"
#include "cpd/phase/motion.hpp"
#include "cpd/phase/periodic.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace cpd::phase {

struct PaeConfig {
  ChannelLayout layout = ChannelLayout::planar_default();
  int q = 32;
  int width = 64;
  int heads = 4;
  int ff = 128;
  int layers = 2;
  int pe_dim = 16;
  int n_min = 24;
  int n_max = 96;
  double fps = 24.0;
  double emphasis = 15.0;

  int channels() const { return layout.channels(); }
  nn::BlockShape block() const { return {width, heads, ff}; }
  // Canonical key=value listing; the digest covers exactly this text.
  std::string describe() const;
  std::uint64_t digest() const;
  static PaeConfig parse(const std::string& described);
};

// Per-entry mean and population std of the flattened 4Q latent over a training set.
struct LatentStats {
  RowVec mean;
  RowVec std;

  bool empty() const { return mean.size() == 0; }
  PhaseParams normalize(const PhaseParams& p) const;
  PhaseParams denormalize(const PhaseParams& p) const;
  std::uint64_t digest() const;
};

// Semantic segments are anchored at their center frame.
inline int center_anchor(int n) { return n / 2; }

class ActPae {
 public:
  explicit ActPae(PaeConfig config = {}, std::uint64_t seed = 0);

  const PaeConfig& config() const { return config_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }
  const LatentStats& stats() const { return stats_; }
  void set_stats(LatentStats s) { stats_ = std::move(s); }
  bool trained() const { return trained_; }
  void mark_trained() { trained_ = true; }

  // Emphasized feature matrix fed to the encoder (world roots are converted to local deltas).
  Mat prepare(const MotionSegment& m) const;

  // Tape-level encoder over a batch of prepared N_b x E matrices. Returns one 4 x Q
  // parameter node per sample.
  std::vector<nn::Var> encode_graph(nn::Tape& tape, const std::vector<const Mat*>& inputs,
                                    const std::vector<int>& anchors) const;
  // Tape-level decoder. Returns the stacked (B * N_max_batch) x E output in emphasized
  // feature space; rows past each sample's length are padding.
  nn::Var decode_graph(nn::Tape& tape, const std::vector<nn::Var>& params, const std::vector<int>& lengths,
                       const std::vector<int>& anchors) const;

  // Unnormalized phase parameters. anchor < 0 selects the center frame.
  PhaseParams encode(const MotionSegment& m, int anchor = -1) const;
  std::vector<PhaseParams> encode_batch(const std::vector<MotionSegment>& segments,
                                        const std::vector<int>& anchors) const;
  // Local-delta feature segment (de-emphasized) of n frames.
  MotionSegment decode(const PhaseParams& p, int n, int anchor = -1) const;
  std::vector<MotionSegment> decode_batch(const std::vector<PhaseParams>& params, const std::vector<int>& lengths,
                                          const std::vector<int>& anchors) const;

  nn::Checkpoint to_checkpoint() const;
  static ActPae from_checkpoint(const nn::Checkpoint& ck);
  void save(const std::filesystem::path& path) const;
  static ActPae load(const std::filesystem::path& path);

 private:
  void check_length(int n) const;

  PaeConfig config_;
  nn::ParamStore params_;
  LatentStats stats_;
  bool trained_ = false;
};

struct PaeSample {
  MotionSegment segment;
  int anchor = 0;
};

struct PaeTrainConfig {
  int epochs = 40;
  std::int64_t max_updates = 20000;
  int batch = 32;
  double lr = 3e-4;
  std::uint64_t seed = 1;
};

struct PaeLogEntry {
  int epoch = 0;
  std::int64_t updates = 0;
  double loss = 0.0;
};

struct PaeTrainResult {
  ActPae model;
  std::vector<PaeLogEntry> log;
};

// Minimizes the mean squared reconstruction error in emphasized feature space, then
// fits latent statistics on the training set. on_epoch, when set, sees each log entry.
PaeTrainResult train_actpae(const std::vector<PaeSample>& data, const PaeConfig& config,
                            const PaeTrainConfig& train, const std::function<void(const PaeLogEntry&)>& on_epoch = {});

LatentStats fit_latent_stats(const ActPae& model, const std::vector<PaeSample>& data);

// Per-channel RMSE of decode(encode(x)) against x in local-delta feature space.
RowVec reconstruction_rmse(const ActPae& model, const std::vector<PaeSample>& data);

}  // namespace cpd::phase
