#pragma once

#include "cpd/composer/composer.hpp"
#include "cpd/metrics/metrics.hpp"
#include "cpd/synth/corpus.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace cpd::app {

using phase::Mat;
using phase::MotionSegment;
using phase::RowVec;

// A held-out pair with `gap` frames masked around its boundary.
struct GapCase {
  int pair = 0;
  MotionSegment x_p, x_s;
  // x_p, the masked ground truth and x_s as one world-root clip.
  MotionSegment reference;
  int gap_start = 0;
  int gap = 0;
  std::string c_p, c_s;
};

// Test pairs whose remaining context on both sides keeps at least n_min frames, in
// corpus order; max_cases <= 0 keeps all of them.
std::vector<GapCase> gap_cases(const synth::Corpus& corpus, int gap, int max_cases);

// Translation moves on straight lines and every rotation pair along its shorter arc
// between the last frame of x_p and the first of x_s.
MotionSegment linear_inbetween(const MotionSegment& x_p, const MotionSegment& x_s, int gap);

struct GapScores {
  double l2_vel = 0.0;  // all channels, gap frames plus the first frame after it
  double l2_rot = 0.0;  // rotation pairs, gap frames
  double npss = 0.0;    // rotation pairs, gap frames
  double jerk = 0.0;    // all channels, gap frames with two context frames each side
};

GapScores score_gap(const MotionSegment& reference, const MotionSegment& candidate, int gap_start, int gap);

struct UmibResult {
  std::vector<GapScores> model, linear;
  std::vector<double> truth_jerk;
  double vel_win_rate = 0.0;
  double npss_win_rate = 0.0;
  // Endpoint latents left the loop bit-identical and input frames were copied verbatim.
  bool frozen_exact = true;
  bool inputs_exact = true;
};

// Inbetweens every case (batched `chunk` cases at a time) and scores model and linear
// interpolation against the ground truth. Case i uses seed + i.
UmibResult run_umib(const composer::Stack& stack, const std::vector<GapCase>& cases, std::uint64_t seed,
                    int chunk = 64);

// Nearest-centroid classifier over per-rotation-pair dominant frequency and peak power.
class ActionClassifier {
 public:
  // Feature vector of one clip: for each rotation pair, the dominant nonzero DFT
  // frequency (Hz) of the unwrapped, mean-removed angle and the log RMS amplitude of
  // that angle.
  static RowVec features(const MotionSegment& m);

  static ActionClassifier fit(const std::vector<MotionSegment>& clips, const std::vector<std::string>& labels);
  std::string classify(const MotionSegment& m) const;
  const std::vector<std::string>& labels() const { return labels_; }

 private:
  std::vector<std::string> labels_;
  Mat centroids_;
  RowVec scale_;
};

// Semantic segments (X_p and X_s) of one split with their action labels.
void semantic_clips(const synth::Corpus& corpus, bool test, std::vector<MotionSegment>& clips,
                    std::vector<std::string>& labels);

struct CmibResult {
  std::vector<std::string> target, predicted;
  double accuracy = 0.0;
  double chance = 0.0;
  // Accuracy of the same classifier on held-out ground-truth segments.
  double reference_accuracy = 0.0;
};

// Conditioned inbetweening: each gap is generated under a seeded random action and
// the classifier labels the generated frames.
CmibResult run_cmib(const composer::Stack& stack, const synth::Corpus& corpus, const std::vector<GapCase>& cases,
                    std::uint64_t seed, int chunk = 64);

struct PairSmoothness {
  std::vector<double> boundary_gap, jerk, truth_jerk;
  double median_gap = 0.0;
  double mean_jerk = 0.0;
  double mean_truth_jerk = 0.0;
};

// Composes the first `runs` held-out pairs from their texts and lengths (run i uses
// seed + i) and scores the seams and the transition span.
PairSmoothness run_pair_smoothness(const composer::Stack& stack, const synth::Corpus& corpus, int runs,
                                   std::uint64_t seed, int chunk = 25);

double median(std::vector<double> v);
double mean(const std::vector<double>& v);

}  // namespace cpd::app
