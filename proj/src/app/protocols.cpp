#include "cpd/app/protocols.hpp"

#include "cpd/error.hpp"
#include "cpd/nn/rng.hpp"
#include "cpd/synth/generator.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <set>

namespace cpd::app {

using metrics::channel_group;

namespace {

// Bitwise equality; unlike operator== it tells 0.0 from -0.0.
template <class A, class B>
bool same_bits(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  for (Eigen::Index c = 0; c < a.cols(); ++c)
    for (Eigen::Index r = 0; r < a.rows(); ++r)
      if (std::bit_cast<std::uint64_t>(a(r, c)) != std::bit_cast<std::uint64_t>(b(r, c))) return false;
  return true;
}

}  // namespace

std::vector<GapCase> gap_cases(const synth::Corpus& corpus, int gap, int max_cases) {
  require(gap >= 1, ErrorKind::InvalidArgument, "gap must be positive");
  const int left = gap / 2;
  const int right = gap - left;
  std::vector<GapCase> out;
  for (const auto& p : corpus.pairs) {
    if (!p.test) continue;
    if (max_cases > 0 && static_cast<int>(out.size()) >= max_cases) break;
    const int keep_p = p.p_len - left;
    const int keep_s = p.s_len - right;
    if (keep_p < corpus.config.n_min || keep_s < corpus.config.n_min) continue;
    const MotionSegment& stream = corpus.streams[static_cast<std::size_t>(p.stream)].motion;
    GapCase c;
    c.pair = p.id;
    c.x_p = stream.slice(p.p_start, keep_p);
    c.x_s = stream.slice(p.s_start + right, keep_s);
    c.reference = stream.slice(p.p_start, keep_p + gap + keep_s);
    c.x_p.tokens = {p.c_p};
    c.x_s.tokens = {p.c_s};
    c.gap_start = keep_p;
    c.gap = gap;
    c.c_p = p.c_p;
    c.c_s = p.c_s;
    out.push_back(std::move(c));
  }
  return out;
}

MotionSegment linear_inbetween(const MotionSegment& x_p, const MotionSegment& x_s, int gap) {
  require(x_p.layout == x_s.layout && x_p.channels() == x_s.channels(), ErrorKind::ShapeMismatch,
          "clips differ in layout");
  MotionSegment out = x_p;
  out.frame_labels.clear();
  out.tokens.clear();
  const int np = x_p.length();
  out.frames.resize(np + gap + x_s.length(), x_p.channels());
  out.frames.topRows(np) = x_p.frames;
  out.frames.bottomRows(x_s.length()) = x_s.frames;
  const RowVec a = x_p.frames.row(np - 1);
  const RowVec b = x_s.frames.row(0);
  std::vector<bool> rotation(static_cast<std::size_t>(x_p.channels()), false);
  const auto pairs = x_p.layout.rotation_pairs();
  for (int c : pairs) rotation[static_cast<std::size_t>(c)] = rotation[static_cast<std::size_t>(c + 1)] = true;
  for (int i = 1; i <= gap; ++i) {
    const double w = static_cast<double>(i) / (gap + 1);
    const Eigen::Index t = np + i - 1;
    for (int c = 0; c < x_p.channels(); ++c)
      if (!rotation[static_cast<std::size_t>(c)]) out.frames(t, c) = (1.0 - w) * a(c) + w * b(c);
    for (int c : pairs) {
      const double h0 = std::atan2(a(c + 1), a(c));
      const double h1 = std::atan2(b(c + 1), b(c));
      const double h = h0 + w * std::remainder(h1 - h0, 2.0 * std::numbers::pi);
      out.frames(t, c) = std::cos(h);
      out.frames(t, c + 1) = std::sin(h);
    }
  }
  return out;
}

GapScores score_gap(const MotionSegment& reference, const MotionSegment& candidate, int gap_start, int gap) {
  GapScores s;
  s.l2_vel = metrics::l2_vel(metrics::window(reference, candidate, gap_start, gap + 1, "all"));
  const metrics::EvalWindow rot = metrics::window(reference, candidate, gap_start, gap, "rotations");
  s.l2_rot = metrics::l2_rot(rot);
  s.npss = metrics::npss(rot).value;
  const int j0 = std::max(0, gap_start - 2);
  const int j1 = std::min(candidate.length(), gap_start + gap + 2);
  s.jerk = metrics::rms_jerk(candidate, channel_group(candidate.layout, "all"), j0, j1 - j0);
  return s;
}

UmibResult run_umib(const composer::Stack& stack, const std::vector<GapCase>& cases, std::uint64_t seed, int chunk) {
  require(!cases.empty(), ErrorKind::InvalidArgument, "no inbetweening cases");
  UmibResult r;
  int vel_wins = 0, npss_wins = 0;
  for (std::size_t c0 = 0; c0 < cases.size(); c0 += static_cast<std::size_t>(chunk)) {
    const std::size_t c1 = std::min(cases.size(), c0 + static_cast<std::size_t>(chunk));
    std::vector<composer::InbetweenRequest> reqs;
    for (std::size_t i = c0; i < c1; ++i)
      reqs.push_back({cases[i].x_p, cases[i].x_s, cases[i].gap, std::nullopt, seed + i});
    const auto out = composer::inbetween_many(stack, reqs);
    for (std::size_t i = c0; i < c1; ++i) {
      const GapCase& g = cases[i];
      const composer::Inbetween& ib = out[i - c0];
      r.frozen_exact = r.frozen_exact && same_bits(ib.p_before, ib.p_after) && same_bits(ib.s_before, ib.s_after);
      r.inputs_exact = r.inputs_exact && same_bits(ib.motion.frames.topRows(g.x_p.length()), g.x_p.frames) &&
                       same_bits(ib.motion.frames.bottomRows(g.x_s.length()), g.x_s.frames);
      const GapScores m = score_gap(g.reference, ib.motion, g.gap_start, g.gap);
      const GapScores l = score_gap(g.reference, linear_inbetween(g.x_p, g.x_s, g.gap), g.gap_start, g.gap);
      const GapScores t = score_gap(g.reference, g.reference, g.gap_start, g.gap);
      vel_wins += m.l2_vel < l.l2_vel;
      npss_wins += m.npss < l.npss;
      r.model.push_back(m);
      r.linear.push_back(l);
      r.truth_jerk.push_back(t.jerk);
    }
  }
  r.vel_win_rate = static_cast<double>(vel_wins) / static_cast<double>(cases.size());
  r.npss_win_rate = static_cast<double>(npss_wins) / static_cast<double>(cases.size());
  return r;
}

RowVec ActionClassifier::features(const MotionSegment& m) {
  const auto pairs = m.layout.rotation_pairs();
  const int n = m.length();
  require(n >= 4, ErrorKind::InvalidArgument, "clip too short to classify");
  RowVec f(2 * static_cast<Eigen::Index>(pairs.size()));
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const int c = pairs[p];
    std::vector<double> angle(static_cast<std::size_t>(n));
    double prev = std::atan2(m.frames(0, c + 1), m.frames(0, c));
    angle[0] = prev;
    for (int t = 1; t < n; ++t) {
      const double raw = std::atan2(m.frames(t, c + 1), m.frames(t, c));
      prev += std::remainder(raw - prev, 2.0 * std::numbers::pi);
      angle[static_cast<std::size_t>(t)] = prev;
    }
    double mu = 0.0;
    for (double v : angle) mu += v;
    mu /= n;
    double sq = 0.0;
    for (double& v : angle) {
      v -= mu;
      sq += v * v;
    }
    int best = 1;
    double best_power = -1.0;
    for (int k = 1; k <= n / 2; ++k) {
      double re = 0.0, im = 0.0;
      for (int t = 0; t < n; ++t) {
        const double a = 2.0 * std::numbers::pi * static_cast<double>((static_cast<long>(k) * t) % n) / n;
        re += angle[static_cast<std::size_t>(t)] * std::cos(a);
        im -= angle[static_cast<std::size_t>(t)] * std::sin(a);
      }
      const double power = re * re + im * im;
      if (power > best_power) {
        best_power = power;
        best = k;
      }
    }
    // A flat channel has no dominant frequency.
    f(2 * static_cast<Eigen::Index>(p)) = sq / n < 1e-18 ? 0.0 : best * m.fps / n;
    f(2 * static_cast<Eigen::Index>(p) + 1) = std::log(1e-4 + std::sqrt(sq / n));
  }
  return f;
}

ActionClassifier ActionClassifier::fit(const std::vector<MotionSegment>& clips, const std::vector<std::string>& labels) {
  require(!clips.empty() && clips.size() == labels.size(), ErrorKind::InvalidArgument,
          "classifier needs one label per clip");
  ActionClassifier c;
  const std::set<std::string> names(labels.begin(), labels.end());
  c.labels_.assign(names.begin(), names.end());
  Mat feats(static_cast<Eigen::Index>(clips.size()), features(clips[0]).size());
  for (std::size_t i = 0; i < clips.size(); ++i) feats.row(static_cast<Eigen::Index>(i)) = features(clips[i]);
  const RowVec mu = feats.colwise().mean();
  c.scale_ = ((feats.rowwise() - mu).array().square().colwise().mean()).sqrt().max(1e-9).inverse().matrix();
  c.centroids_ = Mat::Zero(static_cast<Eigen::Index>(c.labels_.size()), feats.cols());
  std::vector<int> counts(c.labels_.size(), 0);
  for (std::size_t i = 0; i < clips.size(); ++i) {
    const auto k = static_cast<std::size_t>(std::lower_bound(c.labels_.begin(), c.labels_.end(), labels[i]) - c.labels_.begin());
    c.centroids_.row(static_cast<Eigen::Index>(k)) += feats.row(static_cast<Eigen::Index>(i)).cwiseProduct(c.scale_);
    ++counts[k];
  }
  for (std::size_t k = 0; k < counts.size(); ++k) c.centroids_.row(static_cast<Eigen::Index>(k)) /= counts[k];
  return c;
}

std::string ActionClassifier::classify(const MotionSegment& m) const {
  require(!labels_.empty(), ErrorKind::Untrained, "classifier has no centroids");
  const RowVec f = features(m).cwiseProduct(scale_);
  Eigen::Index best = 0;
  (centroids_.rowwise() - f).rowwise().squaredNorm().minCoeff(&best);
  return labels_[static_cast<std::size_t>(best)];
}

void semantic_clips(const synth::Corpus& corpus, bool test, std::vector<MotionSegment>& clips,
                    std::vector<std::string>& labels) {
  for (const auto& p : corpus.pairs) {
    if (p.test != test) continue;
    const MotionSegment& stream = corpus.streams[static_cast<std::size_t>(p.stream)].motion;
    clips.push_back(stream.slice(p.p_start, p.p_len));
    labels.push_back(p.c_p);
    clips.push_back(stream.slice(p.s_start, p.s_len));
    labels.push_back(p.c_s);
  }
}

CmibResult run_cmib(const composer::Stack& stack, const synth::Corpus& corpus, const std::vector<GapCase>& cases,
                    std::uint64_t seed, int chunk) {
  require(!cases.empty(), ErrorKind::InvalidArgument, "no inbetweening cases");
  std::vector<MotionSegment> clips;
  std::vector<std::string> labels;
  semantic_clips(corpus, false, clips, labels);
  const ActionClassifier clf = ActionClassifier::fit(clips, labels);

  CmibResult r;
  r.chance = 1.0 / static_cast<double>(clf.labels().size());
  std::vector<MotionSegment> held;
  std::vector<std::string> held_labels;
  semantic_clips(corpus, true, held, held_labels);
  int ok = 0;
  for (std::size_t i = 0; i < held.size(); ++i) ok += clf.classify(held[i]) == held_labels[i];
  r.reference_accuracy = held.empty() ? 0.0 : static_cast<double>(ok) / static_cast<double>(held.size());

  const nn::Rng root(seed);
  const std::vector<std::string>& vocab = synth::vocabulary();
  int hits = 0;
  for (std::size_t c0 = 0; c0 < cases.size(); c0 += static_cast<std::size_t>(chunk)) {
    const std::size_t c1 = std::min(cases.size(), c0 + static_cast<std::size_t>(chunk));
    std::vector<composer::InbetweenRequest> reqs;
    for (std::size_t i = c0; i < c1; ++i) {
      nn::Rng rng = root.fork(i);
      const std::string target = vocab[rng.index(vocab.size())];
      r.target.push_back(target);
      reqs.push_back({cases[i].x_p, cases[i].x_s, cases[i].gap, std::vector<std::string>{target}, seed + i});
    }
    const auto out = composer::inbetween_many(stack, reqs);
    for (std::size_t i = c0; i < c1; ++i) {
      const composer::Inbetween& ib = out[i - c0];
      const std::string got = clf.classify(ib.motion.slice(ib.gap_start, cases[i].gap));
      r.predicted.push_back(got);
      hits += got == r.target[i];
    }
  }
  r.accuracy = static_cast<double>(hits) / static_cast<double>(cases.size());
  return r;
}

PairSmoothness run_pair_smoothness(const composer::Stack& stack, const synth::Corpus& corpus, int runs,
                                   std::uint64_t seed, int chunk) {
  std::vector<const synth::PairRecord*> chosen;
  for (const auto& p : corpus.pairs)
    if (p.test && static_cast<int>(chosen.size()) < runs) chosen.push_back(&p);
  require(!chosen.empty(), ErrorKind::InvalidArgument, "no held-out pairs to compose");
  PairSmoothness r;
  const auto& layout = stack.pae->config().layout;
  const auto all = channel_group(layout, "all");
  for (std::size_t c0 = 0; c0 < chosen.size(); c0 += static_cast<std::size_t>(chunk)) {
    const std::size_t c1 = std::min(chosen.size(), c0 + static_cast<std::size_t>(chunk));
    std::vector<composer::ChainSpec> specs;
    for (std::size_t i = c0; i < c1; ++i) {
      composer::ChainSpec s;
      s.seed = seed + i;
      s.segments = {{{chosen[i]->c_p}, chosen[i]->p_len}, {{chosen[i]->c_s}, chosen[i]->s_len}};
      specs.push_back(std::move(s));
    }
    const auto out = composer::compose_many(stack, specs);
    for (std::size_t i = c0; i < c1; ++i) {
      const composer::Composition& c = out[i - c0];
      const composer::Span& t = c.chain.transitions[0];
      std::vector<int> bounds = {t.start, c.chain.semantic[1].start};
      if (t.start + t.length < c.motion.length()) bounds.push_back(t.start + t.length);
      r.boundary_gap.push_back(metrics::boundary_gap(c.motion, bounds, all));
      r.jerk.push_back(metrics::rms_jerk(c.motion, all, t.start, t.length));
      const synth::PairRecord& p = *chosen[i];
      const MotionSegment& stream = corpus.streams[static_cast<std::size_t>(p.stream)].motion;
      r.truth_jerk.push_back(metrics::rms_jerk(stream.slice(p.t_start, p.t_len), all));
    }
  }
  r.median_gap = median(r.boundary_gap);
  r.mean_jerk = mean(r.jerk);
  r.mean_truth_jerk = mean(r.truth_jerk);
  return r;
}

double median(std::vector<double> v) {
  require(!v.empty(), ErrorKind::InvalidArgument, "median of nothing");
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 == 1 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

double mean(const std::vector<double>& v) {
  require(!v.empty(), ErrorKind::InvalidArgument, "mean of nothing");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace cpd::app
