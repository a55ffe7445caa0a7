#include "doctest.h"

#include "cpd/error.hpp"
#include "cpd/metrics/metrics.hpp"
#include "cpd/nn/rng.hpp"
#include "cpd/synth/generator.hpp"

#include <cmath>
#include <numbers>

using namespace cpd::metrics;
using cpd::nn::Rng;

namespace {

MotionSegment random_motion(int n, std::uint64_t seed) {
  Rng rng(seed);
  MotionSegment m;
  m.frames = Mat(n, 16);
  for (int t = 0; t < n; ++t)
    for (int c = 0; c < 16; ++c) m.frames(t, c) = rng.normal();
  return m;
}

MotionSegment single_channel(const std::vector<double>& v) {
  MotionSegment m;
  m.frames = Mat::Zero(static_cast<Eigen::Index>(v.size()), 16);
  for (std::size_t t = 0; t < v.size(); ++t) m.frames(static_cast<Eigen::Index>(t), 4) = v[t];
  return m;
}

}  // namespace

TEST_CASE("channel groups") {
  const auto layout = cpd::phase::ChannelLayout::planar_default();
  CHECK(channel_group(layout, "all").size() == 16);
  CHECK(channel_group(layout, "translation") == std::vector<int>{0, 1});
  CHECK(channel_group(layout, "root") == std::vector<int>{0, 1, 2, 3});
  CHECK(channel_group(layout, "rotations").size() == 14);
  CHECK(channel_group(layout, "joints").front() == 4);
  CHECK_THROWS_AS(channel_group(layout, "hands"), cpd::Error);
}

TEST_CASE("l2 velocity") {
  const MotionSegment r = random_motion(12, 1);
  MotionSegment c = r;
  CHECK(l2_vel(window(r, c, 1, 11, "all")) == 0.0);
  c.frames.array() += 3.5;
  CHECK(l2_vel(window(r, c, 1, 11, "all")) < 1e-12);

  // Three-frame hand computation on channels 0 and 1.
  MotionSegment a, b;
  a.frames = Mat::Zero(3, 16);
  b.frames = Mat::Zero(3, 16);
  a.frames.col(0) << 0.0, 1.0, 3.0;
  b.frames.col(0) << 0.0, 2.0, 2.0;
  b.frames.col(1) << 0.0, 0.0, 4.0;
  // Velocity differences: frame 1 (1, 0), frame 2 (-2, 4).
  const double expect = (1.0 + std::sqrt(20.0)) / 2.0;
  CHECK(std::abs(l2_vel(window(a, b, 1, 2, "translation")) - expect) < 1e-15);

  CHECK_THROWS_AS(l2_vel(window(a, b, 1, 1, "translation")), cpd::Error);
  CHECK_THROWS_AS(l2_vel(window(a, b, 0, 2, "translation")), cpd::Error);
  MotionSegment shorter = random_motion(5, 2);
  CHECK_THROWS_AS(l2_vel(window(r, shorter, 1, 3, "all")), cpd::Error);
}

TEST_CASE("l2 rotation") {
  const MotionSegment r = cpd::synth::gen_action("wave", 30, 4);
  CHECK(l2_rot(window(r, r, 0, 30, "rotations")) == 0.0);
  MotionSegment flipped = r;
  flipped.frames.col(6) *= -1.0;
  flipped.frames.col(7) *= -1.0;
  CHECK(std::abs(l2_rot(window(r, flipped, 0, 30, "rotations")) - 2.0) < 1e-12);
  CHECK_THROWS_AS(l2_rot(window(r, flipped, 0, 30, "translation")), cpd::Error);

  // Scalar oracle on a random window; translation channels in the selection are ignored.
  const MotionSegment a = random_motion(4, 5), b = random_motion(4, 6);
  double oracle = 0.0;
  for (int t = 0; t < 4; ++t) {
    double sq = 0.0;
    for (int ch = 2; ch < 16; ++ch) sq += (a.frames(t, ch) - b.frames(t, ch)) * (a.frames(t, ch) - b.frames(t, ch));
    oracle += std::sqrt(sq) / 4.0;
  }
  CHECK(std::abs(l2_rot(window(a, b, 0, 4, "all")) - oracle) < 1e-12);
}

TEST_CASE("npss") {
  const int n = 32;
  auto sine = [&](double bin, double amp) {
    std::vector<double> v(n);
    for (int t = 0; t < n; ++t) v[static_cast<std::size_t>(t)] = amp * std::sin(2.0 * std::numbers::pi * bin * t / n);
    return v;
  };
  const MotionSegment a = single_channel(sine(3, 1.0));
  const MotionSegment b = single_channel(sine(4, 1.0));
  const MotionSegment a_loud = single_channel(sine(3, 7.0));
  const MotionSegment b_loud = single_channel(sine(4, 7.0));
  CHECK(npss(window(a, a, 0, n, "joints")).value < 1e-12);
  CHECK(std::abs(npss(window(a, b, 0, n, "joints")).value - 1.0) < 1e-9);
  CHECK(std::abs(npss(window(a_loud, b_loud, 0, n, "joints")).value - npss(window(a, b, 0, n, "joints")).value) < 1e-12);

  // Two channels: power-weighted mean of independent values.
  MotionSegment r = random_motion(20, 8), c = random_motion(20, 9);
  MotionSegment r0 = r, c0 = c, r1 = r, c1 = c;
  r0.frames.col(5).setZero();
  c0.frames.col(5).setZero();
  r1.frames.col(4).setZero();
  c1.frames.col(4).setZero();
  EvalWindow w2 = window(r, c, 0, 20, "joints");
  w2.channels = {4, 5};
  EvalWindow w0 = w2, w1 = w2;
  w0.channels = {4};
  w1.channels = {5};
  const double p0 = r.frames.col(4).squaredNorm() * 20.0;  // Parseval
  const double p1 = r.frames.col(5).squaredNorm() * 20.0;
  const double expect = (p0 * npss(w0).value + p1 * npss(w1).value) / (p0 + p1);
  CHECK(std::abs(npss(w2).value - expect) < 1e-12);

  const MotionSegment zero = single_channel(std::vector<double>(n, 0.0));
  const NpssResult d = npss(window(zero, a, 0, n, "joints"));
  CHECK(d.degenerate);
  CHECK(d.value == 0.0);
  CHECK_THROWS_AS(npss(window(a, b, 0, 3, "joints")), cpd::Error);
}

TEST_CASE("rms jerk") {
  MotionSegment m;
  m.fps = 24.0;
  m.frames = Mat::Zero(10, 16);
  CHECK(rms_jerk(m, {0, 1}) == 0.0);
  for (int t = 0; t < 10; ++t) m.frames(t, 0) = 2.0 + 0.5 * t;
  CHECK(rms_jerk(m, {0}) == 0.0);
  for (int t = 0; t < 10; ++t) m.frames(t, 1) = std::pow(t / 24.0, 3);
  // Third difference of (t h)^3 with h = 1/fps is 6 h^3; times fps^3 gives 6.
  CHECK(std::abs(rms_jerk(m, {1}) - 6.0) < 1e-9);
  CHECK(std::abs(rms_jerk(m, {0, 1}) - std::sqrt(18.0)) < 1e-9);

  // Adding an affine signal leaves jerk unchanged.
  MotionSegment r = random_motion(15, 3);
  MotionSegment s = r;
  for (int t = 0; t < 15; ++t) s.frames.row(t).array() += 0.3 - 0.7 * t;
  CHECK(std::abs(rms_jerk(r, channel_group(r.layout, "all")) - rms_jerk(s, channel_group(s.layout, "all"))) < 1e-7);
  CHECK_THROWS_AS(rms_jerk(m.slice(0, 3), {0}), cpd::Error);
}

TEST_CASE("boundary gap") {
  const auto all = channel_group(cpd::phase::ChannelLayout::planar_default(), "all");
  const MotionSegment stream = cpd::synth::gen_stream({{"walk", 48}, {"squat", 48}}, 3);
  CHECK(boundary_gap(stream, {48}, all) <= 2.0);

  const MotionSegment a = cpd::synth::gen_action("walk", 48, 1);
  MotionSegment b = cpd::synth::gen_action("spin", 48, 2);
  b.frames.col(0).array() += 5.0;
  MotionSegment cat = a;
  cat.frames.resize(96, 16);
  cat.frames.topRows(48) = a.frames;
  cat.frames.bottomRows(48) = b.frames;
  CHECK(boundary_gap(cat, {48}, all) > 10.0);

  MotionSegment flat;
  flat.frames = Mat::Constant(10, 16, 1.0);
  CHECK(boundary_gap(flat, {5}, all) == 0.0);
  CHECK_THROWS_AS(boundary_gap(flat, {0}, all), cpd::Error);
}

TEST_CASE("metrics are nonnegative on random inputs") {
  Rng rng(44);
  for (int i = 0; i < 100; ++i) {
    const int n = 6 + static_cast<int>(rng.index(20));
    const MotionSegment a = random_motion(n, rng.next_u64()), b = random_motion(n, rng.next_u64());
    const EvalWindow w = window(a, b, 1, n - 1, "all");
    CHECK(l2_vel(w) >= 0.0);
    CHECK(l2_rot(w) >= 0.0);
    CHECK(npss(w).value >= 0.0);
    CHECK(rms_jerk(a, w.channels) >= 0.0);
    CHECK(boundary_gap(a, {n / 2}, w.channels) >= 0.0);
  }
}

TEST_CASE("report formats") {
  const std::vector<ReportRow> rows = {{"l2_vel", "umib", 0.25}, {"npss", "umib", 0.1}};
  CHECK(format_report_csv(rows) == "metric,group,value\nl2_vel,umib,0.25\nnpss,umib,0.1\n");
  const std::string s = format_report_summary(rows, "eval");
  CHECK(s.rfind("eval\nmetric  group  value\nl2_vel  umib   0.25\n", 0) == 0);
}
