#include "cpd/metrics/metrics.hpp"

#include "cpd/error.hpp"
#include "cpd/text.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace cpd::metrics {

using phase::ChannelRole;

std::vector<int> channel_group(const ChannelLayout& layout, const std::string& name) {
  std::vector<int> out;
  if (name == "all") {
    for (int c = 0; c < layout.channels(); ++c) out.push_back(c);
  } else if (name == "root") {
    out = layout.indices({ChannelRole::RootTranslation, ChannelRole::RootRotation});
  } else if (name == "translation") {
    out = layout.indices({ChannelRole::RootTranslation});
  } else if (name == "rotations") {
    out = layout.indices({ChannelRole::RootRotation, ChannelRole::JointRotation});
  } else if (name == "joints") {
    out = layout.indices({ChannelRole::JointRotation});
  } else {
    fail(ErrorKind::InvalidArgument, "unknown channel group '" + name + "'");
  }
  require(!out.empty(), ErrorKind::InvalidArgument, "channel group '" + name + "' is empty for this layout");
  return out;
}

EvalWindow window(const MotionSegment& reference, const MotionSegment& candidate, int start, int count,
                  const std::string& group) {
  EvalWindow w{&reference, &candidate, {}, channel_group(reference.layout, group)};
  for (int t = start; t < start + count; ++t) w.frames.push_back(t);
  return w;
}

namespace {

void check_window(const EvalWindow& w, int min_frames) {
  require(w.reference && w.candidate, ErrorKind::InvalidArgument, "evaluation window has no data");
  const MotionSegment& r = *w.reference;
  const MotionSegment& c = *w.candidate;
  require(r.length() == c.length() && r.channels() == c.channels() && r.layout == c.layout, ErrorKind::ShapeMismatch,
          "reference and candidate differ in shape");
  require(static_cast<int>(w.frames.size()) >= min_frames, ErrorKind::InvalidArgument,
          "mask needs at least " + std::to_string(min_frames) + " frames");
  require(!w.channels.empty(), ErrorKind::InvalidArgument, "no channels selected");
  for (int t : w.frames) require(t >= 0 && t < r.length(), ErrorKind::InvalidArgument, "mask frame out of range");
  for (int ch : w.channels) require(ch >= 0 && ch < r.channels(), ErrorKind::InvalidArgument, "channel out of range");
}

}  // namespace

double l2_vel(const EvalWindow& w) {
  check_window(w, 2);
  double sum = 0.0;
  for (int t : w.frames) {
    require(t >= 1, ErrorKind::InvalidArgument, "velocity needs a predecessor frame");
    double sq = 0.0;
    for (int ch : w.channels) {
      const double vc = w.candidate->frames(t, ch) - w.candidate->frames(t - 1, ch);
      const double vr = w.reference->frames(t, ch) - w.reference->frames(t - 1, ch);
      sq += (vc - vr) * (vc - vr);
    }
    sum += std::sqrt(sq);
  }
  return sum / static_cast<double>(w.frames.size());
}

double l2_rot(const EvalWindow& w) {
  check_window(w, 1);
  const auto rot = w.reference->layout.indices({ChannelRole::RootRotation, ChannelRole::JointRotation});
  std::vector<int> chans;
  for (int ch : w.channels)
    if (std::find(rot.begin(), rot.end(), ch) != rot.end()) chans.push_back(ch);
  require(!chans.empty(), ErrorKind::InvalidArgument, "selection holds no rotation channels");
  double sum = 0.0;
  for (int t : w.frames) {
    double sq = 0.0;
    for (int ch : chans) {
      const double d = w.candidate->frames(t, ch) - w.reference->frames(t, ch);
      sq += d * d;
    }
    sum += std::sqrt(sq);
  }
  return sum / static_cast<double>(w.frames.size());
}

namespace {

// |DFT|^2 over all n bins.
std::vector<double> power_spectrum(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<double> p(n);
  for (std::size_t k = 0; k < n; ++k) {
    double re = 0.0, im = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double a = 2.0 * std::numbers::pi * static_cast<double>((k * t) % n) / static_cast<double>(n);
      re += x[t] * std::cos(a);
      im -= x[t] * std::sin(a);
    }
    p[k] = re * re + im * im;
  }
  return p;
}

}  // namespace

NpssResult npss(const EvalWindow& w) {
  check_window(w, 4);
  const std::size_t n = w.frames.size();
  double weighted = 0.0, total = 0.0;
  for (int ch : w.channels) {
    std::vector<double> xr(n), xc(n);
    for (std::size_t i = 0; i < n; ++i) {
      xr[i] = w.reference->frames(w.frames[i], ch);
      xc[i] = w.candidate->frames(w.frames[i], ch);
    }
    const auto pr = power_spectrum(xr);
    const auto pc = power_spectrum(xc);
    double sr = 0.0, sc = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      sr += pr[k];
      sc += pc[k];
    }
    if (sr <= 0.0) continue;
    double cr = 0.0, cc = 0.0, emd = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      cr += pr[k] / sr;
      cc += sc > 0.0 ? pc[k] / sc : (k == 0 ? 1.0 : 0.0);
      emd += std::abs(cr - cc);
    }
    weighted += sr * emd;
    total += sr;
  }
  if (total <= 0.0) return {0.0, true};
  return {weighted / total, false};
}

double rms_jerk(const MotionSegment& m, const std::vector<int>& channels, int start, int count) {
  require(count >= 4, ErrorKind::InvalidArgument, "jerk needs at least 4 frames");
  require(start >= 0 && start + count <= m.length(), ErrorKind::InvalidArgument, "jerk window out of range");
  require(!channels.empty(), ErrorKind::InvalidArgument, "no channels selected");
  const double f3 = m.fps * m.fps * m.fps;
  double sq = 0.0;
  int terms = 0;
  for (int t = start; t + 3 < start + count; ++t) {
    for (int ch : channels) {
      require(ch >= 0 && ch < m.channels(), ErrorKind::InvalidArgument, "channel out of range");
      const auto& f = m.frames;
      const double j = (f(t + 3, ch) - 3.0 * f(t + 2, ch) + 3.0 * f(t + 1, ch) - f(t, ch)) * f3;
      sq += j * j;
      ++terms;
    }
  }
  return std::sqrt(sq / terms);
}

double rms_jerk(const MotionSegment& m, const std::vector<int>& channels) {
  return rms_jerk(m, channels, 0, m.length());
}

double boundary_gap(const MotionSegment& m, const std::vector<int>& boundaries, const std::vector<int>& channels) {
  require(m.length() >= 2, ErrorKind::InvalidArgument, "boundary gap needs at least 2 frames");
  require(!channels.empty(), ErrorKind::InvalidArgument, "no channels selected");
  std::vector<double> speed(static_cast<std::size_t>(m.length()), 0.0);
  for (int t = 1; t < m.length(); ++t) {
    double sq = 0.0;
    for (int ch : channels) {
      const double d = m.frames(t, ch) - m.frames(t - 1, ch);
      sq += d * d;
    }
    speed[static_cast<std::size_t>(t)] = std::sqrt(sq);
  }
  double worst = 0.0;
  std::vector<bool> is_boundary(speed.size(), false);
  for (int b : boundaries) {
    require(b >= 1 && b < m.length(), ErrorKind::InvalidArgument, "boundary frame out of range");
    worst = std::max(worst, speed[static_cast<std::size_t>(b)]);
    is_boundary[static_cast<std::size_t>(b)] = true;
  }
  std::vector<double> rest;
  for (int t = 1; t < m.length(); ++t)
    if (!is_boundary[static_cast<std::size_t>(t)]) rest.push_back(speed[static_cast<std::size_t>(t)]);
  if (rest.empty()) return 0.0;
  std::sort(rest.begin(), rest.end());
  const std::size_t h = rest.size() / 2;
  const double median = rest.size() % 2 == 1 ? rest[h] : 0.5 * (rest[h - 1] + rest[h]);
  return median > 0.0 ? worst / median : 0.0;
}

std::string format_report_csv(const std::vector<ReportRow>& rows) {
  std::string out = "metric,group,value\n";
  for (const auto& r : rows) out += r.metric + "," + r.group + "," + format_double(r.value) + "\n";
  return out;
}

std::string format_report_summary(const std::vector<ReportRow>& rows, const std::string& title) {
  std::size_t wm = 6, wg = 5;
  for (const auto& r : rows) {
    wm = std::max(wm, r.metric.size());
    wg = std::max(wg, r.group.size());
  }
  auto pad = [](std::string s, std::size_t w) {
    s.resize(std::max(w, s.size()), ' ');
    return s;
  };
  std::string out = title + "\n" + pad("metric", wm) + "  " + pad("group", wg) + "  value\n";
  for (const auto& r : rows) out += pad(r.metric, wm) + "  " + pad(r.group, wg) + "  " + format_double(r.value) + "\n";
  return out;
}

}  // namespace cpd::metrics
