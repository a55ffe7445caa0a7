#pragma once

#include "cpd/phase/motion.hpp"

#include <string>
#include <vector>

namespace cpd::metrics {

using phase::ChannelLayout;
using phase::Mat;
using phase::MotionSegment;

// Named channel selections: "all", "root" (translation and heading), "translation",
// "rotations" (every (cos, sin) pair) and "joints".
std::vector<int> channel_group(const ChannelLayout& layout, const std::string& name);

// Reference and candidate scored on the masked frames and selected channels.
struct EvalWindow {
  const MotionSegment* reference = nullptr;
  const MotionSegment* candidate = nullptr;
  std::vector<int> frames;
  std::vector<int> channels;
};

// Frames [start, start + count) over the named channel group.
EvalWindow window(const MotionSegment& reference, const MotionSegment& candidate, int start, int count,
                  const std::string& group);

// Mean over masked frames of |dv| where v is the first difference over selected channels.
double l2_vel(const EvalWindow& w);
// Mean over masked frames of the distance between the selected rotation channels.
double l2_rot(const EvalWindow& w);

struct NpssResult {
  double value = 0.0;
  // Every reference channel had zero power; value is 0 by convention.
  bool degenerate = false;
};

// Power-weighted mean over channels of the 1-Wasserstein distance between the
// normalized DFT power spectra of reference and candidate on the masked frames.
// A candidate channel with zero power counts as all mass at the DC bin.
NpssResult npss(const EvalWindow& w);

// Root mean square of the third difference times fps^3 over frames and channels.
double rms_jerk(const MotionSegment& m, const std::vector<int>& channels);
double rms_jerk(const MotionSegment& m, const std::vector<int>& channels, int start, int count);

// Largest boundary velocity norm over the median of the remaining frame velocities.
// Velocity at frame t is x_t - x_{t-1}. A zero median gives 0.
double boundary_gap(const MotionSegment& m, const std::vector<int>& boundaries, const std::vector<int>& channels);

struct ReportRow {
  std::string metric;
  std::string group;
  double value = 0.0;
};

// Machine-readable table: header "metric,group,value", one row per entry, input order.
std::string format_report_csv(const std::vector<ReportRow>& rows);
// Aligned plain-text summary of the same rows.
std::string format_report_summary(const std::vector<ReportRow>& rows, const std::string& title);

}  // namespace cpd::metrics
