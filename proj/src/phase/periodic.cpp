#include "cpd/phase/periodic.hpp"

#include "cpd/error.hpp"
#include "cpd/nn/positional.hpp"

#include <cmath>
#include <string>

namespace cpd::phase {

const char* time_mode_name(TimeMode mode) {
  switch (mode) {
    case TimeMode::NormT: return "normT";
    case TimeMode::FrameT: return "frameT";
    case TimeMode::MixT: return "mixT";
  }
  return "?";
}

namespace {

double norm_t(int t, int n, int anchor) {
  if (t < anchor) return static_cast<double>(t - anchor) / anchor;
  if (t > anchor) return static_cast<double>(t - anchor) / (n - 1 - anchor);
  return 0.0;
}

}  // namespace

TimeWindow build_time_window(int n, int q, TimeMode mode, int anchor) {
  require(n >= 1 && q >= 1, ErrorKind::InvalidArgument, "time window needs N >= 1 and Q >= 1");
  require(anchor >= 0 && anchor <= n - 1, ErrorKind::InvalidArgument,
          "anchor " + std::to_string(anchor) + " outside [0, " + std::to_string(n - 1) + "]");
  require(mode != TimeMode::MixT || q % 2 == 0, ErrorKind::InvalidArgument, "mixT needs an even Q");
  TimeWindow w;
  w.mode = mode;
  w.anchor = anchor;
  w.T.resize(n, q);
  const int frame_cols = mode == TimeMode::FrameT ? q : mode == TimeMode::MixT ? q / 2 : 0;
  for (int t = 0; t < n; ++t) {
    const double ft = t - anchor;
    const double nt = norm_t(t, n, anchor);
    for (int c = 0; c < q; ++c) w.T(t, c) = c < frame_cols ? ft : nt;
  }
  return w;
}

Mat comp_pe(int n, int d, int middle) {
  require(n >= 1, ErrorKind::InvalidArgument, "comp_pe needs N >= 1");
  if (middle < 0) middle = n / 2;
  Mat out(n, 3 * d);
  out.leftCols(d) = nn::sinusoidal_pe(n, d, 0.0);
  out.middleCols(d, d) = nn::sinusoidal_pe(n, d, -static_cast<double>(middle));
  out.rightCols(d) = nn::sinusoidal_pe(n, d, -static_cast<double>(n - 1));
  return out;
}

RowVec PhaseParams::flat() const {
  return Eigen::Map<const RowVec>(values.data(), values.size());
}

PhaseParams PhaseParams::from_flat(const RowVec& flat, bool normalized) {
  require(flat.size() % 4 == 0, ErrorKind::ShapeMismatch, "latent size must be a multiple of 4");
  PhaseParams p;
  p.values = Eigen::Map<const Mat>(flat.data(), 4, flat.size() / 4);
  p.normalized = normalized;
  return p;
}

Mat phase_reparameterize(const PhaseParams& p, const TimeWindow& window) {
  require(p.values.rows() == 4 && p.values.cols() == window.T.cols(), ErrorKind::ShapeMismatch,
          "phase params have Q=" + std::to_string(p.values.cols()) + ", time window has Q=" +
              std::to_string(window.T.cols()));
  require(p.values.allFinite(), ErrorKind::NumericalFailure, "phase params contain non-finite values");
  const Mat& T = window.T;
  Mat out(T.rows(), T.cols());
  for (Eigen::Index t = 0; t < T.rows(); ++t)
    for (Eigen::Index q = 0; q < T.cols(); ++q)
      out(t, q) = p.values(1, q) * std::sin(p.values(0, q) * (T(t, q) - p.values(3, q))) + p.values(2, q);
  return out;
}

}  // namespace cpd::phase
