#pragma once

#include "cpd/nn/tensor.hpp"

namespace cpd::phase {

using nn::Mat;
using nn::RowVec;

enum class TimeMode { NormT, FrameT, MixT };

const char* time_mode_name(TimeMode mode);

// N x Q time coordinates relative to an anchor frame.
//   normT:  frames left of the anchor map linearly onto [-1, 0], frames right of it onto [0, 1].
//   frameT: signed frame offset t - anchor.
//   mixT:   columns [0, Q/2) use frameT, columns [Q/2, Q) use normT.
struct TimeWindow {
  Mat T;
  TimeMode mode = TimeMode::MixT;
  int anchor = 0;
};

TimeWindow build_time_window(int n, int q, TimeMode mode, int anchor);

// N x 3d stack of sinusoidal embeddings whose zero position sits at frame 0, at
// frame `middle` (default n / 2) and at frame n - 1.
Mat comp_pe(int n, int d, int middle = -1);

// Rows F, A, B, S of a 4 x Q matrix. The flattened latent is the row-major 4Q vector.
struct PhaseParams {
  Mat values;
  bool normalized = false;

  int q() const { return static_cast<int>(values.cols()); }
  auto F() const { return values.row(0); }
  auto A() const { return values.row(1); }
  auto B() const { return values.row(2); }
  auto S() const { return values.row(3); }

  RowVec flat() const;
  static PhaseParams from_flat(const RowVec& flat, bool normalized);
};

// Qsig[t, q] = A_q * sin(F_q * (T[t, q] - S_q)) + B_q.
Mat phase_reparameterize(const PhaseParams& p, const TimeWindow& window);

}  // namespace cpd::phase
