#pragma once

#include "cpd/nn/tensor.hpp"

namespace cpd::nn {

// Standard sinusoidal embedding, N x d with interleaved columns:
//   out[t, 2i]   = sin(t / 10000^(2i/d))
//   out[t, 2i+1] = cos(t / 10000^(2i/d))
// Rows may start at a signed offset: row r holds position r + first_position.
Mat sinusoidal_pe(int n, int d, double first_position = 0.0);

// Embedding of a single (possibly fractional) position.
RowVec sinusoidal_row(double position, int d);

}  // namespace cpd::nn
