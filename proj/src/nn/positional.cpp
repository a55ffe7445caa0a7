#include "cpd/nn/positional.hpp"

#include "cpd/error.hpp"

#include <cmath>

namespace cpd::nn {

RowVec sinusoidal_row(double position, int d) {
  require(d > 0 && d % 2 == 0, ErrorKind::InvalidArgument,
          "sinusoidal embedding width must be even, got " + std::to_string(d));
  RowVec row(d);
  for (int i = 0; i < d / 2; ++i) {
    const double freq = std::pow(10000.0, -2.0 * i / static_cast<double>(d));
    row(2 * i) = std::sin(position * freq);
    row(2 * i + 1) = std::cos(position * freq);
  }
  return row;
}

Mat sinusoidal_pe(int n, int d, double first_position) {
  require(n >= 1, ErrorKind::InvalidArgument, "sinusoidal_pe: need at least one row");
  Mat out(n, d);
  for (int t = 0; t < n; ++t) out.row(t) = sinusoidal_row(t + first_position, d);
  return out;
}

}  // namespace cpd::nn
