#pragma once

#include <cstddef>
#include <cstdint>

namespace cpd::nn {

struct RngState {
  std::uint64_t seed = 0;
  std::uint64_t counter = 0;
  bool operator==(const RngState&) const = default;
};

// Counter-based SplitMix64 generator. Draw i of a stream is a pure function of
// (seed, i), so integer draws are identical on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0, std::uint64_t counter = 0) : state_{seed, counter} {}
  explicit Rng(RngState s) : state_(s) {}

  std::uint64_t next_u64();
  // Uniform in the open interval (0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Standard normal via Box-Muller; consumes two draws.
  double normal();
  std::size_t index(std::size_t n);

  RngState state() const { return state_; }

  // Independent stream derived from this generator's seed and a stream id.
  Rng fork(std::uint64_t stream) const;

 private:
  RngState state_;
};

std::uint64_t mix64(std::uint64_t x);

}  // namespace cpd::nn
