#pragma once

#include "cpd/synth/generator.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace cpd::synth {

struct CorpusConfig {
  int streams = 2500;
  std::uint64_t seed = 20240501;
  double fps = 24.0;
  int n_min = 24;
  int n_max = 96;
  int min_actions = 2;
  int max_actions = 4;
  int transition_frames = 12;
  double idle_amplitude = 0.05;
  // A stream is held out when hash(seed, id) % test_modulus == 0.
  int test_modulus = 5;

  GeneratorSettings generator() const { return {fps, idle_amplitude, transition_frames}; }
  std::string describe() const;
};

struct StreamRecord {
  int id = 0;
  bool test = false;
  std::vector<std::pair<std::string, int>> actions;
  MotionSegment motion;
};

// One (X_p, X_t, X_s) triple cut from a stream. Frame offsets are stream-relative.
struct PairRecord {
  int id = 0;
  int stream = 0;
  bool test = false;
  int p_start = 0, p_len = 0;
  int s_start = 0, s_len = 0;
  int t_start = 0, t_len = 0;
  // Boundary frame inside X_t.
  int t_anchor = 0;
  std::string c_p, c_s;
};

struct Corpus {
  CorpusConfig config;
  std::vector<StreamRecord> streams;
  std::vector<PairRecord> pairs;
  // Spans dropped for being shorter than n_min.
  int skipped_spans = 0;

  int count_pairs(bool test) const;
};

bool is_test_stream(const CorpusConfig& config, int id);
// Action plan of stream id: 2..4 actions with no immediate repeats, lengths in range.
std::vector<std::pair<std::string, int>> plan_stream(const CorpusConfig& config, int id);

// Consecutive labeled spans of each stream become pairs; X_t covers the second half
// of X_p and the first half of X_s (left halves round down). Spans longer than n_max
// keep the n_max frames nearest the boundary.
std::vector<PairRecord> extract_pairs(const std::vector<StreamRecord>& streams, const CorpusConfig& config,
                                      int* skipped = nullptr);

Corpus generate_corpus(const CorpusConfig& config);

struct PairSample {
  MotionSegment x_p, x_t, x_s;
  int t_anchor = 0;
  std::vector<std::string> c_p, c_s;
};

PairSample materialize(const Corpus& corpus, const PairRecord& pair);

// Directory layout: manifest.txt, pairs.txt, streams/stream_<id>.motion.
void write_corpus(const std::filesystem::path& dir, const Corpus& corpus);
Corpus read_corpus(const std::filesystem::path& dir);

}  // namespace cpd::synth
