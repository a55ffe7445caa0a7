#include "cpd/synth/corpus.hpp"

#include "cpd/error.hpp"
#include "cpd/text.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace cpd::synth {

std::string CorpusConfig::describe() const {
  std::string s;
  s += "streams=" + std::to_string(streams) + "\n";
  s += "seed=" + std::to_string(seed) + "\n";
  s += "fps=" + format_double(fps) + "\n";
  s += "n_min=" + std::to_string(n_min) + "\n";
  s += "n_max=" + std::to_string(n_max) + "\n";
  s += "min_actions=" + std::to_string(min_actions) + "\n";
  s += "max_actions=" + std::to_string(max_actions) + "\n";
  s += "transition_frames=" + std::to_string(transition_frames) + "\n";
  s += "idle_amplitude=" + format_double(idle_amplitude) + "\n";
  s += "test_modulus=" + std::to_string(test_modulus) + "\n";
  return s;
}

int Corpus::count_pairs(bool test) const {
  int n = 0;
  for (const auto& p : pairs) n += p.test == test;
  return n;
}

bool is_test_stream(const CorpusConfig& config, int id) {
  return nn::mix64(config.seed ^ nn::mix64(static_cast<std::uint64_t>(id) + 0x5851f42d4c957f2dULL)) %
             static_cast<std::uint64_t>(config.test_modulus) ==
         0;
}

std::vector<std::pair<std::string, int>> plan_stream(const CorpusConfig& config, int id) {
  nn::Rng rng = nn::Rng(config.seed).fork(2 * static_cast<std::uint64_t>(id));
  const auto& vocab = vocabulary();
  const int count = config.min_actions +
                    static_cast<int>(rng.index(static_cast<std::size_t>(config.max_actions - config.min_actions + 1)));
  std::vector<std::pair<std::string, int>> plan;
  for (int i = 0; i < count; ++i) {
    std::string name;
    do {
      name = vocab[rng.index(vocab.size())];
    } while (!plan.empty() && name == plan.back().first);
    const int len = config.n_min + static_cast<int>(rng.index(static_cast<std::size_t>(config.n_max - config.n_min + 1)));
    plan.emplace_back(name, len);
  }
  return plan;
}

std::vector<PairRecord> extract_pairs(const std::vector<StreamRecord>& streams, const CorpusConfig& config,
                                      int* skipped) {
  struct Span {
    std::string action;
    int start, len;
  };
  std::vector<PairRecord> out;
  int dropped = 0;
  for (const auto& s : streams) {
    require(static_cast<int>(s.motion.frame_labels.size()) == s.motion.length(), ErrorKind::InvalidArgument,
            "stream " + std::to_string(s.id) + " carries no frame labels");
    std::vector<Span> spans;
    for (int t = 0; t < s.motion.length(); ++t) {
      std::string a = active_action(s.motion.frame_labels[t]);
      if (spans.empty() || spans.back().action != a)
        spans.push_back({std::move(a), t, 1});
      else
        ++spans.back().len;
    }
    for (const auto& sp : spans) dropped += sp.len < config.n_min;
    for (std::size_t i = 0; i + 1 < spans.size(); ++i) {
      const Span& a = spans[i];
      const Span& b = spans[i + 1];
      if (a.len < config.n_min || b.len < config.n_min) continue;
      PairRecord p;
      p.id = static_cast<int>(out.size());
      p.stream = s.id;
      p.test = s.test;
      p.p_len = std::min(a.len, config.n_max);
      p.p_start = a.start + a.len - p.p_len;
      p.s_start = b.start;
      p.s_len = std::min(b.len, config.n_max);
      p.t_start = p.p_start + p.p_len / 2;
      p.t_len = p.s_start + p.s_len / 2 - p.t_start;
      p.t_anchor = p.s_start - p.t_start;
      p.c_p = a.action;
      p.c_s = b.action;
      out.push_back(std::move(p));
    }
  }
  if (skipped) *skipped = dropped;
  return out;
}

Corpus generate_corpus(const CorpusConfig& config) {
  require(config.streams > 0 && config.min_actions >= 2 && config.max_actions >= config.min_actions &&
              config.test_modulus >= 2 && config.n_min >= 2 && config.n_max >= config.n_min,
          ErrorKind::InvalidArgument, "invalid corpus configuration");
  Corpus c;
  c.config = config;
  const nn::Rng root(config.seed);
  for (int id = 0; id < config.streams; ++id) {
    StreamRecord s;
    s.id = id;
    s.test = is_test_stream(config, id);
    s.actions = plan_stream(config, id);
    s.motion = gen_stream(s.actions, root.fork(2 * static_cast<std::uint64_t>(id) + 1).next_u64(),
                          config.generator(), config.n_min, config.n_max);
    c.streams.push_back(std::move(s));
  }
  c.pairs = extract_pairs(c.streams, config, &c.skipped_spans);
  return c;
}

PairSample materialize(const Corpus& corpus, const PairRecord& pair) {
  require(pair.stream >= 0 && pair.stream < static_cast<int>(corpus.streams.size()), ErrorKind::InvalidArgument,
          "pair references unknown stream " + std::to_string(pair.stream));
  const MotionSegment& m = corpus.streams[pair.stream].motion;
  PairSample s;
  s.x_p = m.slice(pair.p_start, pair.p_len);
  s.x_t = m.slice(pair.t_start, pair.t_len);
  s.x_s = m.slice(pair.s_start, pair.s_len);
  s.x_p.tokens = {pair.c_p};
  s.x_s.tokens = {pair.c_s};
  s.x_t.tokens = {};
  s.t_anchor = pair.t_anchor;
  s.c_p = {pair.c_p};
  s.c_s = {pair.c_s};
  return s;
}

namespace {

std::string stream_file(int id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "stream_%05d.motion", id);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(os), ErrorKind::InvalidArgument, "cannot write " + path.string());
  os << text;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), ErrorKind::MalformedFile, "cannot read " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

void write_corpus(const std::filesystem::path& dir, const Corpus& corpus) {
  std::filesystem::create_directories(dir / "streams");
  int train_streams = 0;
  for (const auto& s : corpus.streams) {
    train_streams += !s.test;
    phase::save_motion(dir / "streams" / stream_file(s.id), s.motion);
  }
  std::string pairs = "# pair stream split p_start p_len s_start s_len t_start t_len t_anchor c_p c_s\n";
  for (const auto& p : corpus.pairs) {
    pairs += std::to_string(p.id) + ' ' + std::to_string(p.stream) + ' ' + (p.test ? "test" : "train");
    for (int v : {p.p_start, p.p_len, p.s_start, p.s_len, p.t_start, p.t_len, p.t_anchor})
      pairs += ' ' + std::to_string(v);
    pairs += ' ' + p.c_p + ' ' + p.c_s + '\n';
  }
  write_text(dir / "pairs.txt", pairs);

  std::string manifest = "format=cpd-corpus 1\n";
  manifest += "vocabulary=" + join(vocabulary(), " ") + "\n";
  manifest += "layout=" + phase::ChannelLayout::planar_default().to_string() + "\n";
  manifest += corpus.config.describe();
  manifest += "train_streams=" + std::to_string(train_streams) + "\n";
  manifest += "test_streams=" + std::to_string(static_cast<int>(corpus.streams.size()) - train_streams) + "\n";
  manifest += "train_pairs=" + std::to_string(corpus.count_pairs(false)) + "\n";
  manifest += "test_pairs=" + std::to_string(corpus.count_pairs(true)) + "\n";
  manifest += "skipped_spans=" + std::to_string(corpus.skipped_spans) + "\n";
  write_text(dir / "manifest.txt", manifest);
}

Corpus read_corpus(const std::filesystem::path& dir) {
  require(std::filesystem::exists(dir / "manifest.txt"), ErrorKind::MalformedFile,
          "no corpus manifest in " + dir.string());
  const auto kv = parse_key_values(read_text(dir / "manifest.txt"), "manifest.txt");
  auto get = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    require(it != kv.end(), ErrorKind::MalformedFile, std::string("corpus manifest lacks '") + key + "'");
    return it->second;
  };
  require(get("format") == "cpd-corpus 1", ErrorKind::MalformedFile, "unsupported corpus format");
  require(get("vocabulary") == join(vocabulary(), " "), ErrorKind::MalformedFile, "corpus vocabulary differs");
  Corpus c;
  CorpusConfig& cfg = c.config;
  cfg.streams = static_cast<int>(parse_int(get("streams"), "streams"));
  cfg.seed = static_cast<std::uint64_t>(parse_int(get("seed"), "seed"));
  cfg.fps = parse_double(get("fps"), "fps");
  cfg.n_min = static_cast<int>(parse_int(get("n_min"), "n_min"));
  cfg.n_max = static_cast<int>(parse_int(get("n_max"), "n_max"));
  cfg.min_actions = static_cast<int>(parse_int(get("min_actions"), "min_actions"));
  cfg.max_actions = static_cast<int>(parse_int(get("max_actions"), "max_actions"));
  cfg.transition_frames = static_cast<int>(parse_int(get("transition_frames"), "transition_frames"));
  cfg.idle_amplitude = parse_double(get("idle_amplitude"), "idle_amplitude");
  cfg.test_modulus = static_cast<int>(parse_int(get("test_modulus"), "test_modulus"));
  c.skipped_spans = static_cast<int>(parse_int(get("skipped_spans"), "skipped_spans"));

  for (int id = 0; id < cfg.streams; ++id) {
    StreamRecord s;
    s.id = id;
    s.test = is_test_stream(cfg, id);
    s.actions = plan_stream(cfg, id);
    s.motion = phase::load_motion(dir / "streams" / stream_file(id));
    c.streams.push_back(std::move(s));
  }

  std::istringstream pairs(read_text(dir / "pairs.txt"));
  std::string line;
  while (std::getline(pairs, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto w = words(line);
    require(w.size() == 12, ErrorKind::MalformedFile, "pairs.txt: malformed row '" + line + "'");
    PairRecord p;
    p.id = static_cast<int>(parse_int(w[0], "pair id"));
    p.stream = static_cast<int>(parse_int(w[1], "stream id"));
    p.test = w[2] == "test";
    int* fields[] = {&p.p_start, &p.p_len, &p.s_start, &p.s_len, &p.t_start, &p.t_len, &p.t_anchor};
    for (int i = 0; i < 7; ++i) *fields[i] = static_cast<int>(parse_int(w[3 + i], "pair offset"));
    p.c_p = w[10];
    p.c_s = w[11];
    require(p.stream >= 0 && p.stream < cfg.streams && c.streams[p.stream].test == p.test,
            ErrorKind::MalformedFile, "pairs.txt: row " + w[0] + " disagrees with the stream split");
    c.pairs.push_back(std::move(p));
  }
  require(c.count_pairs(false) == parse_int(get("train_pairs"), "train_pairs") &&
              c.count_pairs(true) == parse_int(get("test_pairs"), "test_pairs"),
          ErrorKind::MalformedFile, "pair counts disagree with the manifest");
  return c;
}

}  // namespace cpd::synth
