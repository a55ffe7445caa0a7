#include "cpd/phase/motion.hpp"

#include "cpd/error.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace cpd::phase {

std::string role_name(ChannelRole role) {
  switch (role) {
    case ChannelRole::RootTranslation: return "root_translation";
    case ChannelRole::RootRotation: return "root_rotation";
    case ChannelRole::JointRotation: return "joint_rotation";
  }
  return "?";
}

namespace {

ChannelRole parse_role(const std::string& s) {
  if (s == "root_translation") return ChannelRole::RootTranslation;
  if (s == "root_rotation") return ChannelRole::RootRotation;
  if (s == "joint_rotation") return ChannelRole::JointRotation;
  fail(ErrorKind::MalformedFile, "unknown channel role '" + s + "'");
}

bool is_rotation(ChannelRole r) { return r != ChannelRole::RootTranslation; }

void append_double(std::string& out, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

double parse_double(std::string_view s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  require(res.ec == std::errc() && res.ptr == s.data() + s.size(), ErrorKind::MalformedFile,
          "motion file: bad number '" + std::string(s) + "'");
  return v;
}

}  // namespace

ChannelLayout::ChannelLayout(std::vector<ChannelGroup> groups) : groups_(std::move(groups)) {
  for (const auto& g : groups_) {
    require(g.count > 0, ErrorKind::InvalidArgument, "channel group must be non-empty");
    require(!is_rotation(g.role) || g.count % 2 == 0, ErrorKind::InvalidArgument,
            "rotation channel groups hold (cos, sin) pairs");
  }
}

ChannelLayout ChannelLayout::planar_default() {
  return ChannelLayout({{ChannelRole::RootTranslation, 2}, {ChannelRole::RootRotation, 2}, {ChannelRole::JointRotation, 12}});
}

int ChannelLayout::channels() const {
  int n = 0;
  for (const auto& g : groups_) n += g.count;
  return n;
}

std::pair<int, int> ChannelLayout::span(ChannelRole role) const {
  int off = 0;
  for (const auto& g : groups_) {
    if (g.role == role) return {off, g.count};
    off += g.count;
  }
  return {-1, 0};
}

std::vector<int> ChannelLayout::indices(std::initializer_list<ChannelRole> roles) const {
  std::vector<int> out;
  int off = 0;
  for (const auto& g : groups_) {
    for (ChannelRole r : roles) {
      if (g.role == r) {
        for (int i = 0; i < g.count; ++i) out.push_back(off + i);
        break;
      }
    }
    off += g.count;
  }
  return out;
}

std::vector<int> ChannelLayout::rotation_pairs() const {
  std::vector<int> out;
  int off = 0;
  for (const auto& g : groups_) {
    if (is_rotation(g.role))
      for (int i = 0; i < g.count; i += 2) out.push_back(off + i);
    off += g.count;
  }
  return out;
}

std::string ChannelLayout::to_string() const {
  std::string s;
  for (std::size_t i = 0; i < groups_.size(); ++i) {
    if (i) s += ' ';
    s += role_name(groups_[i].role) + ":" + std::to_string(groups_[i].count);
  }
  return s;
}

ChannelLayout ChannelLayout::parse(const std::string& text) {
  std::istringstream is(text);
  std::string item;
  std::vector<ChannelGroup> groups;
  while (is >> item) {
    const auto colon = item.find(':');
    require(colon != std::string::npos, ErrorKind::MalformedFile, "layout entry '" + item + "' lacks a count");
    groups.push_back({parse_role(item.substr(0, colon)), static_cast<int>(parse_double(item.substr(colon + 1)))});
  }
  require(!groups.empty(), ErrorKind::MalformedFile, "empty channel layout");
  return ChannelLayout(std::move(groups));
}

bool ChannelLayout::operator==(const ChannelLayout& o) const {
  if (groups_.size() != o.groups_.size()) return false;
  for (std::size_t i = 0; i < groups_.size(); ++i)
    if (groups_[i].role != o.groups_[i].role || groups_[i].count != o.groups_[i].count) return false;
  return true;
}

MotionSegment MotionSegment::slice(int start, int count) const {
  require(start >= 0 && count >= 0 && start + count <= length(), ErrorKind::InvalidArgument,
          "slice [" + std::to_string(start) + ", " + std::to_string(start + count) + ") outside " +
              std::to_string(length()) + " frames");
  MotionSegment out = *this;
  out.frames = frames.middleRows(start, count);
  if (!frame_labels.empty())
    out.frame_labels.assign(frame_labels.begin() + start, frame_labels.begin() + start + count);
  return out;
}

void MotionSegment::validate() const {
  require(length() >= 2, ErrorKind::InvalidArgument, "motion segment needs at least 2 frames");
  require(channels() == layout.channels(), ErrorKind::ShapeMismatch,
          "motion has " + std::to_string(channels()) + " channels, layout declares " +
              std::to_string(layout.channels()));
  require(frames.allFinite(), ErrorKind::NumericalFailure, "motion segment contains non-finite values");
  require(fps > 0.0, ErrorKind::InvalidArgument, "fps must be positive");
  require(frame_labels.empty() || static_cast<int>(frame_labels.size()) == length(), ErrorKind::ShapeMismatch,
          "frame label count does not match frame count");
}

MotionSegment to_features(const MotionSegment& world) {
  require(world.root == RootEncoding::World, ErrorKind::InvalidArgument, "to_features expects world root positions");
  world.validate();
  auto [tx, tn] = world.layout.span(ChannelRole::RootTranslation);
  auto [hx, hn] = world.layout.span(ChannelRole::RootRotation);
  MotionSegment out = world;
  out.root = RootEncoding::LocalDelta;
  if (tx < 0) return out;
  require(tn == 2 && hn == 2, ErrorKind::InvalidArgument, "root translation needs a planar heading pair");
  const Mat& f = world.frames;
  for (int t = 1; t < world.length(); ++t) {
    const double h = std::atan2(f(t, hx + 1), f(t, hx));
    const double dx = f(t, tx) - f(t - 1, tx);
    const double dy = f(t, tx + 1) - f(t - 1, tx + 1);
    out.frames(t, tx) = std::cos(h) * dx + std::sin(h) * dy;
    out.frames(t, tx + 1) = -std::sin(h) * dx + std::cos(h) * dy;
  }
  out.frames(0, tx) = out.frames(1, tx);
  out.frames(0, tx + 1) = out.frames(1, tx + 1);
  return out;
}

MotionSegment to_world(const MotionSegment& features, double start_x, double start_y) {
  require(features.root == RootEncoding::LocalDelta, ErrorKind::InvalidArgument, "to_world expects local deltas");
  auto [tx, tn] = features.layout.span(ChannelRole::RootTranslation);
  auto [hx, hn] = features.layout.span(ChannelRole::RootRotation);
  MotionSegment out = features;
  out.root = RootEncoding::World;
  if (tx < 0) return out;
  require(tn == 2 && hn == 2, ErrorKind::InvalidArgument, "root translation needs a planar heading pair");
  const Mat& f = features.frames;
  out.frames(0, tx) = start_x;
  out.frames(0, tx + 1) = start_y;
  for (int t = 1; t < features.length(); ++t) {
    const double h = std::atan2(f(t, hx + 1), f(t, hx));
    const double lx = f(t, tx);
    const double ly = f(t, tx + 1);
    out.frames(t, tx) = out.frames(t - 1, tx) + std::cos(h) * lx - std::sin(h) * ly;
    out.frames(t, tx + 1) = out.frames(t - 1, tx + 1) + std::sin(h) * lx + std::cos(h) * ly;
  }
  return out;
}

Mat emphasize(const MotionSegment& m, double c) {
  Mat out = m.frames;
  auto [tx, tn] = m.layout.span(ChannelRole::RootTranslation);
  if (tx >= 0) out.middleCols(tx, tn) *= c;
  return out;
}

Mat deemphasize(const Mat& frames, const ChannelLayout& layout, double c) {
  Mat out = frames;
  auto [tx, tn] = layout.span(ChannelRole::RootTranslation);
  if (tx >= 0) out.middleCols(tx, tn) /= c;
  return out;
}

void write_motion(std::ostream& os, const MotionSegment& m) {
  m.validate();
  std::string out;
  out.reserve(static_cast<std::size_t>(m.frames.size()) * 20 + 256);
  out += "cpd-motion 1\nfps ";
  append_double(out, m.fps);
  out += "\nframes " + std::to_string(m.length());
  out += "\nlayout " + m.layout.to_string();
  out += std::string("\nroot ") + (m.root == RootEncoding::World ? "world" : "local_delta");
  out += "\ntokens";
  for (const auto& t : m.tokens) out += ' ' + t;
  out += "\nframe_labels " + std::string(m.frame_labels.empty() ? "0" : "1");
  out += "\ndata\n";
  for (int t = 0; t < m.length(); ++t) {
    for (int c = 0; c < m.channels(); ++c) {
      if (c) out += ' ';
      append_double(out, m.frames(t, c));
    }
    if (!m.frame_labels.empty()) out += " | " + m.frame_labels[t];
    out += '\n';
  }
  os << out;
}

namespace {

std::string expect_line(std::istream& is, const std::string& key) {
  std::string line;
  require(static_cast<bool>(std::getline(is, line)), ErrorKind::MalformedFile, "motion file: missing '" + key + "'");
  if (line == key) return {};
  require(line.rfind(key + " ", 0) == 0, ErrorKind::MalformedFile,
          "motion file: expected '" + key + "', got '" + line + "'");
  return line.substr(key.size() + 1);
}

}  // namespace

MotionSegment read_motion(std::istream& is) {
  std::string line;
  require(static_cast<bool>(std::getline(is, line)) && line == "cpd-motion 1", ErrorKind::MalformedFile,
          "motion file: bad header");
  MotionSegment m;
  m.fps = parse_double(expect_line(is, "fps"));
  const int n = static_cast<int>(parse_double(expect_line(is, "frames")));
  m.layout = ChannelLayout::parse(expect_line(is, "layout"));
  const std::string root = expect_line(is, "root");
  require(root == "world" || root == "local_delta", ErrorKind::MalformedFile, "motion file: bad root encoding");
  m.root = root == "world" ? RootEncoding::World : RootEncoding::LocalDelta;
  {
    std::istringstream ts(expect_line(is, "tokens"));
    std::string tok;
    while (ts >> tok) m.tokens.push_back(tok);
  }
  const bool labels = expect_line(is, "frame_labels") == "1";
  expect_line(is, "data");
  const int e = m.layout.channels();
  m.frames.resize(n, e);
  for (int t = 0; t < n; ++t) {
    require(static_cast<bool>(std::getline(is, line)), ErrorKind::MalformedFile, "motion file: truncated data");
    std::string_view sv(line);
    for (int c = 0; c < e; ++c) {
      while (!sv.empty() && sv.front() == ' ') sv.remove_prefix(1);
      const auto end = sv.find(' ');
      m.frames(t, c) = parse_double(sv.substr(0, end));
      sv.remove_prefix(end == std::string_view::npos ? sv.size() : end);
    }
    if (labels) {
      const auto bar = sv.find(" | ");
      require(bar != std::string_view::npos, ErrorKind::MalformedFile, "motion file: missing frame label");
      m.frame_labels.emplace_back(sv.substr(bar + 3));
    } else {
      require(sv.find_first_not_of(' ') == std::string_view::npos, ErrorKind::MalformedFile,
              "motion file: extra values in row " + std::to_string(t));
    }
  }
  m.validate();
  return m;
}

void save_motion(const std::filesystem::path& path, const MotionSegment& m) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(os), ErrorKind::InvalidArgument, "cannot write " + path.string());
  write_motion(os, m);
}

MotionSegment load_motion(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), ErrorKind::InvalidArgument, "cannot read motion file " + path.string());
  return read_motion(is);
}

}  // namespace cpd::phase
