#pragma once

#include "cpd/nn/tensor.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace cpd::phase {

using nn::Mat;

enum class ChannelRole { RootTranslation, RootRotation, JointRotation };

struct ChannelGroup {
  ChannelRole role;
  int count;
};

// Ordered channel groups. Rotation groups hold consecutive (cos, sin) pairs.
class ChannelLayout {
 public:
  ChannelLayout() = default;
  explicit ChannelLayout(std::vector<ChannelGroup> groups);

  // Planar skeleton: root (x, y), root heading (cos, sin), 6 joints x (cos, sin).
  static ChannelLayout planar_default();

  const std::vector<ChannelGroup>& groups() const { return groups_; }
  int channels() const;
  // First channel index and width of the first group with this role; {-1, 0} if absent.
  std::pair<int, int> span(ChannelRole role) const;
  // Channel indices belonging to any of the given roles, in layout order.
  std::vector<int> indices(std::initializer_list<ChannelRole> roles) const;
  // Indices of the cos channel of every rotation pair.
  std::vector<int> rotation_pairs() const;

  std::string to_string() const;
  static ChannelLayout parse(const std::string& text);

  bool operator==(const ChannelLayout&) const;

 private:
  std::vector<ChannelGroup> groups_;
};

std::string role_name(ChannelRole role);

// How the root translation channels are stored: absolute planar positions, or
// per-frame displacement expressed in the root heading frame.
enum class RootEncoding { World, LocalDelta };

// N x E frames of one motion clip.
struct MotionSegment {
  Mat frames;
  double fps = 24.0;
  ChannelLayout layout = ChannelLayout::planar_default();
  RootEncoding root = RootEncoding::World;
  // Segment-level action tokens (may be empty).
  std::vector<std::string> tokens;
  // Optional per-frame labels; empty or one entry per frame.
  std::vector<std::string> frame_labels;

  int length() const { return static_cast<int>(frames.rows()); }
  int channels() const { return static_cast<int>(frames.cols()); }

  MotionSegment slice(int start, int count) const;
  // Validates N >= 2, matching layout width, finite entries and label count.
  void validate() const;
};

// World <-> local-delta root representation. to_features keeps rotation channels
// and replaces root positions with heading-frame displacements (frame 0 repeats
// frame 1). to_world integrates them back from the given start position.
MotionSegment to_features(const MotionSegment& world);
MotionSegment to_world(const MotionSegment& features, double start_x = 0.0, double start_y = 0.0);

// Scales root translation channels by c (or 1/c).
Mat emphasize(const MotionSegment& m, double c);
Mat deemphasize(const Mat& frames, const ChannelLayout& layout, double c);

// Text motion file; exact byte layout in docs/FORMATS.md. Values are written in
// shortest round-trip form so fp64 reloads exactly.
void write_motion(std::ostream& os, const MotionSegment& m);
MotionSegment read_motion(std::istream& is);
void save_motion(const std::filesystem::path& path, const MotionSegment& m);
MotionSegment load_motion(const std::filesystem::path& path);

}  // namespace cpd::phase
