#include "cpd/app/kinematics.hpp"

#include "cpd/error.hpp"
#include "cpd/text.hpp"

#include <cmath>

namespace cpd::app {

using phase::ChannelLayout;
using phase::Mat;

phase::Mat forward_kinematics(const phase::MotionSegment& m, const Skeleton& s) {
  require(m.layout == ChannelLayout::planar_default(), ErrorKind::ShapeMismatch,
          "export expects the planar channel layout");
  const phase::MotionSegment w = m.root == phase::RootEncoding::World ? m : phase::to_world(m);
  Mat out(w.length(), 3 * kExportJoints);
  auto angle = [&](int t, int c) { return std::atan2(w.frames(t, c + 1), w.frames(t, c)); };
  for (int t = 0; t < w.length(); ++t) {
    const double h = angle(t, 2);
    const Eigen::Vector3d fwd(std::cos(h), std::sin(h), 0.0);
    const Eigen::Vector3d left(-std::sin(h), std::cos(h), 0.0);
    const Eigen::Vector3d up(0.0, 0.0, 1.0);
    const Eigen::Vector3d pelvis(w.frames(t, 0), w.frames(t, 1), s.hip_height);
    const Eigen::Vector3d neck = pelvis + s.torso * up;
    // Angle 0 hangs straight down; positive swings forward.
    auto limb = [&](double a) -> Eigen::Vector3d { return std::sin(a) * fwd - std::cos(a) * up; };
    std::array<Eigen::Vector3d, kExportJoints> j;
    j[0] = pelvis;
    j[1] = neck;
    for (int side = 0; side < 2; ++side) {
      const double sign = side == 0 ? 1.0 : -1.0;
      const Eigen::Vector3d hip = pelvis + sign * s.half_width * left;
      const double a_hip = angle(t, 4 + 4 * side);
      const double a_knee = angle(t, 6 + 4 * side);
      j[2 + 2 * side] = hip + s.thigh * limb(a_hip);
      j[3 + 2 * side] = j[2 + 2 * side] + s.shin * limb(a_hip - a_knee);
      const Eigen::Vector3d shoulder = neck + sign * s.half_width * left;
      j[6 + 2 * side] = shoulder;
      j[7 + 2 * side] = shoulder + s.arm * limb(angle(t, 12 + 2 * side));
    }
    for (int k = 0; k < kExportJoints; ++k) out.block(t, 3 * k, 1, 3) = j[static_cast<std::size_t>(k)].transpose();
  }
  return out;
}

std::string format_joint_table(const phase::MotionSegment& m, const Skeleton& s) {
  const Mat p = forward_kinematics(m, s);
  std::string out = "cpd-joints 1\nfps " + format_double(m.fps) + "\nframes " + std::to_string(p.rows()) +
                    "\njoints " + std::to_string(kExportJoints);
  for (const char* name : kExportJointNames) out += std::string(" ") + name;
  out += "\n";
  for (Eigen::Index t = 0; t < p.rows(); ++t) {
    for (Eigen::Index c = 0; c < p.cols(); ++c) {
      if (c > 0) out += ' ';
      out += format_double(p(t, c));
    }
    out += "\n";
  }
  return out;
}

}  // namespace cpd::app
