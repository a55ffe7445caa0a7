#pragma once

#include "cpd/phase/motion.hpp"

#include <array>
#include <string>

namespace cpd::app {

// Planar skeleton used for export. Limbs swing in the vertical plane through the
// heading direction; left and right limbs sit 0.1 m either side of it.
struct Skeleton {
  double hip_height = 0.9;
  double torso = 0.5;
  double thigh = 0.45;
  double shin = 0.45;
  double arm = 0.6;
  double half_width = 0.1;
};

inline constexpr int kExportJoints = 10;
inline constexpr std::array<const char*, kExportJoints> kExportJointNames = {
    "pelvis", "neck", "l_knee", "l_ankle", "r_knee", "r_ankle", "l_shoulder", "l_hand", "r_shoulder", "r_hand"};

// N x 3J world positions (x, y, z with z up) of the export joints. Accepts world or
// local-delta root encodings of the planar layout.
phase::Mat forward_kinematics(const phase::MotionSegment& m, const Skeleton& s = {});

// Text table; exact layout in docs/FORMATS.md.
std::string format_joint_table(const phase::MotionSegment& m, const Skeleton& s = {});

}  // namespace cpd::app
