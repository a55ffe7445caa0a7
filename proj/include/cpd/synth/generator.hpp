#pragma once

#include "cpd/nn/rng.hpp"
#include "cpd/phase/motion.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace cpd::synth {

using phase::Mat;
using phase::MotionSegment;

// Joint order of the planar skeleton: left hip, left knee, right hip, right knee,
// left shoulder, right shoulder. Angles in radians.
inline constexpr int kJoints = 6;
inline constexpr std::array<const char*, kJoints> kJointNames = {"l_hip", "l_knee", "r_hip", "r_knee",
                                                                 "l_shoulder", "r_shoulder"};
inline constexpr std::array<double, kJoints> kRestPose = {0.0, 0.15, 0.0, 0.15, 0.25, -0.25};

// Column of the cos channel of joint j in the planar layout.
inline int joint_channel(int j) { return 4 + 2 * j; }

const std::vector<std::string>& vocabulary();
bool is_action(const std::string& name);

struct GeneratorSettings {
  double fps = 24.0;
  // Bound on |angle - rest| for idle.
  double idle_amplitude = 0.05;
  // Length of the cross-fade between consecutive actions, in frames.
  int transition_frames = 12;
};

// Parameters of one sampled action. Which fields matter depends on the action.
struct ActionInstance {
  std::string name;
  double freq = 0.0;       // Hz
  double phase = 0.0;      // rad
  double amp = 0.0;        // rad
  double amp2 = 0.0;       // rad
  double offset = 0.0;     // rad
  double speed = 0.0;      // m/s
  double turn = 0.0;       // rad/s
  double duration = 0.0;   // s
  int side = 0;            // 0 = left limb, 1 = right limb
  std::array<double, kJoints> idle_amp{};
  std::array<double, kJoints> idle_amp2{};
  std::array<double, kJoints> idle_freq{};
  std::array<double, kJoints> idle_freq2{};
  std::array<double, kJoints> idle_phase{};
};

// Kinematic state of an action at local time tau (frames, may be negative).
struct ActionState {
  std::array<double, kJoints> angles{};
  double speed = 0.0;  // m/frame
  double turn = 0.0;   // rad/frame
};

ActionInstance sample_action(const std::string& name, nn::Rng& rng, const GeneratorSettings& settings = {});
ActionState evaluate_action(const ActionInstance& a, double tau, const GeneratorSettings& settings = {});

// One action of N frames starting at the origin with heading 0.
MotionSegment gen_action(const std::string& name, int n, std::uint64_t seed, const GeneratorSettings& settings = {});

// Chains actions with C1 cross-fades of joint angles, root speed and turn rate over
// settings.transition_frames frames centered on each boundary. Consecutive identical
// actions share one instance and continue its local clock. Frame labels hold the
// active action, or "a>b" / "b<a" before / after a boundary inside a cross-fade.
MotionSegment gen_stream(const std::vector<std::pair<std::string, int>>& actions, std::uint64_t seed,
                         const GeneratorSettings& settings = {}, int n_min = 24, int n_max = 96);

// Action named by a frame label ("walk", "walk>squat" -> walk, "squat<walk" -> squat).
std::string active_action(const std::string& label);

}  // namespace cpd::synth
