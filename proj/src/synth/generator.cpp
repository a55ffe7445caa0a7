#include "cpd/synth/generator.hpp"

#include "cpd/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace cpd::synth {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double smoothstep(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * (3.0 - 2.0 * x);
}

ActionState mix(const ActionState& a, const ActionState& b, double w) {
  ActionState out;
  for (int j = 0; j < kJoints; ++j) out.angles[j] = (1.0 - w) * a.angles[j] + w * b.angles[j];
  out.speed = (1.0 - w) * a.speed + w * b.speed;
  out.turn = (1.0 - w) * a.turn + w * b.turn;
  return out;
}

}  // namespace

const std::vector<std::string>& vocabulary() {
  static const std::vector<std::string> v = {"walk", "wave", "squat", "spin", "idle", "reach"};
  return v;
}

bool is_action(const std::string& name) {
  const auto& v = vocabulary();
  return std::find(v.begin(), v.end(), name) != v.end();
}

ActionInstance sample_action(const std::string& name, nn::Rng& rng, const GeneratorSettings& settings) {
  require(is_action(name), ErrorKind::InvalidArgument, "unknown action template '" + name + "'");
  ActionInstance a;
  a.name = name;
  if (name == "walk") {
    a.freq = rng.uniform(0.8, 1.3);
    a.phase = rng.uniform(0.0, kTwoPi);
    a.amp = rng.uniform(0.35, 0.6);
    a.amp2 = rng.uniform(0.3, 0.6);
    a.speed = rng.uniform(0.9, 1.5);
    a.turn = rng.uniform(-0.1, 0.1);
  } else if (name == "wave") {
    a.side = static_cast<int>(rng.index(2));
    a.freq = rng.uniform(1.5, 2.5);
    a.phase = rng.uniform(0.0, kTwoPi);
    a.amp = rng.uniform(0.25, 0.45);
    a.offset = rng.uniform(1.3, 1.7);
  } else if (name == "squat") {
    a.freq = rng.uniform(0.35, 0.6);
    a.amp = rng.uniform(0.9, 1.3);
  } else if (name == "spin") {
    const double sign = rng.index(2) == 0 ? 1.0 : -1.0;
    a.turn = sign * rng.uniform(1.8, 3.2);
    a.offset = rng.uniform(0.9, 1.3);
  } else if (name == "idle") {
    for (int j = 0; j < kJoints; ++j) {
      a.idle_amp[j] = rng.uniform(0.1, 0.4) * settings.idle_amplitude;
      a.idle_amp2[j] = rng.uniform(0.1, 0.4) * settings.idle_amplitude;
      a.idle_freq[j] = rng.uniform(0.1, 0.5);
      a.idle_freq2[j] = rng.uniform(0.1, 0.5);
      a.idle_phase[j] = rng.uniform(0.0, kTwoPi);
    }
  } else {  // reach
    a.side = static_cast<int>(rng.index(2));
    a.offset = rng.uniform(1.0, 1.8);
    a.duration = rng.uniform(1.0, 2.5);
  }
  return a;
}

ActionState evaluate_action(const ActionInstance& a, double tau, const GeneratorSettings& settings) {
  ActionState st;
  st.angles = kRestPose;
  const double s = tau / settings.fps;
  const std::string& n = a.name;
  if (n == "walk") {
    const double w = kTwoPi * a.freq * s + a.phase;
    st.angles[0] = a.amp * std::sin(w);
    st.angles[2] = -a.amp * std::sin(w);
    st.angles[1] = kRestPose[1] + 0.5 * a.amp2 * (1.0 - std::cos(w));
    st.angles[3] = kRestPose[3] + 0.5 * a.amp2 * (1.0 + std::cos(w));
    st.angles[4] = kRestPose[4] - 0.5 * a.amp * std::sin(w);
    st.angles[5] = kRestPose[5] + 0.5 * a.amp * std::sin(w);
    st.speed = a.speed / settings.fps;
    st.turn = a.turn / settings.fps;
  } else if (n == "wave") {
    const double sign = a.side == 0 ? 1.0 : -1.0;
    st.angles[4 + a.side] = sign * (a.offset + a.amp * std::sin(kTwoPi * a.freq * s + a.phase));
  } else if (n == "squat") {
    const double c = 0.5 * (1.0 - std::cos(kTwoPi * a.freq * s));
    st.angles[0] = 0.6 * a.amp * c;
    st.angles[2] = 0.6 * a.amp * c;
    st.angles[1] = kRestPose[1] + a.amp * c;
    st.angles[3] = kRestPose[3] + a.amp * c;
    st.angles[4] = kRestPose[4] + 0.4 * a.amp * c;
    st.angles[5] = kRestPose[5] - 0.4 * a.amp * c;
  } else if (n == "spin") {
    st.angles[4] = a.offset;
    st.angles[5] = -a.offset;
    st.turn = a.turn / settings.fps;
  } else if (n == "idle") {
    for (int j = 0; j < kJoints; ++j)
      st.angles[j] += a.idle_amp[j] * std::sin(kTwoPi * a.idle_freq[j] * s + a.idle_phase[j]) +
                      a.idle_amp2[j] * std::sin(kTwoPi * a.idle_freq2[j] * s + 2.0 * a.idle_phase[j]);
  } else {  // reach
    const double sign = a.side == 0 ? 1.0 : -1.0;
    const double r = smoothstep(s / a.duration);
    st.angles[4 + a.side] = (1.0 - r) * kRestPose[4 + a.side] + r * sign * a.offset;
    st.angles[0] = 0.2 * r;
    st.angles[2] = 0.2 * r;
  }
  return st;
}

MotionSegment gen_action(const std::string& name, int n, std::uint64_t seed, const GeneratorSettings& settings) {
  return gen_stream({{name, n}}, seed, settings, std::min(n, 24), std::max(n, 96));
}

MotionSegment gen_stream(const std::vector<std::pair<std::string, int>>& actions, std::uint64_t seed,
                         const GeneratorSettings& settings, int n_min, int n_max) {
  require(!actions.empty(), ErrorKind::InvalidArgument, "stream needs at least one action");
  const int k = static_cast<int>(actions.size());
  std::vector<ActionInstance> inst(k);
  std::vector<int> start(k + 1, 0), origin(k);
  nn::Rng base(seed);
  for (int i = 0; i < k; ++i) {
    const auto& [name, len] = actions[i];
    require(len >= n_min && len <= n_max && len >= 2, ErrorKind::InvalidArgument,
            "action length " + std::to_string(len) + " outside [" + std::to_string(n_min) + ", " +
                std::to_string(n_max) + "]");
    start[i + 1] = start[i] + len;
    if (i > 0 && name == actions[i - 1].first) {
      inst[i] = inst[i - 1];
      origin[i] = origin[i - 1];
    } else {
      nn::Rng r = base.fork(static_cast<std::uint64_t>(i));
      inst[i] = sample_action(name, r, settings);
      origin[i] = start[i];
    }
  }

  const int total = start[k];
  const int window = settings.transition_frames;
  const int half = window / 2;
  MotionSegment m;
  m.fps = settings.fps;
  m.root = phase::RootEncoding::World;
  m.frames.resize(total, 4 + 2 * kJoints);
  m.frame_labels.resize(total);
  for (const auto& a : actions) m.tokens.push_back(a.first);

  double x = 0.0, y = 0.0, h = 0.0;
  int seg = 0;
  for (int t = 0; t < total; ++t) {
    while (t >= start[seg + 1]) ++seg;
    const std::string& cur = actions[seg].first;
    ActionState st = evaluate_action(inst[seg], t - origin[seg], settings);
    std::string label = cur;
    if (window > 0 && seg > 0 && actions[seg - 1].first != cur && t < start[seg] + half) {
      const double w = smoothstep((t - (start[seg] - half) + 0.5) / window);
      st = mix(evaluate_action(inst[seg - 1], t - origin[seg - 1], settings), st, w);
      label = cur + "<" + actions[seg - 1].first;
    } else if (window > 0 && seg + 1 < k && actions[seg + 1].first != cur && t >= start[seg + 1] - half) {
      const double w = smoothstep((t - (start[seg + 1] - half) + 0.5) / window);
      st = mix(st, evaluate_action(inst[seg + 1], t - origin[seg + 1], settings), w);
      label = cur + ">" + actions[seg + 1].first;
    }
    if (t > 0) {
      h += st.turn;
      x += st.speed * std::cos(h);
      y += st.speed * std::sin(h);
    }
    m.frames(t, 0) = x;
    m.frames(t, 1) = y;
    m.frames(t, 2) = std::cos(h);
    m.frames(t, 3) = std::sin(h);
    for (int j = 0; j < kJoints; ++j) {
      m.frames(t, joint_channel(j)) = std::cos(st.angles[j]);
      m.frames(t, joint_channel(j) + 1) = std::sin(st.angles[j]);
    }
    m.frame_labels[t] = std::move(label);
  }
  return m;
}

std::string active_action(const std::string& label) {
  const auto pos = label.find_first_of("<>");
  return pos == std::string::npos ? label : label.substr(0, pos);
}

}  // namespace cpd::synth
