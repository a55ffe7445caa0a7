#pragma once

#include "cpd/diffusion/denoiser.hpp"
#include "cpd/phase/actpae.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace cpd::composer {

using diffusion::DenoiserKind;
using phase::Mat;
using phase::MotionSegment;
using phase::PhaseParams;
using phase::RowVec;

struct SegmentRequest {
  std::vector<std::string> text;
  int length = 0;
};

struct ChainSpec {
  std::vector<SegmentRequest> segments;
  std::uint64_t seed = 0;
};

// Frame span on the output timeline; anchor is relative to start.
struct Span {
  int start = 0;
  int length = 0;
  int anchor = 0;
};

// Transition i covers [start_i + N_i/2, start_{i+1} + N_{i+1}/2) and is anchored at
// the boundary start_{i+1}. Halves round down.
struct SegmentChain {
  std::vector<Span> semantic;
  std::vector<Span> transitions;
  int total_frames = 0;

  // Node ids interleave along the timeline: semantic i is 2i, transition i is 2i + 1.
  int node_count() const { return static_cast<int>(semantic.size() + transitions.size()); }
  const Span& node(int id) const { return id % 2 == 0 ? semantic[id / 2] : transitions[id / 2]; }
};

SegmentChain derive_transition_spans(const ChainSpec& chain, int n_min = 24, int n_max = 96);

struct BlendEntry {
  int segment = 0;
  double weight = 0.0;
};

// Per output frame, the contributing segments (ids index BlendPlan::spans) and weights.
struct BlendPlan {
  std::vector<Span> spans;
  std::vector<std::vector<BlendEntry>> frames;
};

// Linear cross-fades along a chain: over an overlap of L frames the outgoing segment
// weighs 1 - i/L and the incoming one i/L at overlap frame i.
BlendPlan chain_blend_plan(const SegmentChain& chain);

// Per-frame convex combination of the segments' frames. Output inherits fps, layout and
// root encoding of the first segment.
MotionSegment blend(const std::vector<MotionSegment>& segments, const BlendPlan& plan);

// Batched noise prediction: pk and cond are B x 4Q, texts has B entries for Spdm.
using EpsProvider = std::function<Mat(DenoiserKind kind, const Mat& pk, const std::vector<int>& steps,
                                      const std::vector<std::vector<std::string>>& texts, const Mat& cond)>;

// A trained autoencoder and its three denoisers.
struct Stack {
  const phase::ActPae* pae = nullptr;
  const diffusion::Denoiser* spdm = nullptr;
  const diffusion::Denoiser* tpdm_f = nullptr;
  const diffusion::Denoiser* tpdm_b = nullptr;

  // Raises Untrained or DigestMismatch when the pieces do not belong together.
  void verify() const;
  const diffusion::DiffusionSchedule& schedule() const { return spdm->schedule(); }
  EpsProvider provider() const;
};

struct DenoiseOptions {
  // One call per segment and model instead of one batched call per model and step.
  bool sequential = false;
  // Replaces the stack's models; the stack still supplies schedule and statistics.
  EpsProvider provider;
};

// Denoising state of one chain node.
struct NodeState {
  std::vector<std::string> text;
  bool conditioned = false;  // Spdm contributes with r = (k/K)^3
  bool frozen = false;       // latent fixed at p0
  int left = -1;             // read by the forward Tpdm
  int right = -1;            // read by the backward Tpdm
  RowVec pk;
  RowVec p0;
};

struct DenoiseResult {
  std::vector<NodeState> nodes;
  // Scheduler sweeps performed.
  int sweeps = 0;
  // Model invocations per kind, in Spdm, TpdmForward, TpdmBackward order.
  std::array<int, 3> calls{};
};

// Runs the full inference schedule over the nodes. Every model reads the neighbors'
// clean-latent caches from the previous sweep.
DenoiseResult denoise_nodes(std::vector<NodeState> nodes, const diffusion::DiffusionSchedule& schedule,
                            const EpsProvider& provider, bool sequential);

struct Composition {
  SegmentChain chain;
  BlendPlan plan;
  // Unnormalized final latents and decoded local-delta segments, in node order.
  std::vector<PhaseParams> latents;
  std::vector<MotionSegment> segments;
  // Blended output with world root. Rotation pairs are left as blended, so they may
  // be shorter than unit length inside overlaps.
  MotionSegment motion;
  int sweeps = 0;
};

// Initial noise of node n is drawn from stream n of the chain seed.
std::vector<NodeState> chain_nodes(const ChainSpec& spec, const SegmentChain& chain, int latent_size);

Composition compose_long(const Stack& stack, const ChainSpec& spec, const DenoiseOptions& options = {});
Composition compose_pair(const Stack& stack, const std::vector<std::string>& c_p, const std::vector<std::string>& c_s,
                         int n_p, int n_s, std::uint64_t seed, const DenoiseOptions& options = {});
// Independent chains sharing one batched call per model and step.
std::vector<Composition> compose_many(const Stack& stack, const std::vector<ChainSpec>& specs,
                                      const DenoiseOptions& options = {});

struct Inbetween {
  Composition composition;
  // Normalized endpoint latents as encoded and as they left the denoising loop.
  RowVec p_before, s_before, p_after, s_after;
  // X_p frames, generated gap, X_s frames; world root.
  MotionSegment motion;
  int gap_start = 0;
};

// Bridges two world-root clips with n_i generated frames. With text the gap is
// conditioned (Spdm mixed in); without it only the transitional models act.
Inbetween inbetween(const Stack& stack, const MotionSegment& x_p, const MotionSegment& x_s, int n_i,
                    const std::optional<std::vector<std::string>>& text, std::uint64_t seed,
                    const DenoiseOptions& options = {});

struct InbetweenRequest {
  MotionSegment x_p, x_s;
  int n_i = 0;
  std::optional<std::vector<std::string>> text;
  std::uint64_t seed = 0;
};

std::vector<Inbetween> inbetween_many(const Stack& stack, const std::vector<InbetweenRequest>& requests,
                                      const DenoiseOptions& options = {});


// Composition request: lines "seed <u64>" and "segment <frames> <token>..." in order.
ChainSpec parse_request(const std::string& text);
std::string format_request(const ChainSpec& spec);
ChainSpec load_request(const std::filesystem::path& path);

// Provenance sidecar: the segment table and every frame's weights.
std::string format_provenance(const Composition& c, const std::vector<std::string>& segment_names);

}  // namespace cpd::composer
