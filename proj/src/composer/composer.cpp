#include "cpd/composer/composer.hpp"

#include "cpd/error.hpp"
#include "cpd/text.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace cpd::composer {

namespace dif = cpd::diffusion;

SegmentChain derive_transition_spans(const ChainSpec& chain, int n_min, int n_max) {
  require(!chain.segments.empty(), ErrorKind::InvalidArgument, "segment chain is empty");
  SegmentChain out;
  int start = 0;
  for (const auto& seg : chain.segments) {
    require(seg.length >= n_min && seg.length <= n_max, ErrorKind::InvalidArgument,
            "segment length " + std::to_string(seg.length) + " outside [" + std::to_string(n_min) + ", " +
                std::to_string(n_max) + "]");
    out.semantic.push_back({start, seg.length, phase::center_anchor(seg.length)});
    start += seg.length;
  }
  out.total_frames = start;
  for (std::size_t i = 0; i + 1 < out.semantic.size(); ++i) {
    const Span& a = out.semantic[i];
    const Span& b = out.semantic[i + 1];
    const int t0 = a.start + a.length / 2;
    const int t1 = b.start + b.length / 2;
    out.transitions.push_back({t0, t1 - t0, b.start - t0});
  }
  return out;
}

BlendPlan chain_blend_plan(const SegmentChain& chain) {
  BlendPlan plan;
  for (int id = 0; id < chain.node_count(); ++id) plan.spans.push_back(chain.node(id));
  plan.frames.resize(static_cast<std::size_t>(chain.total_frames));
  const int m = static_cast<int>(chain.semantic.size());
  auto add = [&](int t, int seg, double w) {
    if (w > 0.0) plan.frames[static_cast<std::size_t>(t)].push_back({seg, w});
  };
  for (int i = 0; i < m; ++i) {
    const Span& s = chain.semantic[i];
    const int half = s.length / 2;
    for (int j = 0; j < half; ++j) {
      const int t = s.start + j;
      if (i == 0) {
        add(t, 0, 1.0);
      } else {
        const double w = static_cast<double>(j) / half;
        add(t, 2 * i - 1, 1.0 - w);
        add(t, 2 * i, w);
      }
    }
    const int rest = s.length - half;
    for (int j = 0; j < rest; ++j) {
      const int t = s.start + half + j;
      if (i == m - 1) {
        add(t, 2 * i, 1.0);
      } else {
        const double w = static_cast<double>(j) / rest;
        add(t, 2 * i, 1.0 - w);
        add(t, 2 * i + 1, w);
      }
    }
  }
  return plan;
}

MotionSegment blend(const std::vector<MotionSegment>& segments, const BlendPlan& plan) {
  require(!segments.empty() && segments.size() == plan.spans.size(), ErrorKind::InvalidArgument,
          "blend plan and segment list disagree");
  MotionSegment out;
  out.fps = segments[0].fps;
  out.layout = segments[0].layout;
  out.root = segments[0].root;
  const int e = segments[0].channels();
  out.frames = Mat::Zero(static_cast<Eigen::Index>(plan.frames.size()), e);
  for (std::size_t t = 0; t < plan.frames.size(); ++t) {
    require(!plan.frames[t].empty(), ErrorKind::InvalidArgument, "blend plan leaves frame " + std::to_string(t) + " uncovered");
    for (const BlendEntry& b : plan.frames[t]) {
      require(b.segment >= 0 && b.segment < static_cast<int>(segments.size()), ErrorKind::InvalidArgument,
              "blend plan names an unknown segment");
      const Span& sp = plan.spans[static_cast<std::size_t>(b.segment)];
      const MotionSegment& seg = segments[static_cast<std::size_t>(b.segment)];
      const int local = static_cast<int>(t) - sp.start;
      require(local >= 0 && local < seg.length() && seg.channels() == e, ErrorKind::ShapeMismatch,
              "blend plan reaches outside a segment");
      out.frames.row(static_cast<Eigen::Index>(t)) += b.weight * seg.frames.row(local);
    }
  }
  return out;
}

void Stack::verify() const {
  require(pae && spdm && tpdm_f && tpdm_b, ErrorKind::MissingCheckpoint, "model stack is incomplete");
  require(pae->trained() && !pae->stats().empty(), ErrorKind::Untrained, "phase autoencoder is untrained");
  require(spdm->kind() == DenoiserKind::Spdm && tpdm_f->kind() == DenoiserKind::TpdmForward &&
              tpdm_b->kind() == DenoiserKind::TpdmBackward,
          ErrorKind::InvalidArgument, "denoisers are in the wrong slots");
  for (const dif::Denoiser* d : {spdm, tpdm_f, tpdm_b})
    require(d->trained(), ErrorKind::Untrained, std::string(dif::kind_name(d->kind())) + " denoiser is untrained");
  spdm->verify_compatible(*tpdm_f);
  spdm->verify_compatible(*tpdm_b);
  for (const dif::Denoiser* d : {spdm, tpdm_f, tpdm_b}) d->verify_compatible(*pae);
}

EpsProvider Stack::provider() const {
  const Stack s = *this;
  return [s](DenoiserKind kind, const Mat& pk, const std::vector<int>& steps,
             const std::vector<std::vector<std::string>>& texts, const Mat& cond) -> Mat {
    switch (kind) {
      case DenoiserKind::Spdm: return s.spdm->eps_batch(pk, steps, texts, cond);
      case DenoiserKind::TpdmForward: return s.tpdm_f->eps_batch(pk, steps, texts, cond);
      case DenoiserKind::TpdmBackward: return s.tpdm_b->eps_batch(pk, steps, texts, cond);
    }
    fail(ErrorKind::InvalidArgument, "unknown denoiser kind");
  };
}

namespace {

// One model's work in a sweep: the nodes it serves and the stacked inputs.
struct Group {
  std::vector<int> nodes;
  std::vector<std::vector<std::string>> texts;
  std::vector<RowVec> pk, cond;
};

Mat stack_rows(const std::vector<RowVec>& rows, Eigen::Index dim) {
  Mat m(static_cast<Eigen::Index>(rows.size()), dim);
  for (std::size_t i = 0; i < rows.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = rows[i];
  return m;
}

}  // namespace

DenoiseResult denoise_nodes(std::vector<NodeState> nodes, const dif::DiffusionSchedule& schedule,
                            const EpsProvider& provider, bool sequential) {
  require(!nodes.empty(), ErrorKind::InvalidArgument, "nothing to denoise");
  const auto n = static_cast<int>(nodes.size());
  const Eigen::Index dim = nodes[0].p0.size();
  for (const NodeState& s : nodes) {
    require(s.p0.size() == dim && (s.frozen || s.pk.size() == dim), ErrorKind::ShapeMismatch,
            "node latents differ in size");
    require(s.left < n && s.right < n, ErrorKind::InvalidArgument, "node neighbor out of range");
  }

  DenoiseResult result;
  const int k_infer = schedule.k_infer;
  for (int j = 0; j < k_infer; ++j) {
    const int k = schedule.timesteps[static_cast<std::size_t>(j)];
    const int k_prev = schedule.previous(j);
    const int k_index = k_infer - j;

    std::array<Group, 3> groups;
    for (int id = 0; id < n; ++id) {
      const NodeState& s = nodes[static_cast<std::size_t>(id)];
      if (s.frozen) continue;
      if (s.conditioned) {
        groups[0].nodes.push_back(id);
        groups[0].texts.push_back(s.text);
        groups[0].pk.push_back(s.pk);
      }
      if (s.left >= 0) {
        groups[1].nodes.push_back(id);
        groups[1].pk.push_back(s.pk);
        groups[1].cond.push_back(nodes[static_cast<std::size_t>(s.left)].p0);
      }
      if (s.right >= 0) {
        groups[2].nodes.push_back(id);
        groups[2].pk.push_back(s.pk);
        groups[2].cond.push_back(nodes[static_cast<std::size_t>(s.right)].p0);
      }
    }

    std::vector<std::array<std::optional<RowVec>, 3>> eps(static_cast<std::size_t>(n));
    const std::array<DenoiserKind, 3> kinds{DenoiserKind::Spdm, DenoiserKind::TpdmForward,
                                            DenoiserKind::TpdmBackward};
    for (int g = 0; g < 3; ++g) {
      const Group& grp = groups[static_cast<std::size_t>(g)];
      if (grp.nodes.empty()) continue;
      const bool spdm = g == 0;
      if (sequential) {
        for (std::size_t i = 0; i < grp.nodes.size(); ++i) {
          std::vector<std::vector<std::string>> texts;
          if (spdm) texts.push_back(grp.texts[i]);
          const Mat out = provider(kinds[g], grp.pk[i], {k}, texts, spdm ? Mat() : Mat(grp.cond[i]));
          require(out.rows() == 1 && out.cols() == dim, ErrorKind::ShapeMismatch, "noise estimate has the wrong shape");
          eps[static_cast<std::size_t>(grp.nodes[i])][g] = RowVec(out.row(0));
          ++result.calls[g];
        }
      } else {
        const std::vector<int> steps(grp.nodes.size(), k);
        const Mat out = provider(kinds[g], stack_rows(grp.pk, dim), steps, grp.texts,
                                 spdm ? Mat() : stack_rows(grp.cond, dim));
        require(out.rows() == static_cast<Eigen::Index>(grp.nodes.size()) && out.cols() == dim,
                ErrorKind::ShapeMismatch, "noise estimate has the wrong shape");
        for (std::size_t i = 0; i < grp.nodes.size(); ++i)
          eps[static_cast<std::size_t>(grp.nodes[i])][g] = RowVec(out.row(static_cast<Eigen::Index>(i)));
        ++result.calls[g];
      }
    }

    for (int id = 0; id < n; ++id) {
      NodeState& s = nodes[static_cast<std::size_t>(id)];
      if (s.frozen) continue;
      const auto& e = eps[static_cast<std::size_t>(id)];
      require(e[0] || e[1] || e[2], ErrorKind::InvalidArgument, "node " + std::to_string(id) + " has no denoiser");
      const double r = dif::mixing_weight(k_index, k_infer, s.conditioned);
      const RowVec mixed = dif::phase_mix(e[1], e[2], e[0], r);
      dif::DdimStep step = dif::ddim_step(s.pk, mixed, k, k_prev, schedule);
      s.pk = std::move(step.prev);
      s.p0 = std::move(step.x0);
    }
    ++result.sweeps;
  }
  result.nodes = std::move(nodes);
  return result;
}

std::vector<NodeState> chain_nodes(const ChainSpec& spec, const SegmentChain& chain, int latent_size) {
  const int n = chain.node_count();
  const nn::Rng root(spec.seed);
  std::vector<NodeState> nodes(static_cast<std::size_t>(n));
  for (int id = 0; id < n; ++id) {
    NodeState& s = nodes[static_cast<std::size_t>(id)];
    if (id % 2 == 0) {
      s.text = spec.segments[static_cast<std::size_t>(id / 2)].text;
      s.conditioned = true;
    }
    s.left = id > 0 ? id - 1 : -1;
    s.right = id + 1 < n ? id + 1 : -1;
    nn::Rng rng = root.fork(static_cast<std::uint64_t>(id));
    s.pk.resize(latent_size);
    for (int i = 0; i < latent_size; ++i) s.pk(i) = rng.normal();
    s.p0 = s.pk;
  }
  return nodes;
}

namespace {

void check_texts(const Stack& stack, const ChainSpec& spec) {
  const dif::TextEncoder enc(stack.spdm->config().vocabulary);
  for (const auto& seg : spec.segments)
    for (const auto& tok : seg.text) enc.index(tok);
}

// Final normalized latents -> unnormalized parameters and decoded local-delta segments.
void decode_nodes(const Stack& stack, const SegmentChain& chain, const std::vector<NodeState>& nodes,
                  Composition& c) {
  std::vector<int> lengths, anchors;
  for (int id = 0; id < chain.node_count(); ++id) {
    const PhaseParams p = stack.pae->stats().denormalize(PhaseParams::from_flat(nodes[static_cast<std::size_t>(id)].p0, true));
    require(p.values.allFinite(), ErrorKind::NumericalFailure, "denoised latent is not finite");
    c.latents.push_back(p);
    lengths.push_back(chain.node(id).length);
    anchors.push_back(chain.node(id).anchor);
  }
  c.segments = stack.pae->decode_batch(c.latents, lengths, anchors);
}

std::vector<std::string> frame_labels(const ChainSpec& spec, const SegmentChain& chain) {
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < chain.semantic.size(); ++i) {
    const auto& text = spec.segments[i].text;
    const std::string label = text.empty() ? "-" : join(text, "+");
    labels.insert(labels.end(), static_cast<std::size_t>(chain.semantic[i].length), label);
  }
  return labels;
}

}  // namespace

namespace {

// Disjoint node graphs run through one schedule; each case keeps its own neighbors.
std::vector<DenoiseResult> denoise_cases(std::vector<std::vector<NodeState>> cases, const Stack& stack,
                                         const DenoiseOptions& options) {
  const EpsProvider provider = options.provider ? options.provider : stack.provider();
  std::vector<NodeState> all;
  std::vector<int> offsets;
  for (auto& nodes : cases) {
    const int off = static_cast<int>(all.size());
    offsets.push_back(off);
    for (NodeState& s : nodes) {
      if (s.left >= 0) s.left += off;
      if (s.right >= 0) s.right += off;
      all.push_back(std::move(s));
    }
  }
  offsets.push_back(static_cast<int>(all.size()));
  DenoiseResult merged = denoise_nodes(std::move(all), stack.schedule(), provider, options.sequential);
  std::vector<DenoiseResult> out(cases.size());
  for (std::size_t i = 0; i < cases.size(); ++i) {
    out[i].sweeps = merged.sweeps;
    out[i].calls = merged.calls;
    for (int id = offsets[i]; id < offsets[i + 1]; ++id) {
      NodeState s = merged.nodes[static_cast<std::size_t>(id)];
      if (s.left >= 0) s.left -= offsets[i];
      if (s.right >= 0) s.right -= offsets[i];
      out[i].nodes.push_back(std::move(s));
    }
  }
  return out;
}

}  // namespace

std::vector<Composition> compose_many(const Stack& stack, const std::vector<ChainSpec>& specs,
                                      const DenoiseOptions& options) {
  stack.verify();
  const auto& cfg = stack.pae->config();
  std::vector<Composition> out(specs.size());
  std::vector<std::vector<NodeState>> cases;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    require(specs[i].segments.size() >= 2, ErrorKind::InvalidArgument, "a composition needs at least two segments");
    out[i].chain = derive_transition_spans(specs[i], cfg.n_min, cfg.n_max);
    check_texts(stack, specs[i]);
    cases.push_back(chain_nodes(specs[i], out[i].chain, stack.spdm->latent_size()));
  }
  if (specs.empty()) return out;
  const auto results = denoise_cases(std::move(cases), stack, options);
  for (std::size_t i = 0; i < specs.size(); ++i) {
    Composition& c = out[i];
    c.sweeps = results[i].sweeps;
    decode_nodes(stack, c.chain, results[i].nodes, c);
    c.plan = chain_blend_plan(c.chain);
    MotionSegment features = blend(c.segments, c.plan);
    c.motion = phase::to_world(features);
    c.motion.frame_labels = frame_labels(specs[i], c.chain);
  }
  return out;
}

Composition compose_long(const Stack& stack, const ChainSpec& spec, const DenoiseOptions& options) {
  return std::move(compose_many(stack, {spec}, options).front());
}

Composition compose_pair(const Stack& stack, const std::vector<std::string>& c_p, const std::vector<std::string>& c_s,
                         int n_p, int n_s, std::uint64_t seed, const DenoiseOptions& options) {
  ChainSpec spec;
  spec.segments = {{c_p, n_p}, {c_s, n_s}};
  spec.seed = seed;
  return compose_long(stack, spec, options);
}

std::vector<Inbetween> inbetween_many(const Stack& stack, const std::vector<InbetweenRequest>& requests,
                                      const DenoiseOptions& options) {
  stack.verify();
  const auto& cfg = stack.pae->config();
  std::vector<Inbetween> out(requests.size());
  std::vector<MotionSegment> ends;
  std::vector<int> anchors;
  std::vector<ChainSpec> specs;
  for (std::size_t i = 0; i < requests.size(); ++i) {
    const InbetweenRequest& r = requests[i];
    r.x_p.validate();
    r.x_s.validate();
    require(r.x_p.root == phase::RootEncoding::World && r.x_s.root == phase::RootEncoding::World,
            ErrorKind::InvalidArgument, "inbetweening expects world-root clips");
    require(r.x_p.layout == cfg.layout && r.x_s.layout == cfg.layout, ErrorKind::ShapeMismatch,
            "clip layout does not match the autoencoder");
    ChainSpec spec;
    spec.seed = r.seed;
    spec.segments = {{r.x_p.tokens, r.x_p.length()}, {r.text.value_or(std::vector<std::string>{}), r.n_i},
                     {r.x_s.tokens, r.x_s.length()}};
    out[i].composition.chain = derive_transition_spans(spec, cfg.n_min, cfg.n_max);
    if (r.text) {
      ChainSpec only;
      only.segments = {spec.segments[1]};
      check_texts(stack, only);
    }
    ends.push_back(r.x_p);
    ends.push_back(r.x_s);
    anchors.push_back(out[i].composition.chain.semantic[0].anchor);
    anchors.push_back(out[i].composition.chain.semantic[2].anchor);
    specs.push_back(std::move(spec));
  }
  if (requests.empty()) return out;

  const auto endpoints = stack.pae->encode_batch(ends, anchors);
  std::vector<std::vector<NodeState>> cases;
  for (std::size_t i = 0; i < requests.size(); ++i) {
    Inbetween& ib = out[i];
    ib.p_before = stack.pae->stats().normalize(endpoints[2 * i]).flat();
    ib.s_before = stack.pae->stats().normalize(endpoints[2 * i + 1]).flat();
    std::vector<NodeState> nodes = chain_nodes(specs[i], ib.composition.chain, stack.spdm->latent_size());
    for (int id : {0, 4}) {
      NodeState& s = nodes[static_cast<std::size_t>(id)];
      s.frozen = true;
      s.conditioned = false;
      s.left = s.right = -1;
      s.pk = RowVec();
      s.p0 = id == 0 ? ib.p_before : ib.s_before;
    }
    nodes[2].conditioned = requests[i].text.has_value();
    cases.push_back(std::move(nodes));
  }
  const auto results = denoise_cases(std::move(cases), stack, options);

  for (std::size_t i = 0; i < requests.size(); ++i) {
    const InbetweenRequest& r = requests[i];
    Inbetween& ib = out[i];
    Composition& c = ib.composition;
    c.sweeps = results[i].sweeps;
    ib.p_after = results[i].nodes[0].p0;
    ib.s_after = results[i].nodes[4].p0;
    decode_nodes(stack, c.chain, results[i].nodes, c);
    c.plan = chain_blend_plan(c.chain);
    MotionSegment features = blend(c.segments, c.plan);
    c.motion = phase::to_world(features);

    // Gap frames integrate from the last input frame; input frames are copied untouched.
    const int np = r.x_p.length();
    ib.gap_start = np;
    const MotionSegment gap = features.slice(np - 1, r.n_i + 1);
    const auto [tx, tn] = r.x_p.layout.span(phase::ChannelRole::RootTranslation);
    const double sx = tx >= 0 ? r.x_p.frames(np - 1, tx) : 0.0;
    const double sy = tx >= 0 ? r.x_p.frames(np - 1, tx + 1) : 0.0;
    const MotionSegment gap_world = phase::to_world(gap, sx, sy);

    MotionSegment& m = ib.motion;
    m.fps = r.x_p.fps;
    m.layout = r.x_p.layout;
    m.root = phase::RootEncoding::World;
    m.frames.resize(np + r.n_i + r.x_s.length(), r.x_p.channels());
    m.frames.topRows(np) = r.x_p.frames;
    m.frames.middleRows(np, r.n_i) = gap_world.frames.bottomRows(r.n_i);
    m.frames.bottomRows(r.x_s.length()) = r.x_s.frames;
  }
  return out;
}

Inbetween inbetween(const Stack& stack, const MotionSegment& x_p, const MotionSegment& x_s, int n_i,
                    const std::optional<std::vector<std::string>>& text, std::uint64_t seed,
                    const DenoiseOptions& options) {
  return std::move(inbetween_many(stack, {{x_p, x_s, n_i, text, seed}}, options).front());
}

ChainSpec parse_request(const std::string& text) {
  ChainSpec spec;
  bool seeded = false;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto w = words(line);
    if (w.empty() || w[0][0] == '#') continue;
    const std::string where = "request line " + std::to_string(lineno);
    if (w[0] == "seed") {
      require(w.size() == 2 && !seeded, ErrorKind::MalformedConfig, where + ": expected a single seed line");
      const long long v = parse_int(w[1], where);
      require(v >= 0, ErrorKind::MalformedConfig, where + ": seed must be nonnegative");
      spec.seed = static_cast<std::uint64_t>(v);
      seeded = true;
    } else if (w[0] == "segment") {
      require(w.size() >= 2, ErrorKind::MalformedConfig, where + ": segment needs a frame count");
      SegmentRequest r;
      r.length = static_cast<int>(parse_int(w[1], where));
      r.text.assign(w.begin() + 2, w.end());
      spec.segments.push_back(std::move(r));
    } else {
      fail(ErrorKind::MalformedConfig, where + ": unknown entry '" + w[0] + "'");
    }
  }
  require(!spec.segments.empty(), ErrorKind::MalformedConfig, "request lists no segments");
  return spec;
}

std::string format_request(const ChainSpec& spec) {
  std::string out = "seed " + std::to_string(spec.seed) + "\n";
  for (const auto& s : spec.segments) {
    out += "segment " + std::to_string(s.length);
    for (const auto& t : s.text) out += " " + t;
    out += "\n";
  }
  return out;
}

ChainSpec load_request(const std::filesystem::path& path) {
  std::ifstream f(path);
  require(static_cast<bool>(f), ErrorKind::InvalidArgument, "cannot open request " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_request(ss.str());
}

std::string format_provenance(const Composition& c, const std::vector<std::string>& segment_names) {
  require(segment_names.size() == c.plan.spans.size(), ErrorKind::InvalidArgument,
          "provenance needs one name per segment");
  std::string out = "cpd-provenance 1\nsegments " + std::to_string(c.plan.spans.size()) + "\n";
  for (std::size_t i = 0; i < c.plan.spans.size(); ++i) {
    const Span& s = c.plan.spans[i];
    out += std::to_string(i) + " " + segment_names[i] + " start " + std::to_string(s.start) + " length " +
           std::to_string(s.length) + " anchor " + std::to_string(s.anchor) + "\n";
  }
  out += "frames " + std::to_string(c.plan.frames.size()) + "\n";
  for (std::size_t t = 0; t < c.plan.frames.size(); ++t) {
    out += std::to_string(t);
    for (const BlendEntry& b : c.plan.frames[t]) out += " " + std::to_string(b.segment) + ":" + format_double(b.weight);
    out += "\n";
  }
  return out;
}

}  // namespace cpd::composer
