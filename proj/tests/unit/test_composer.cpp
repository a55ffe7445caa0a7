#include "doctest.h"

#include "cpd/composer/composer.hpp"
#include "cpd/error.hpp"
#include "cpd/synth/generator.hpp"

#include <cmath>

using namespace cpd::composer;
using cpd::nn::Rng;
using cpd::phase::ActPae;
using cpd::phase::LatentStats;
using cpd::phase::PaeConfig;
namespace dif = cpd::diffusion;

namespace {

constexpr int kQ = 4;

LatentStats toy_stats(std::uint64_t seed) {
  Rng rng(seed);
  LatentStats s;
  s.mean = RowVec(4 * kQ);
  s.std = RowVec(4 * kQ);
  for (int i = 0; i < 4 * kQ; ++i) {
    s.mean(i) = 0.3 * rng.normal();
    s.std(i) = rng.uniform(0.2, 0.8);
  }
  return s;
}

// Untrained weights marked as trained: enough to exercise every contract.
struct ToyStack {
  ActPae pae;
  dif::Denoiser spdm, tpdm_f, tpdm_b;

  static dif::DenoiserConfig config() {
    dif::DenoiserConfig c;
    c.q = kQ;
    c.width = 16;
    c.heads = 2;
    c.ff = 32;
    c.layers = 1;
    c.d_text = 8;
    c.n_tok = 6;
    c.vocabulary = {"walk", "wave", "squat", "idle", "spin", "reach"};
    return c;
  }
  static PaeConfig pae_config() {
    PaeConfig c;
    c.q = kQ;
    c.width = 16;
    c.heads = 2;
    c.ff = 32;
    c.layers = 1;
    c.pe_dim = 4;
    return c;
  }

  explicit ToyStack(int k_infer = 10)
      : pae(pae_config(), 3),
        spdm(dif::DenoiserKind::Spdm, config(), dif::make_schedule(1000, k_infer), toy_stats(5), 11),
        tpdm_f(dif::DenoiserKind::TpdmForward, config(), dif::make_schedule(1000, k_infer), toy_stats(5), 12),
        tpdm_b(dif::DenoiserKind::TpdmBackward, config(), dif::make_schedule(1000, k_infer), toy_stats(5), 13) {
    pae.set_stats(toy_stats(5));
    pae.mark_trained();
    spdm.mark_trained();
    tpdm_f.mark_trained();
    tpdm_b.mark_trained();
  }

  Stack stack() const { return {&pae, &spdm, &tpdm_f, &tpdm_b}; }
};

ChainSpec chain_of(int m, std::uint64_t seed) {
  const std::vector<std::string> vocab = ToyStack::config().vocabulary;
  ChainSpec spec;
  spec.seed = seed;
  for (int i = 0; i < m; ++i) spec.segments.push_back({{vocab[static_cast<std::size_t>(i) % vocab.size()]}, 24 + (7 * i) % 30});
  return spec;
}

double max_abs(const Mat& a, const Mat& b) {
  REQUIRE(a.rows() == b.rows());
  REQUIRE(a.cols() == b.cols());
  return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("transition spans") {
  auto spans = [](std::vector<int> lengths) {
    ChainSpec s;
    for (int n : lengths) s.segments.push_back({{"walk"}, n});
    return derive_transition_spans(s);
  };
  SegmentChain a = spans({48, 48});
  REQUIRE(a.transitions.size() == 1);
  CHECK(a.transitions[0].start == 24);
  CHECK(a.transitions[0].start + a.transitions[0].length == 72);
  CHECK(a.transitions[0].start + a.transitions[0].anchor == 48);
  CHECK(a.total_frames == 96);

  SegmentChain b = spans({48, 96});
  CHECK(b.transitions[0].start == 24);
  CHECK(b.transitions[0].length == 72);
  CHECK(b.transitions[0].anchor == 24);

  SegmentChain c = spans({24, 24, 24});
  REQUIRE(c.transitions.size() == 2);
  CHECK(c.transitions[0].start == 12);
  CHECK(c.transitions[0].length == 24);
  CHECK(c.transitions[1].start == 36);
  CHECK(c.transitions[1].length == 24);

  SegmentChain odd = spans({25, 27});
  CHECK(odd.transitions[0].start == 12);
  CHECK(odd.transitions[0].length == 13 + 13);
  CHECK(odd.transitions[0].anchor == 13);
  CHECK(odd.node(1).start == 12);
  CHECK(odd.node(2).start == 25);

  CHECK_THROWS_AS(spans({23, 48}), cpd::Error);
  CHECK_THROWS_AS(spans({48, 97}), cpd::Error);
  CHECK_THROWS_AS(derive_transition_spans(ChainSpec{}), cpd::Error);
}

TEST_CASE("blend plans and blending") {
  // Identity plan over one segment.
  MotionSegment seg;
  seg.frames = Mat::Random(5, 16);
  BlendPlan id;
  id.spans = {{0, 5, 2}};
  for (int t = 0; t < 5; ++t) id.frames.push_back({{0, 1.0}});
  CHECK(blend({seg}, id).frames == seg.frames);

  // Two constants overlapping over four frames.
  MotionSegment a, b;
  a.frames = Mat::Constant(6, 16, 2.0);
  b.frames = Mat::Constant(6, 16, -1.0);
  BlendPlan two;
  two.spans = {{0, 6, 3}, {2, 6, 3}};
  two.frames = {{{0, 1.0}}, {{0, 1.0}}};
  for (int j = 0; j < 4; ++j) two.frames.push_back({{0, 1.0 - j / 4.0}, {1, j / 4.0}});
  two.frames.push_back({{1, 1.0}});
  two.frames.push_back({{1, 1.0}});
  const MotionSegment out = blend({a, b}, two);
  CHECK(out.frames(4, 3) == doctest::Approx(0.5));
  CHECK(out.frames(0, 0) == 2.0);
  CHECK(out.frames(7, 0) == -1.0);

  BlendPlan gap = two;
  gap.frames[3].clear();
  CHECK_THROWS_AS(blend({a, b}, gap), cpd::Error);

  // Random chains: weights sum to one, move linearly, only touch covering segments.
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    ChainSpec spec;
    for (int i = 0; i < 3; ++i) spec.segments.push_back({{}, 24 + static_cast<int>(rng.index(73))});
    const SegmentChain chain = derive_transition_spans(spec);
    const BlendPlan plan = chain_blend_plan(chain);
    REQUIRE(static_cast<int>(plan.frames.size()) == chain.total_frames);
    for (std::size_t t = 0; t < plan.frames.size(); ++t) {
      double sum = 0.0;
      for (const BlendEntry& e : plan.frames[t]) {
        CHECK(e.weight > 0.0);
        const Span& s = plan.spans[static_cast<std::size_t>(e.segment)];
        CHECK(static_cast<int>(t) >= s.start);
        CHECK(static_cast<int>(t) < s.start + s.length);
        sum += e.weight;
      }
      CHECK(std::abs(sum - 1.0) < 1e-12);
    }
    // Transition 0's weight rises by a constant step across its first overlap.
    const Span& t0 = chain.transitions[0];
    const int rest = chain.semantic[0].length - chain.semantic[0].length / 2;
    for (int j = 1; j < rest; ++j) {
      const auto& f = plan.frames[static_cast<std::size_t>(t0.start + j)];
      REQUIRE(f.size() == 2);
      CHECK(f[1].segment == 1);
      CHECK(std::abs(f[1].weight - static_cast<double>(j) / rest) < 1e-15);
    }
  }
}

TEST_CASE("composition contracts") {
  const ToyStack toy;
  const Stack stack = toy.stack();

  const Composition pair = compose_pair(stack, {"walk"}, {"squat"}, 40, 30, 7);
  CHECK(pair.motion.length() == 70);
  CHECK(pair.segments.size() == 3);
  CHECK(pair.segments[1].length() == 20 + 15);
  CHECK(pair.sweeps == stack.schedule().k_infer);
  CHECK(pair.motion.root == cpd::phase::RootEncoding::World);
  CHECK(pair.motion.frame_labels.front() == "walk");
  CHECK(pair.motion.frame_labels.back() == "squat");
  CHECK(pair.motion.frames == cpd::phase::to_world(blend(pair.segments, pair.plan)).frames);

  const Composition again = compose_pair(stack, {"walk"}, {"squat"}, 40, 30, 7);
  CHECK(again.motion.frames == pair.motion.frames);

  ChainSpec two;
  two.seed = 7;
  two.segments = {{{"walk"}, 40}, {{"squat"}, 30}};
  CHECK(compose_long(stack, two).motion.frames == pair.motion.frames);
  CHECK(compose_pair(stack, {"walk"}, {"squat"}, 40, 30, 8).motion.frames != pair.motion.frames);

  CHECK_THROWS_AS(compose_pair(stack, {"walk"}, {"squat"}, 20, 30, 7), cpd::Error);
  CHECK_THROWS_AS(compose_pair(stack, {"fly"}, {"squat"}, 40, 30, 7), cpd::Error);
  ChainSpec one;
  one.segments = {{{"walk"}, 40}};
  CHECK_THROWS_AS(compose_long(stack, one), cpd::Error);

  ToyStack raw;
  dif::Denoiser fresh(dif::DenoiserKind::TpdmForward, ToyStack::config(), dif::make_schedule(1000, 10), toy_stats(5), 4);
  Stack untrained{&raw.pae, &raw.spdm, &fresh, &raw.tpdm_b};
  try {
    compose_pair(untrained, {"walk"}, {"squat"}, 40, 30, 7);
    FAIL("expected an error");
  } catch (const cpd::Error& e) {
    CHECK(e.kind() == cpd::ErrorKind::Untrained);
  }
  dif::Denoiser other(dif::DenoiserKind::TpdmForward, ToyStack::config(), dif::make_schedule(1000, 10), toy_stats(6), 4);
  other.mark_trained();
  Stack mismatched{&raw.pae, &raw.spdm, &other, &raw.tpdm_b};
  try {
    compose_pair(mismatched, {"walk"}, {"squat"}, 40, 30, 7);
    FAIL("expected an error");
  } catch (const cpd::Error& e) {
    CHECK(e.kind() == cpd::ErrorKind::DigestMismatch);
  }
}

TEST_CASE("batched and sequential denoising agree; sweeps do not grow with the chain") {
  const ToyStack toy;
  const Stack stack = toy.stack();
  const ChainSpec spec = chain_of(4, 3);
  DenoiseOptions seq;
  seq.sequential = true;
  const Composition a = compose_long(stack, spec);
  const Composition b = compose_long(stack, spec, seq);
  for (std::size_t i = 0; i < a.latents.size(); ++i) CHECK(max_abs(a.latents[i].values, b.latents[i].values) < 1e-12);
  CHECK(max_abs(a.motion.frames, b.motion.frames) < 1e-12);

  for (int m : {2, 4, 16}) {
    const ChainSpec chain = chain_of(m, 5);
    const SegmentChain spans = derive_transition_spans(chain);
    const DenoiseResult r = denoise_nodes(chain_nodes(chain, spans, 4 * kQ), stack.schedule(), stack.provider(), false);
    CHECK(r.sweeps == stack.schedule().k_infer);
    for (int c : r.calls) CHECK(c == stack.schedule().k_infer);
    CHECK(compose_long(stack, chain).sweeps == stack.schedule().k_infer);
  }
}

TEST_CASE("clean-latent caches follow the scheduler") {
  const ToyStack toy;
  const Stack stack = toy.stack();
  const ChainSpec spec = chain_of(3, 9);
  const SegmentChain chain = derive_transition_spans(spec);
  const std::vector<NodeState> init = chain_nodes(spec, chain, 4 * kQ);
  for (const NodeState& s : init) CHECK(s.p0 == s.pk);

  // Record what the transitional models read and check it against the previous sweep.
  std::vector<Mat> conds_f;
  std::vector<Mat> pks_f;
  EpsProvider base = stack.provider();
  EpsProvider spy = [&](DenoiserKind kind, const Mat& pk, const std::vector<int>& steps,
                        const std::vector<std::vector<std::string>>& texts, const Mat& cond) {
    if (kind == DenoiserKind::TpdmForward) {
      conds_f.push_back(cond);
      pks_f.push_back(pk);
    }
    return base(kind, pk, steps, texts, cond);
  };
  const DenoiseResult r = denoise_nodes(init, stack.schedule(), spy, false);
  REQUIRE(conds_f.size() == static_cast<std::size_t>(stack.schedule().k_infer));
  // Forward model serves nodes 1..4 reading nodes 0..3.
  for (int i = 0; i < 4; ++i) CHECK(conds_f[0].row(i) == init[static_cast<std::size_t>(i)].p0);

  for (int i = 0; i < 4; ++i) CHECK(pks_f[0].row(i) == init[static_cast<std::size_t>(i + 1)].pk);
  // The last step lands on the clean estimate.
  for (const NodeState& s : r.nodes) CHECK(s.p0 == s.pk);
}

TEST_CASE("semantic segments are local when transitional models are silent") {
  const ToyStack toy;
  const Stack stack = toy.stack();
  EpsProvider base = stack.provider();
  EpsProvider zero_tpdm = [&](DenoiserKind kind, const Mat& pk, const std::vector<int>& steps,
                              const std::vector<std::vector<std::string>>& texts, const Mat& cond) -> Mat {
    if (kind != DenoiserKind::Spdm) return Mat::Zero(pk.rows(), pk.cols());
    return base(kind, pk, steps, texts, cond);
  };
  DenoiseOptions opts;
  opts.provider = zero_tpdm;
  ChainSpec spec = chain_of(4, 17);
  const Composition a = compose_long(stack, spec, opts);
  spec.segments[3].text = {"spin", "wave"};
  const Composition b = compose_long(stack, spec, opts);
  CHECK(a.latents[0].values == b.latents[0].values);
  CHECK(a.latents[2].values == b.latents[2].values);
  CHECK(a.latents[4].values == b.latents[4].values);
  CHECK(a.latents[6].values != b.latents[6].values);

  // Adding a segment leaves the initial noise of the earlier ones untouched.
  ChainSpec longer = chain_of(5, 17);
  const auto n4 = chain_nodes(chain_of(4, 17), derive_transition_spans(chain_of(4, 17)), 4 * kQ);
  const auto n5 = chain_nodes(longer, derive_transition_spans(longer), 4 * kQ);
  for (std::size_t i = 0; i < n4.size(); ++i) CHECK(n4[i].pk == n5[i].pk);
}

TEST_CASE("inbetweening keeps the endpoints") {
  const ToyStack toy;
  const Stack stack = toy.stack();
  const MotionSegment x_p = cpd::synth::gen_action("walk", 40, 1);
  const MotionSegment x_s = cpd::synth::gen_action("squat", 30, 2);
  REQUIRE(x_p.root == cpd::phase::RootEncoding::World);

  int spdm_calls = 0;
  EpsProvider base = stack.provider();
  DenoiseOptions counting;
  counting.provider = [&](DenoiserKind kind, const Mat& pk, const std::vector<int>& steps,
                          const std::vector<std::vector<std::string>>& texts, const Mat& cond) {
    if (kind == DenoiserKind::Spdm) ++spdm_calls;
    return base(kind, pk, steps, texts, cond);
  };

  const Inbetween u = inbetween(stack, x_p, x_s, 24, std::nullopt, 4, counting);
  CHECK(spdm_calls == 0);
  CHECK(u.motion.length() == 40 + 24 + 30);
  CHECK(u.gap_start == 40);
  CHECK(u.p_before == u.p_after);
  CHECK(u.s_before == u.s_after);
  CHECK(u.motion.frames.topRows(40) == x_p.frames);
  CHECK(u.motion.frames.bottomRows(30) == x_s.frames);
  CHECK(u.motion.frames.allFinite());
  CHECK(u.composition.sweeps == stack.schedule().k_infer);

  const Inbetween c = inbetween(stack, x_p, x_s, 24, std::vector<std::string>{"wave"}, 4, counting);
  CHECK(spdm_calls == stack.schedule().k_infer);
  CHECK(c.motion.frames.topRows(40) == x_p.frames);
  CHECK(c.motion.frames.middleRows(40, 24) != u.motion.frames.middleRows(40, 24));

  const Inbetween again = inbetween(stack, x_p, x_s, 24, std::nullopt, 4);
  CHECK(again.motion.frames == u.motion.frames);

  CHECK_THROWS_AS(inbetween(stack, x_p, x_s, 23, std::nullopt, 4), cpd::Error);
  CHECK_THROWS_AS(inbetween(stack, x_p.slice(0, 1), x_s, 24, std::nullopt, 4), cpd::Error);
  CHECK_THROWS_AS(inbetween(stack, cpd::phase::to_features(x_p), x_s, 24, std::nullopt, 4), cpd::Error);
}

TEST_CASE("request files and provenance") {
  const ChainSpec spec = parse_request("# two segments\nseed 42\nsegment 48 walk\n\nsegment 30 wave squat\nsegment 24\n");
  CHECK(spec.seed == 42);
  REQUIRE(spec.segments.size() == 3);
  CHECK(spec.segments[1].text == std::vector<std::string>{"wave", "squat"});
  CHECK(spec.segments[2].text.empty());
  CHECK(spec.segments[2].length == 24);
  const ChainSpec back = parse_request(format_request(spec));
  CHECK(format_request(back) == format_request(spec));

  for (const char* bad : {"seed 1\n", "seed 1\nseed 2\nsegment 24 walk\n", "segment x walk\n", "frames 24\n",
                          "seed -3\nsegment 24 walk\n"}) {
    try {
      parse_request(bad);
      FAIL("accepted a malformed request");
    } catch (const cpd::Error& e) {
      CHECK(e.kind() == cpd::ErrorKind::MalformedConfig);
    }
  }

  const ToyStack toy;
  const Composition c = compose_pair(toy.stack(), {"walk"}, {"idle"}, 24, 24, 1);
  const std::string prov = format_provenance(c, {"S0", "T0", "S1"});
  CHECK(prov.rfind("cpd-provenance 1\nsegments 3\n0 S0 start 0 length 24 anchor 12\n", 0) == 0);
  CHECK(prov.find("\n12 0:1\n") != std::string::npos);
  CHECK(prov.find("\n18 0:0.5 1:0.5\n") != std::string::npos);
  CHECK(prov.find("\n24 1:1\n") != std::string::npos);
  CHECK(prov.find("\n30 1:0.5 2:0.5\n") != std::string::npos);
  CHECK_THROWS_AS(format_provenance(c, {"S0"}), cpd::Error);
}

TEST_CASE("many independent cases match one-at-a-time runs") {
  const ToyStack toy;
  const Stack stack = toy.stack();
  const std::vector<ChainSpec> specs = {chain_of(2, 1), chain_of(3, 2), chain_of(5, 3)};
  const auto many = compose_many(stack, specs);
  REQUIRE(many.size() == 3);
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const Composition one = compose_long(stack, specs[i]);
    CHECK(max_abs(one.motion.frames, many[i].motion.frames) < 1e-12);
    CHECK(many[i].sweeps == stack.schedule().k_infer);
  }

  std::vector<InbetweenRequest> reqs;
  for (int i = 0; i < 3; ++i)
    reqs.push_back({cpd::synth::gen_action("walk", 30 + 5 * i, i), cpd::synth::gen_action("wave", 40, 10 + i), 24 + 8 * i,
                    i == 1 ? std::optional<std::vector<std::string>>{{"idle"}} : std::nullopt, 100u + i});
  const auto ibs = inbetween_many(stack, reqs);
  for (std::size_t i = 0; i < reqs.size(); ++i) {
    const Inbetween one = inbetween(stack, reqs[i].x_p, reqs[i].x_s, reqs[i].n_i, reqs[i].text, reqs[i].seed);
    CHECK(max_abs(one.motion.frames, ibs[i].motion.frames) < 1e-12);
    CHECK(ibs[i].p_before == ibs[i].p_after);
    CHECK(ibs[i].motion.frames.topRows(reqs[i].x_p.length()) == reqs[i].x_p.frames);
  }
}
