#include "doctest.h"

#include "cpd/error.hpp"
#include "cpd/nn/adam.hpp"
#include "cpd/nn/checkpoint.hpp"
#include "cpd/nn/graph.hpp"
#include "cpd/nn/layers.hpp"
#include "cpd/nn/positional.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

using namespace cpd::nn;

namespace {

Mat random_mat(int r, int c, Rng& rng, double scale = 1.0) {
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

// Fixed random projection so the loss does not collapse symmetric gradients.
Var project_loss(Tape& tape, Var out, std::uint64_t seed) {
  Rng r(seed);
  Var w = tape.constant(random_mat(static_cast<int>(out.rows()), static_cast<int>(out.cols()), r));
  return ops::sum(ops::mul(out, w));
}

}  // namespace

TEST_CASE("sinusoidal_pe zero position rows") {
  Mat a = sinusoidal_pe(1, 2);
  CHECK(a(0, 0) == 0.0);
  CHECK(a(0, 1) == 1.0);

  Mat b = sinusoidal_pe(4, 4);
  CHECK(b(0, 0) == 0.0);
  CHECK(b(0, 2) == 0.0);
  CHECK(b(0, 1) == 1.0);
  CHECK(b(0, 3) == 1.0);
}

TEST_CASE("sinusoidal_pe matches scalar formula") {
  Mat pe = sinusoidal_pe(8, 16);
  for (int i = 0; i < 8; ++i) {
    const double denom = std::pow(10000.0, (2.0 * i) / 16.0);
    CHECK(pe(3, 2 * i) == doctest::Approx(std::sin(3.0 / denom)).epsilon(1e-15));
    CHECK(pe(3, 2 * i + 1) == doctest::Approx(std::cos(3.0 / denom)).epsilon(1e-15));
  }
  CHECK_THROWS_AS(sinusoidal_pe(4, 3), cpd::Error);
}

TEST_CASE("gradient of sum and sum of squares") {
  Graph g_sum = [](Tape&, const std::vector<Var>& in, const ParamStore&) {
    return GraphOutput{{}, ops::sum(in[0])};
  };
  Tensor x({2, 3}, {1, -2, 3, 4, 5, -6}, true);
  Evaluation ev = evaluate_with_grads(g_sum, {x}, ParamStore{});
  CHECK(ev.input_grads[0].isApprox(Mat::Ones(2, 3)));

  Graph g_sq = [](Tape&, const std::vector<Var>& in, const ParamStore&) {
    return GraphOutput{{}, ops::sum(ops::mul(in[0], in[0]))};
  };
  Tensor y({3}, {1, 2, 3}, true);
  Evaluation ev2 = evaluate_with_grads(g_sq, {y}, ParamStore{});
  CHECK(ev2.input_grads[0](0, 0) == 2.0);
  CHECK(ev2.input_grads[0](0, 1) == 4.0);
  CHECK(ev2.input_grads[0](0, 2) == 6.0);
}

TEST_CASE("backward rejects non-scalar loss") {
  Tape tape;
  Var x = tape.leaf(Mat::Ones(2, 2));
  CHECK_THROWS_AS(tape.backward(x), cpd::Error);
}

TEST_CASE("shape mismatch is reported") {
  Tape tape;
  Var a = tape.leaf(Mat::Ones(2, 3));
  Var b = tape.leaf(Mat::Ones(2, 3));
  try {
    ops::matmul(a, b);
    FAIL("expected an error");
  } catch (const cpd::Error& e) {
    CHECK(e.kind() == cpd::ErrorKind::ShapeMismatch);
  }
}

TEST_CASE("two-layer attention block matches finite differences") {
  Rng rng(11);
  ParamStore store;
  BlockShape shape{8, 2, 16};
  init_encoder_block(store, "b0", shape, rng);
  init_encoder_block(store, "b1", shape, rng);
  Graph g = [shape](Tape& tape, const std::vector<Var>& in, const ParamStore& p) {
    Var x = encoder_block(tape, p, "b0", in[0], shape, 2);
    x = encoder_block(tape, p, "b1", x, shape, 2);
    return GraphOutput{{x}, project_loss(tape, x, 5)};
  };
  Tensor x = Tensor::from_matrix(random_mat(10, 8, rng), false, true);
  Rng probe(3);
  CHECK(finite_diff_check(g, {x}, store, 5, 1e-5, probe) < 1e-4);
}

TEST_CASE("cross block with key padding matches finite differences") {
  Rng rng(12);
  ParamStore store;
  BlockShape shape{8, 2, 12};
  init_cross_block(store, "c", shape, rng);
  std::vector<int> lengths = {5, 3};
  Graph g = [shape, lengths](Tape& tape, const std::vector<Var>& in, const ParamStore& p) {
    Var x = cross_block(tape, p, "c", in[0], in[1], shape, 2, &lengths);
    return GraphOutput{{x}, project_loss(tape, x, 9)};
  };
  Tensor x = Tensor::from_matrix(random_mat(8, 8, rng), false, true);
  Tensor m = Tensor::from_matrix(random_mat(10, 8, rng), false, true);
  Rng probe(4);
  CHECK(finite_diff_check(g, {x, m}, store, 40, 1e-5, probe) < 1e-4);
}

TEST_CASE("finite_diff_check: linear graph is exact") {
  Rng rng(2);
  ParamStore store;
  init_linear(store, "lin", 4, 3, rng);
  Graph g = [](Tape& tape, const std::vector<Var>& in, const ParamStore& p) {
    Var y = linear(tape, p, "lin", in[0]);
    return GraphOutput{{y}, ops::sum(y)};
  };
  Tensor x = Tensor::from_matrix(random_mat(5, 4, rng), false, true);
  Rng probe(1);
  CHECK(finite_diff_check(g, {x}, store, 20, 1e-5, probe) < 1e-8);
}

TEST_CASE("finite_diff_check: periodic signal path") {
  Rng rng(21);
  ParamStore store;
  store.add("phase", Tensor::from_matrix(random_mat(4, 6, rng, 0.7)));
  Mat time = random_mat(9, 6, rng);
  Graph g = [time](Tape& tape, const std::vector<Var>&, const ParamStore& p) {
    Var s = ops::periodic_signal(tape.param(p, "phase"), time);
    return GraphOutput{{s}, project_loss(tape, s, 4)};
  };
  Rng probe(8);
  CHECK(finite_diff_check(g, {}, store, 24, 1e-5, probe) < 1e-5);
}

TEST_CASE("loss ops match finite differences") {
  Rng rng(5);
  Tensor a = Tensor::from_matrix(random_mat(3, 4, rng), false, true);
  Tensor b = Tensor::from_matrix(random_mat(3, 4, rng), false, true);
  Graph g = [](Tape& tape, const std::vector<Var>& in, const ParamStore&) {
    Var l = ops::add(ops::l1(in[0], in[1]), ops::mse(in[0], in[1]));
    l = ops::add(l, ops::masked_mse(in[0], in[1], {1.0, 0.0, 1.0}));
    l = ops::add(l, ops::mean(ops::sin(ops::gather_rows(in[0], {2, 0, 2}))));
    Var r = ops::reshape(ops::slice_rows(in[1], 1, 2), 1, 8);
    l = ops::add(l, project_loss(tape, ops::gelu(r), 17));
    return GraphOutput{{}, l};
  };
  Rng probe(6);
  CHECK(finite_diff_check(g, {a, b}, ParamStore{}, 30, 1e-6, probe) < 1e-4);
}

TEST_CASE("softmax rows and layer norm statistics") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Mat s = random_mat(6, 9, rng, 5.0);
    Mat p = softmax_rows(s);
    for (int i = 0; i < 6; ++i) CHECK(std::abs(p.row(i).sum() - 1.0) < 1e-12);
    Mat ln = layer_norm_rows(random_mat(5, 64, rng, 3.0), 0.0);
    for (int i = 0; i < 5; ++i) {
      const double mu = ln.row(i).mean();
      const double var = (ln.row(i).array() - mu).square().mean();
      CHECK(std::abs(mu) < 1e-9);
      CHECK(std::abs(var - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("key padding mask equals truncated attention") {
  Rng rng(8);
  Mat q = random_mat(3, 4, rng);
  Mat k = random_mat(5, 4, rng);
  Mat v = random_mat(5, 4, rng);
  std::vector<int> len = {3};
  Tape t1(false);
  Var masked = ops::attention(t1.constant(q), t1.constant(k), t1.constant(v), 2, 1, &len);
  Tape t2(false);
  Var trunc = ops::attention(t2.constant(q), t2.constant(k.topRows(3)), t2.constant(v.topRows(3)), 2, 1);
  CHECK((masked.value() - trunc.value()).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("adam: zero gradient is a fixed point") {
  ParamStore store;
  store.add("w", Tensor({3}, {1.0, -2.0, 0.5}));
  adam_step(store, {{"w", Mat::Zero(1, 3)}}, AdamConfig{});
  CHECK(store.at("w").values() == std::vector<double>{1.0, -2.0, 0.5});
  CHECK(store.step() == 1);
}

TEST_CASE("adam: first bias-corrected step has magnitude lr") {
  // m_hat = g, v_hat = g^2 after one step, so the update is lr * g / (|g| + eps).
  ParamStore store;
  store.add("w", Tensor({1}, {0.0}));
  adam_step(store, {{"w", Mat::Constant(1, 1, 1.0)}}, AdamConfig{0.1, 0.9, 0.999, 1e-8});
  CHECK(store.at("w").values()[0] == doctest::Approx(-0.1 / (1.0 + 1e-8)).epsilon(1e-14));
}

TEST_CASE("adam: non-finite gradient names the parameter") {
  ParamStore store;
  store.add("layer.w", Tensor({2}, {0.0, 0.0}));
  Mat g(1, 2);
  g << 1.0, std::nan("");
  try {
    adam_step(store, {{"layer.w", g}}, AdamConfig{});
    FAIL("expected an error");
  } catch (const cpd::Error& e) {
    CHECK(e.kind() == cpd::ErrorKind::NumericalFailure);
    CHECK(std::string(e.what()).find("layer.w") != std::string::npos);
  }
  CHECK(store.at("layer.w").values()[0] == 0.0);
}

TEST_CASE("training is bitwise reproducible") {
  auto run = [] {
    Rng rng(99);
    ParamStore store;
    init_linear(store, "l1", 3, 8, rng);
    init_linear(store, "l2", 8, 1, rng);
    Rng data(5);
    for (int step = 0; step < 100; ++step) {
      Tape tape;
      Var x = tape.constant(random_mat(4, 3, data));
      Var y = linear(tape, store, "l2", ops::gelu(linear(tape, store, "l1", x)));
      Var loss = ops::mse(y, tape.constant(Mat::Ones(4, 1)));
      tape.backward(loss);
      adam_step(store, tape.param_grads(), AdamConfig{1e-2});
    }
    return store;
  };
  ParamStore a = run();
  ParamStore b = run();
  for (const auto& name : a.names()) CHECK(a.at(name).values() == b.at(name).values());
}

TEST_CASE("rng streams are reproducible and independent") {
  Rng a(42), b(42);
  for (int i = 0; i < 10; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng resumed(RngState{42, 5});
  Rng fresh(42);
  for (int i = 0; i < 5; ++i) fresh.next_u64();
  CHECK(resumed.next_u64() == fresh.next_u64());
  CHECK(Rng(42).fork(1).next_u64() != Rng(42).fork(2).next_u64());

  Rng n(3);
  double s = 0.0, s2 = 0.0;
  const int count = 20000;
  for (int i = 0; i < count; ++i) {
    const double x = n.normal();
    s += x;
    s2 += x * x;
  }
  CHECK(std::abs(s / count) < 0.03);
  CHECK(std::abs(s2 / count - 1.0) < 0.05);
}

TEST_CASE("checkpoint round trip is lossless") {
  Rng rng(1);
  Checkpoint ck;
  ck.config_digest = 0x0123456789abcdefULL;
  ck.metadata["kind"] = "test";
  ck.params.emplace("a", Tensor::from_matrix(random_mat(3, 5, rng)));
  ck.params.emplace("b", Tensor({4}, {1e-300, -0.0, std::numbers::pi, 1e300}));
  ck.stats.emplace("mu", Tensor({2}, {0.1, 0.2}));

  std::stringstream ss;
  write_checkpoint(ss, ck);
  const std::string bytes = ss.str();
  Checkpoint back = read_checkpoint(ss);
  CHECK(back.config_digest == ck.config_digest);
  CHECK(back.metadata == ck.metadata);
  CHECK(digest_tensors(back.params) == digest_tensors(ck.params));
  CHECK(back.params.at("b").values() == ck.params.at("b").values());
  CHECK(back.stats.at("mu").shape() == std::vector<std::size_t>{2});

  std::stringstream again;
  write_checkpoint(again, back);
  CHECK(again.str() == bytes);

  std::stringstream truncated(bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(read_checkpoint(truncated), cpd::Error);
  try {
    load_checkpoint("/nonexistent/dir/none.ckpt");
  } catch (const cpd::Error& e) {
    CHECK(e.kind() == cpd::ErrorKind::MissingCheckpoint);
  }
}
