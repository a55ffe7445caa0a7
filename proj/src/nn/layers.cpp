#include "cpd/nn/layers.hpp"

#include <cmath>

namespace cpd::nn {

namespace {

Tensor uniform_tensor(std::vector<std::size_t> shape, double bound, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

void init_linear(ParamStore& store, const std::string& prefix, int in, int out, Rng& rng, bool bias) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  store.add(prefix + ".w", uniform_tensor({static_cast<std::size_t>(in), static_cast<std::size_t>(out)}, bound, rng));
  if (bias) store.add(prefix + ".b", uniform_tensor({static_cast<std::size_t>(out)}, bound, rng));
}

Var linear(Tape& tape, const ParamStore& store, const std::string& prefix, Var x) {
  Var y = ops::matmul(x, tape.param(store, prefix + ".w"));
  if (store.contains(prefix + ".b")) y = ops::add_row(y, tape.param(store, prefix + ".b"));
  return y;
}

void init_layer_norm(ParamStore& store, const std::string& prefix, int width) {
  const auto w = static_cast<std::size_t>(width);
  store.add(prefix + ".g", Tensor({w}, std::vector<double>(w, 1.0)));
  store.add(prefix + ".b", Tensor::zeros({w}));
}

Var layer_norm(Tape& tape, const ParamStore& store, const std::string& prefix, Var x) {
  return ops::layer_norm(x, tape.param(store, prefix + ".g"), tape.param(store, prefix + ".b"));
}

void init_embedding(ParamStore& store, const std::string& name, int count, int width, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(width));
  store.add(name, uniform_tensor({static_cast<std::size_t>(count), static_cast<std::size_t>(width)}, bound, rng));
}

void init_attention(ParamStore& store, const std::string& prefix, int width, Rng& rng) {
  for (const char* p : {".q", ".k", ".v", ".o"}) init_linear(store, prefix + p, width, width, rng);
}

Var multi_head_attention(Tape& tape, const ParamStore& store, const std::string& prefix, Var x_q, Var x_kv,
                         int heads, int batch, const std::vector<int>* key_lengths) {
  Var q = linear(tape, store, prefix + ".q", x_q);
  Var k = linear(tape, store, prefix + ".k", x_kv);
  Var v = linear(tape, store, prefix + ".v", x_kv);
  Var a = ops::attention(q, k, v, heads, batch, key_lengths);
  return linear(tape, store, prefix + ".o", a);
}

namespace {

void init_ff(ParamStore& store, const std::string& prefix, const BlockShape& s, Rng& rng) {
  init_linear(store, prefix + ".ff1", s.width, s.ff, rng);
  init_linear(store, prefix + ".ff2", s.ff, s.width, rng);
}

Var ff(Tape& tape, const ParamStore& store, const std::string& prefix, Var x) {
  return linear(tape, store, prefix + ".ff2", ops::gelu(linear(tape, store, prefix + ".ff1", x)));
}

}  // namespace

void init_encoder_block(ParamStore& store, const std::string& prefix, const BlockShape& shape, Rng& rng) {
  init_layer_norm(store, prefix + ".ln1", shape.width);
  init_attention(store, prefix + ".attn", shape.width, rng);
  init_layer_norm(store, prefix + ".ln2", shape.width);
  init_ff(store, prefix, shape, rng);
}

Var encoder_block(Tape& tape, const ParamStore& store, const std::string& prefix, Var x, const BlockShape& shape,
                  int batch, const std::vector<int>* key_lengths) {
  Var h = layer_norm(tape, store, prefix + ".ln1", x);
  x = ops::add(x, multi_head_attention(tape, store, prefix + ".attn", h, h, shape.heads, batch, key_lengths));
  h = layer_norm(tape, store, prefix + ".ln2", x);
  return ops::add(x, ff(tape, store, prefix, h));
}

void init_cross_block(ParamStore& store, const std::string& prefix, const BlockShape& shape, Rng& rng) {
  init_layer_norm(store, prefix + ".ln1", shape.width);
  init_attention(store, prefix + ".self", shape.width, rng);
  init_layer_norm(store, prefix + ".ln2", shape.width);
  init_layer_norm(store, prefix + ".lnm", shape.width);
  init_attention(store, prefix + ".cross", shape.width, rng);
  init_layer_norm(store, prefix + ".ln3", shape.width);
  init_ff(store, prefix, shape, rng);
}

Var cross_block(Tape& tape, const ParamStore& store, const std::string& prefix, Var x, Var memory,
                const BlockShape& shape, int batch, const std::vector<int>* memory_lengths) {
  Var h = layer_norm(tape, store, prefix + ".ln1", x);
  x = ops::add(x, multi_head_attention(tape, store, prefix + ".self", h, h, shape.heads, batch));
  h = layer_norm(tape, store, prefix + ".ln2", x);
  Var m = layer_norm(tape, store, prefix + ".lnm", memory);
  x = ops::add(x, multi_head_attention(tape, store, prefix + ".cross", h, m, shape.heads, batch, memory_lengths));
  h = layer_norm(tape, store, prefix + ".ln3", x);
  return ops::add(x, ff(tape, store, prefix, h));
}

}  // namespace cpd::nn
