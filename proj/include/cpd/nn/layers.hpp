#pragma once

#include "cpd/nn/rng.hpp"
#include "cpd/nn/tape.hpp"

#include <string>
#include <vector>

namespace cpd::nn {

// Transformer building blocks. Parameters live in a ParamStore under a name
// prefix; init_* registers them, the matching function evaluates on a tape.

// prefix.w is in x out, prefix.b is out. uniform(-1/sqrt(in), 1/sqrt(in)) init.
void init_linear(ParamStore& store, const std::string& prefix, int in, int out, Rng& rng, bool bias = true);
Var linear(Tape& tape, const ParamStore& store, const std::string& prefix, Var x);

void init_layer_norm(ParamStore& store, const std::string& prefix, int width);
Var layer_norm(Tape& tape, const ParamStore& store, const std::string& prefix, Var x);

// Learned table of `count` rows of `width` entries.
void init_embedding(ParamStore& store, const std::string& name, int count, int width, Rng& rng);

struct BlockShape {
  int width = 64;
  int heads = 4;
  int ff = 128;
};

void init_attention(ParamStore& store, const std::string& prefix, int width, Rng& rng);
// Multi-head attention with q/k/v/o projections. x_q and x_kv hold `batch` stacked sequences.
Var multi_head_attention(Tape& tape, const ParamStore& store, const std::string& prefix, Var x_q, Var x_kv,
                         int heads, int batch, const std::vector<int>* key_lengths = nullptr);

// Pre-norm self-attention block: x + MHA(LN(x)), then x + FF(LN(x)).
void init_encoder_block(ParamStore& store, const std::string& prefix, const BlockShape& shape, Rng& rng);
Var encoder_block(Tape& tape, const ParamStore& store, const std::string& prefix, Var x, const BlockShape& shape,
                  int batch, const std::vector<int>* key_lengths = nullptr);

// Pre-norm block with self-attention over x, cross-attention from x to memory, then FF.
void init_cross_block(ParamStore& store, const std::string& prefix, const BlockShape& shape, Rng& rng);
Var cross_block(Tape& tape, const ParamStore& store, const std::string& prefix, Var x, Var memory,
                const BlockShape& shape, int batch, const std::vector<int>* memory_lengths = nullptr);

}  // namespace cpd::nn
