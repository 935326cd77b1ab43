#pragma once

// Parameter storage and the transformer building blocks shared by the side
// adapter and the pair reasoning module.

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "consor/autograd.hpp"
#include "consor/rng.hpp"

namespace consor {

/// Owns every trainable tensor; addresses stay stable for the store's
/// lifetime so modules can hold raw pointers.
class ParamStore {
 public:
  Parameter& create(const std::string& name, Mat init, bool decay);
  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;
  Parameter& at(const std::string& name);

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  /// Number of scalars in parameters whose name starts with `prefix`.
  std::size_t count(const std::string& prefix = "") const;
  void zero_grad();

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::map<std::string, std::size_t> index_;
};

struct Linear {
  Parameter* weight = nullptr;  // [in, out]
  Parameter* bias = nullptr;    // [1, out], may be null

  static Linear create(ParamStore& store, const std::string& name, int in, int out, Rng& rng,
                       double init_std, bool with_bias = true);
  Var operator()(Tape& tape, Var x) const;
};

struct LayerNorm {
  Parameter* gamma = nullptr;
  Parameter* beta = nullptr;

  static LayerNorm create(ParamStore& store, const std::string& name, int width);
  Var operator()(Tape& tape, Var x) const;
};

/// Per-head attention probabilities, one [queries, keys] matrix per head.
using AttentionWeights = std::vector<Mat>;

struct MultiHeadAttention {
  Linear q, k, v, o;
  int heads = 1;

  static MultiHeadAttention create(ParamStore& store, const std::string& name, int width, int heads,
                                   Rng& rng, double init_std);
  /// `mask` is additive and shaped [queries, keys]. When `keep` is non-null
  /// the softmax weights of every head are appended to it.
  Var operator()(Tape& tape, Var queries, Var keys_values, const Mat* mask = nullptr,
                 AttentionWeights* keep = nullptr) const;
};

/// Pre-norm encoder block: x + MSA(LN(x)), then x + MLP(LN(x)).
struct TransformerBlock {
  LayerNorm ln_attn;
  MultiHeadAttention attn;
  LayerNorm ln_mlp;
  Linear fc1, fc2;

  static TransformerBlock create(ParamStore& store, const std::string& name, int width, int heads,
                                 int mlp_ratio, Rng& rng, double init_std);
  Var operator()(Tape& tape, Var x, const Mat* mask = nullptr) const;
};

/// Pre-norm decoder block: self-attention over the queries, cross-attention
/// onto a memory sequence, then an MLP.
struct DecoderBlock {
  LayerNorm ln_self;
  MultiHeadAttention self_attn;
  LayerNorm ln_cross;
  MultiHeadAttention cross_attn;
  LayerNorm ln_mlp;
  Linear fc1, fc2;

  static DecoderBlock create(ParamStore& store, const std::string& name, int width, int heads,
                             int mlp_ratio, Rng& rng, double init_std);
  Var operator()(Tape& tape, Var queries, Var memory, AttentionWeights* cross_keep = nullptr) const;
};

/// Additive causal mask: position t may attend to positions <= t.
Mat causal_mask(Eigen::Index length);

}  // namespace consor
