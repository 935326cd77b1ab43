#include "consor/nn.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace consor {

Parameter& ParamStore::create(const std::string& name, Mat init, bool decay) {
  if (index_.count(name) != 0) throw std::invalid_argument("duplicate parameter name: " + name);
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->value = std::move(init);
  p->decay = decay;
  p->zero_grad();
  index_.emplace(name, params_.size());
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter* ParamStore::find(const std::string& name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : params_[it->second].get();
}

const Parameter* ParamStore::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : params_[it->second].get();
}

Parameter& ParamStore::at(const std::string& name) {
  Parameter* p = find(name);
  if (p == nullptr) throw std::out_of_range("unknown parameter: " + name);
  return *p;
}

std::vector<Parameter*> ParamStore::all() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> ParamStore::all() const {
  std::vector<const Parameter*> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

std::size_t ParamStore::count(const std::string& prefix) const {
  std::size_t n = 0;
  for (const auto& p : params_) {
    if (p->name.rfind(prefix, 0) == 0) n += static_cast<std::size_t>(p->value.size());
  }
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

Linear Linear::create(ParamStore& store, const std::string& name, int in, int out, Rng& rng,
                      double init_std, bool with_bias) {
  Linear l;
  l.weight = &store.create(name + ".weight", rng.normal_matrix(in, out, init_std), true);
  if (with_bias) l.bias = &store.create(name + ".bias", Mat::Zero(1, out), false);
  return l;
}

Var Linear::operator()(Tape& tape, Var x) const {
  Var y = ad::matmul(x, tape.param(*weight));
  if (bias != nullptr) y = ad::add_row(y, tape.param(*bias));
  return y;
}

LayerNorm LayerNorm::create(ParamStore& store, const std::string& name, int width) {
  LayerNorm ln;
  ln.gamma = &store.create(name + ".gamma", Mat::Ones(1, width), false);
  ln.beta = &store.create(name + ".beta", Mat::Zero(1, width), false);
  return ln;
}

Var LayerNorm::operator()(Tape& tape, Var x) const {
  return ad::layer_norm(x, tape.param(*gamma), tape.param(*beta));
}

MultiHeadAttention MultiHeadAttention::create(ParamStore& store, const std::string& name, int width,
                                              int heads, Rng& rng, double init_std) {
  if (heads <= 0 || width % heads != 0) {
    throw std::invalid_argument(name + ": width must be divisible by the head count");
  }
  MultiHeadAttention a;
  a.heads = heads;
  a.q = Linear::create(store, name + ".q", width, width, rng, init_std);
  a.k = Linear::create(store, name + ".k", width, width, rng, init_std);
  a.v = Linear::create(store, name + ".v", width, width, rng, init_std);
  a.o = Linear::create(store, name + ".o", width, width, rng, init_std);
  return a;
}

Var MultiHeadAttention::operator()(Tape& tape, Var queries, Var keys_values, const Mat* mask,
                                   AttentionWeights* keep) const {
  Var qs = q(tape, queries);
  Var ks = k(tape, keys_values);
  Var vs = v(tape, keys_values);
  const Eigen::Index width = qs.cols();
  const Eigen::Index head_dim = width / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
  std::vector<Var> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Var qh = ad::slice_cols(qs, h * head_dim, head_dim);
    Var kh = ad::slice_cols(ks, h * head_dim, head_dim);
    Var vh = ad::slice_cols(vs, h * head_dim, head_dim);
    Var probs = ad::softmax_rows(ad::scale(ad::matmul_nt(qh, kh), inv_sqrt), mask);
    if (keep != nullptr) keep->push_back(probs.value());
    outs.push_back(ad::matmul(probs, vh));
  }
  Var merged = heads == 1 ? outs.front() : ad::concat_cols(outs);
  return o(tape, merged);
}

TransformerBlock TransformerBlock::create(ParamStore& store, const std::string& name, int width,
                                          int heads, int mlp_ratio, Rng& rng, double init_std) {
  TransformerBlock b;
  b.ln_attn = LayerNorm::create(store, name + ".ln_attn", width);
  b.attn = MultiHeadAttention::create(store, name + ".attn", width, heads, rng, init_std);
  b.ln_mlp = LayerNorm::create(store, name + ".ln_mlp", width);
  b.fc1 = Linear::create(store, name + ".fc1", width, width * mlp_ratio, rng, init_std);
  b.fc2 = Linear::create(store, name + ".fc2", width * mlp_ratio, width, rng, init_std);
  return b;
}

Var TransformerBlock::operator()(Tape& tape, Var x, const Mat* mask) const {
  Var h = ln_attn(tape, x);
  x = ad::add(x, attn(tape, h, h, mask));
  Var m = fc2(tape, ad::gelu(fc1(tape, ln_mlp(tape, x))));
  return ad::add(x, m);
}

DecoderBlock DecoderBlock::create(ParamStore& store, const std::string& name, int width, int heads,
                                  int mlp_ratio, Rng& rng, double init_std) {
  DecoderBlock b;
  b.ln_self = LayerNorm::create(store, name + ".ln_self", width);
  b.self_attn = MultiHeadAttention::create(store, name + ".self_attn", width, heads, rng, init_std);
  b.ln_cross = LayerNorm::create(store, name + ".ln_cross", width);
  b.cross_attn = MultiHeadAttention::create(store, name + ".cross_attn", width, heads, rng, init_std);
  b.ln_mlp = LayerNorm::create(store, name + ".ln_mlp", width);
  b.fc1 = Linear::create(store, name + ".fc1", width, width * mlp_ratio, rng, init_std);
  b.fc2 = Linear::create(store, name + ".fc2", width * mlp_ratio, width, rng, init_std);
  return b;
}

Var DecoderBlock::operator()(Tape& tape, Var queries, Var memory,
                             AttentionWeights* cross_keep) const {
  Var h = ln_self(tape, queries);
  Var x = ad::add(queries, self_attn(tape, h, h));
  x = ad::add(x, cross_attn(tape, ln_cross(tape, x), memory, nullptr, cross_keep));
  Var m = fc2(tape, ad::gelu(fc1(tape, ln_mlp(tape, x))));
  return ad::add(x, m);
}

Mat causal_mask(Eigen::Index length) {
  Mat m = Mat::Zero(length, length);
  const double blocked = -std::numeric_limits<double>::infinity();
  for (Eigen::Index r = 0; r < length; ++r) {
    for (Eigen::Index c = r + 1; c < length; ++c) m(r, c) = blocked;
  }
  return m;
}

}  // namespace consor
