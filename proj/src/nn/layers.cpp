#include "cadvlm/nn/layers.hpp"

#include "cadvlm/error.hpp"

namespace cadvlm::nn {

Var ParamStore::add(const std::string& name, Tensor init, bool decay) {
  if (contains(name)) throw Error(Errc::ShapeMismatch, "duplicate parameter " + name);
  const Shape shape = init.shape();
  ParamEntry entry{name, leaf(std::move(init)), Tensor(shape), Tensor(shape), decay};
  index_.emplace(name, entries_.size());
  entries_.push_back(std::move(entry));
  return entries_.back().param;
}

Var ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error(Errc::CheckpointMismatch, "no parameter named " + name);
  return entries_[it->second].param;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.param.zero_grad();
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.param.size();
  return n;
}

Tensor normal_tensor(const Shape& shape, double stddev, Rng& rng) {
  Tensor t(shape);
  for (double& v : t.data()) v = rng.normal(0.0, stddev);
  return t;
}

Linear Linear::create(ParamStore& store, const std::string& name, int in, int out, Rng& rng, bool with_bias,
                      double stddev) {
  Linear l;
  l.weight = store.add(name + ".weight", normal_tensor({in, out}, stddev, rng));
  if (with_bias) l.bias = store.add(name + ".bias", Tensor({out}), false);
  return l;
}

LayerNorm LayerNorm::create(ParamStore& store, const std::string& name, int features) {
  return {store.add(name + ".gain", Tensor({features}, 1.0), false),
          store.add(name + ".bias", Tensor({features}), false)};
}

Mlp Mlp::create(ParamStore& store, const std::string& name, int d_model, int hidden, Rng& rng) {
  return {Linear::create(store, name + ".up", d_model, hidden, rng),
          Linear::create(store, name + ".down", hidden, d_model, rng)};
}

MultiHeadAttention MultiHeadAttention::create(ParamStore& store, const std::string& name, int d_model, int heads,
                                              Rng& rng) {
  if (heads <= 0 || d_model % heads != 0) {
    throw Error(Errc::ShapeMismatch, name + ": d_model " + std::to_string(d_model) + " not divisible by " +
                                         std::to_string(heads) + " heads");
  }
  MultiHeadAttention a;
  a.query = Linear::create(store, name + ".query", d_model, d_model, rng);
  a.key = Linear::create(store, name + ".key", d_model, d_model, rng);
  a.value = Linear::create(store, name + ".value", d_model, d_model, rng);
  a.out = Linear::create(store, name + ".out", d_model, d_model, rng);
  a.heads = heads;
  return a;
}

Var MultiHeadAttention::operator()(const Var& x, const Var& source, const AttnMask& mask) const {
  return out(attention(query(x), key(source), value(source), heads, mask));
}

TransformerBlock TransformerBlock::create(ParamStore& store, const std::string& name, const BlockConfig& cfg,
                                          Rng& rng, const DropoutConfig& drop) {
  TransformerBlock b;
  b.ln_self_ = LayerNorm::create(store, name + ".ln_self", cfg.d_model);
  b.self_attn_ = MultiHeadAttention::create(store, name + ".self_attn", cfg.d_model, cfg.heads, rng);
  b.has_cross_ = cfg.cross_attention;
  if (cfg.cross_attention) {
    b.ln_cross_ = LayerNorm::create(store, name + ".ln_cross", cfg.d_model);
    b.cross_attn_ = MultiHeadAttention::create(store, name + ".cross_attn", cfg.d_model, cfg.heads, rng);
  }
  b.ln_mlp_ = LayerNorm::create(store, name + ".ln_mlp", cfg.d_model);
  b.mlp_ = Mlp::create(store, name + ".mlp", cfg.d_model, cfg.d_model * cfg.mlp_ratio, rng);
  if (drop.p > 0.0 && !drop.rng) throw Error(Errc::ShapeMismatch, name + ": dropout needs an rng");
  b.dropout_ = drop.p;
  b.rng_ = drop.rng;
  return b;
}

Var TransformerBlock::operator()(const Var& x, const AttnMask& self_mask, const Var& memory,
                                 const AttnMask& memory_mask) const {
  const Var h = ln_self_(x);
  Var y = add(x, branch(self_attn_(h, h, self_mask)));
  if (has_cross_ && memory.defined()) {
    y = add(y, branch(cross_attn_(ln_cross_(y), memory, memory_mask)));
  }
  return add(y, branch(mlp_(ln_mlp_(y))));
}

}  // namespace cadvlm::nn
