#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "cadvlm/nn/ops.hpp"
#include "cadvlm/rng.hpp"

namespace cadvlm::nn {

struct ParamEntry {
  std::string name;
  Var param;
  Tensor m;  // first Adam moment
  Tensor v;  // second Adam moment
  bool decay = true;
};

// Named trainable tensors plus optimizer state.
class ParamStore {
 public:
  Var add(const std::string& name, Tensor init, bool decay = true);
  Var get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::vector<ParamEntry>& entries() { return entries_; }
  const std::vector<ParamEntry>& entries() const { return entries_; }

  long step() const { return step_; }
  void set_step(long step) { step_ = step; }

  void zero_grad();
  std::size_t parameter_count() const;

 private:
  std::vector<ParamEntry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
  long step_ = 0;
};

Tensor normal_tensor(const Shape& shape, double stddev, Rng& rng);

struct Linear {
  Var weight;  // [in, out]
  Var bias;    // [out], may be undefined

  static Linear create(ParamStore& store, const std::string& name, int in, int out, Rng& rng,
                       bool with_bias = true, double stddev = 0.02);
  Var operator()(const Var& x) const { return linear(x, weight, bias); }
};

struct LayerNorm {
  Var gain;
  Var bias;

  static LayerNorm create(ParamStore& store, const std::string& name, int features);
  Var operator()(const Var& x) const { return layer_norm(x, gain, bias); }
};

// Position-wise feed-forward: Linear -> GELU -> Linear.
struct Mlp {
  Linear up;
  Linear down;

  static Mlp create(ParamStore& store, const std::string& name, int d_model, int hidden, Rng& rng);
  Var operator()(const Var& x) const { return down(gelu(up(x))); }
};

struct MultiHeadAttention {
  Linear query;
  Linear key;
  Linear value;
  Linear out;
  int heads = 1;

  static MultiHeadAttention create(ParamStore& store, const std::string& name, int d_model, int heads,
                                   Rng& rng);
  // Queries from x, keys/values from `source` (x itself for self-attention).
  Var operator()(const Var& x, const Var& source, const AttnMask& mask) const;
};

enum class MaskKind { Causal, Full, Cross };

struct BlockConfig {
  int d_model = 64;
  int heads = 4;
  int mlp_ratio = 4;
  bool cross_attention = false;
};

// Residual-branch dropout, applied only while recording.
struct DropoutConfig {
  double p = 0.0;
  std::shared_ptr<Rng> rng;  // required when p > 0
};

// Pre-norm residual block:
//   x += SelfAttn(LN(x)); [x += CrossAttn(LN(x), memory)]; x += MLP(LN(x))
class TransformerBlock {
 public:
  static TransformerBlock create(ParamStore& store, const std::string& name, const BlockConfig& cfg, Rng& rng,
                                 const DropoutConfig& drop = {});

  // `self_mask` carries causal/padding information for x. Cross-attention is
  // applied only when the block was built with it and `memory` is defined.
  Var operator()(const Var& x, const AttnMask& self_mask, const Var& memory = {},
                 const AttnMask& memory_mask = {}) const;

 private:
  LayerNorm ln_self_;
  MultiHeadAttention self_attn_;
  bool has_cross_ = false;
  LayerNorm ln_cross_;
  MultiHeadAttention cross_attn_;
  LayerNorm ln_mlp_;
  Mlp mlp_;
  double dropout_ = 0.0;
  std::shared_ptr<Rng> rng_;

  Var branch(const Var& v) const { return dropout_ > 0.0 ? dropout(v, dropout_, *rng_) : v; }
};

}  // namespace cadvlm::nn
