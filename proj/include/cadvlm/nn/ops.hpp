#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cadvlm/nn/tensor.hpp"
#include "cadvlm/rng.hpp"

namespace cadvlm::nn {

// All ops record themselves for backward() when any input requires grad.
// Shape errors throw Errc::ShapeMismatch.

Var matmul(const Var& a, const Var& b);     // [M,K] x [K,N]
Var matmul_nt(const Var& a, const Var& b);  // [M,K] x [N,K]^T
Var transpose(const Var& a);                // 2-D only
// x[..., K] * w[K, N] + b[N]; `b` may be undefined.
Var linear(const Var& x, const Var& w, const Var& b);

Var add(const Var& a, const Var& b);  // identical shapes
// `b` repeated over the leading dimensions of `a` (e.g. [B,L,D] + [L,D]).
Var add_broadcast(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);  // elementwise, identical shapes
Var scale(const Var& a, double s);
Var mul_scalar(const Var& a, const Var& s);  // s has one element
Var exp(const Var& a);
Var gelu(const Var& a);  // exact erf form
// Inverted dropout: zeroes each element with probability p and scales the
// survivors by 1/(1-p). Identity when p == 0 or recording is off.
Var dropout(const Var& a, double p, Rng& rng);
Var sum(const Var& a);
Var mean(const Var& a);

// Normalizes over the last dimension.
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);

// Rows of table[V, D] gathered by id; result shape is `leading` + [D].
// Throws Errc::TokenOutOfRange for ids outside [0, V).
Var embedding(const Var& table, std::span<const int> ids, const Shape& leading);

Var reshape(const Var& a, Shape shape);
Var concat_seq(const Var& a, const Var& b);           // [B,La,D] ++ [B,Lb,D]
Var slice_seq(const Var& a, int start, int length);   // along axis 1 of [B,L,D]

struct AttnMask {
  bool causal = false;
  // One flag per (batch, key position); empty means every key is visible.
  std::vector<std::uint8_t> key_valid;
};

// Scaled dot-product attention over `heads` heads.
// q: [B,Lq,D], k and v: [B,Lk,D]. Under `causal`, query i sees keys
// j <= i + (Lk - Lq). Queries with no visible key produce zeros.
Var attention(const Var& q, const Var& k, const Var& v, int heads, const AttnMask& mask);

// Mean over visible positions: [B,L,D] -> [B,D]. valid has B*L entries.
Var masked_mean(const Var& x, std::span<const std::uint8_t> valid);
// Unit L2 norm per row of [N, D].
Var l2_normalize(const Var& x, double eps = 1e-12);
Var softmax_rows(const Var& x);  // over the last dimension

// Mean negative log-likelihood over rows of logits[N, C] whose target is not
// `ignore_index`. Throws Errc::EmptyTarget when every row is ignored.
Var cross_entropy(const Var& logits, std::span<const int> targets, int ignore_index = -1);
// Mean squared error against a constant target of the same size.
Var mse(const Var& pred, Tensor target);

}  // namespace cadvlm::nn
