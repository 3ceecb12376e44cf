#include "cadvlm/nn/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "cadvlm/error.hpp"

namespace cadvlm::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using CMatMap = Eigen::Map<const RowMat>;
using Strided = Eigen::OuterStride<>;
using SMatMap = Eigen::Map<RowMat, 0, Strided>;
using CSMatMap = Eigen::Map<const RowMat, 0, Strided>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using CVecMap = Eigen::Map<const Eigen::VectorXd>;

[[noreturn]] void shape_error(const std::string& op, const std::string& detail) {
  throw Error(Errc::ShapeMismatch, op + ": " + detail);
}

void require_rank(const Var& a, int rank, const char* op) {
  if (a.value().rank() != rank) {
    shape_error(op, "expected rank " + std::to_string(rank) + ", got " + shape_str(a.shape()));
  }
}

void require_same(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) shape_error(op, shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

// Gradient buffer of parent i, or nullptr if it does not need one.
double* pgrad(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  return p.requires_grad ? p.ensure_grad().data() : nullptr;
}

const Tensor& pval(Node& self, std::size_t i) { return self.parents[i]->value; }

}  // namespace

Var matmul(const Var& a, const Var& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) shape_error("matmul", shape_str(a.shape()) + " x " + shape_str(b.shape()));
  Tensor out({m, n});
  MatMap(out.ptr(), m, n).noalias() = CMatMap(a.value().ptr(), m, k) * CMatMap(b.value().ptr(), k, n);
  return make_result(std::move(out), {a, b}, [m, k, n](Node& self) {
    CMatMap g(self.grad.data(), m, n);
    if (double* ga = pgrad(self, 0)) {
      MatMap(ga, m, k).noalias() += g * CMatMap(pval(self, 1).ptr(), k, n).transpose();
    }
    if (double* gb = pgrad(self, 1)) {
      MatMap(gb, k, n).noalias() += CMatMap(pval(self, 0).ptr(), m, k).transpose() * g;
    }
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  require_rank(a, 2, "matmul_nt");
  require_rank(b, 2, "matmul_nt");
  const int m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k) shape_error("matmul_nt", shape_str(a.shape()) + " x " + shape_str(b.shape()) + "^T");
  Tensor out({m, n});
  MatMap(out.ptr(), m, n).noalias() =
      CMatMap(a.value().ptr(), m, k) * CMatMap(b.value().ptr(), n, k).transpose();
  return make_result(std::move(out), {a, b}, [m, k, n](Node& self) {
    CMatMap g(self.grad.data(), m, n);
    if (double* ga = pgrad(self, 0)) {
      MatMap(ga, m, k).noalias() += g * CMatMap(pval(self, 1).ptr(), n, k);
    }
    if (double* gb = pgrad(self, 1)) {
      MatMap(gb, n, k).noalias() += g.transpose() * CMatMap(pval(self, 0).ptr(), m, k);
    }
  });
}

Var transpose(const Var& a) {
  require_rank(a, 2, "transpose");
  const int m = a.dim(0), n = a.dim(1);
  Tensor out({n, m});
  MatMap(out.ptr(), n, m) = CMatMap(a.value().ptr(), m, n).transpose();
  return make_result(std::move(out), {a}, [m, n](Node& self) {
    if (double* ga = pgrad(self, 0)) {
      MatMap(ga, m, n) += CMatMap(self.grad.data(), n, m).transpose();
    }
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  require_rank(w, 2, "linear");
  const int k = w.dim(0), n = w.dim(1);
  if (x.value().rank() < 1 || x.dim(-1) != k) {
    shape_error("linear", "input " + shape_str(x.shape()) + " vs weight " + shape_str(w.shape()));
  }
  if (b.defined() && (b.value().rank() != 1 || b.dim(0) != n)) {
    shape_error("linear", "bias " + shape_str(b.shape()) + " for " + std::to_string(n) + " outputs");
  }
  const int rows = static_cast<int>(x.size() / static_cast<std::size_t>(k));
  Shape out_shape = x.shape();
  out_shape.back() = n;
  Tensor out(out_shape);
  MatMap y(out.ptr(), rows, n);
  y.noalias() = CMatMap(x.value().ptr(), rows, k) * CMatMap(w.value().ptr(), k, n);
  if (b.defined()) y.rowwise() += CVecMap(b.value().ptr(), n).transpose();

  std::vector<Var> parents = {x, w};
  if (b.defined()) parents.push_back(b);
  return make_result(std::move(out), std::move(parents), [rows, k, n](Node& self) {
    CMatMap g(self.grad.data(), rows, n);
    if (double* gx = pgrad(self, 0)) {
      MatMap(gx, rows, k).noalias() += g * CMatMap(pval(self, 1).ptr(), k, n).transpose();
    }
    if (double* gw = pgrad(self, 1)) {
      MatMap(gw, k, n).noalias() += CMatMap(pval(self, 0).ptr(), rows, k).transpose() * g;
    }
    if (self.parents.size() > 2) {
      // Plain loops: Eigen's vectorized reductions depend on buffer alignment,
      // which would make training runs differ in the last bit.
      if (double* gb = pgrad(self, 2)) {
        for (int r = 0; r < rows; ++r) {
          for (int c = 0; c < n; ++c) gb[c] += g(r, c);
        }
      }
    }
  });
}

Var add(const Var& a, const Var& b) {
  require_same(a, b, "add");
  Tensor out(a.shape());
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) out[i] = a.value()[i] + b.value()[i];
  return make_result(std::move(out), {a, b}, [n](Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (double* g = pgrad(self, p)) {
        for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i];
      }
    }
  });
}

Var add_broadcast(const Var& a, const Var& b) {
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  if (m == 0 || n % m != 0) shape_error("add_broadcast", shape_str(a.shape()) + " + " + shape_str(b.shape()));
  Tensor out(a.shape());
  for (std::size_t i = 0; i < n; ++i) out[i] = a.value()[i] + b.value()[i % m];
  return make_result(std::move(out), {a, b}, [n, m](Node& self) {
    if (double* ga = pgrad(self, 0)) {
      for (std::size_t i = 0; i < n; ++i) ga[i] += self.grad[i];
    }
    if (double* gb = pgrad(self, 1)) {
      for (std::size_t i = 0; i < n; ++i) gb[i % m] += self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same(a, b, "mul");
  Tensor out(a.shape());
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) out[i] = a.value()[i] * b.value()[i];
  return make_result(std::move(out), {a, b}, [n](Node& self) {
    const Tensor& av = pval(self, 0);
    const Tensor& bv = pval(self, 1);
    if (double* ga = pgrad(self, 0)) {
      for (std::size_t i = 0; i < n; ++i) ga[i] += self.grad[i] * bv[i];
    }
    if (double* gb = pgrad(self, 1)) {
      for (std::size_t i = 0; i < n; ++i) gb[i] += self.grad[i] * av[i];
    }
  });
}

Var scale(const Var& a, double s) {
  Tensor out(a.shape());
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) out[i] = a.value()[i] * s;
  return make_result(std::move(out), {a}, [n, s](Node& self) {
    if (double* g = pgrad(self, 0)) {
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i] * s;
    }
  });
}

Var mul_scalar(const Var& a, const Var& s) {
  if (s.size() != 1) shape_error("mul_scalar", "scalar operand has shape " + shape_str(s.shape()));
  const double sv = s.item();
  Tensor out(a.shape());
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) out[i] = a.value()[i] * sv;
  return make_result(std::move(out), {a, s}, [n](Node& self) {
    const Tensor& av = pval(self, 0);
    const double sv = pval(self, 1)[0];
    if (double* ga = pgrad(self, 0)) {
      for (std::size_t i = 0; i < n; ++i) ga[i] += self.grad[i] * sv;
    }
    if (double* gs = pgrad(self, 1)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += self.grad[i] * av[i];
      gs[0] += acc;
    }
  });
}

Var exp(const Var& a) {
  Tensor out(a.shape());
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(a.value()[i]);
  auto result = make_result(std::move(out), {a}, {});
  if (result.requires_grad()) {
    result.node()->backward_fn = [n](Node& self) {
      if (double* g = pgrad(self, 0)) {
        for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i] * self.value[i];
      }
    };
  }
  return result;
}

Var gelu(const Var& a) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  Tensor out(a.shape());
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double x = a.value()[i];
    out[i] = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
  }
  return make_result(std::move(out), {a}, [n, inv_sqrt_2pi](Node& self) {
    double* g = pgrad(self, 0);
    if (!g) return;
    const Tensor& av = pval(self, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const double x = av[i];
      const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x * x);
      g[i] += self.grad[i] * (cdf + x * pdf);
    }
  });
}

Var dropout(const Var& a, double p, Rng& rng) {
  if (p <= 0.0 || !grad_enabled()) return a;
  if (!(p < 1.0)) throw Error(Errc::ShapeMismatch, "dropout rate must lie in [0, 1)");
  Tensor keep(a.shape());
  const double s = 1.0 / (1.0 - p);
  for (double& k : keep.data()) k = rng.bernoulli(p) ? 0.0 : s;
  return mul(a, constant(std::move(keep)));
}

Var sum(const Var& a) {
  double acc = 0.0;
  for (double v : a.value().data()) acc += v;
  Tensor out({}, {acc});
  const std::size_t n = a.size();
  return make_result(std::move(out), {a}, [n](Node& self) {
    if (double* g = pgrad(self, 0)) {
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0];
    }
  });
}

Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
  const int d = x.dim(-1);
  if (gain.size() != static_cast<std::size_t>(d) || bias.size() != static_cast<std::size_t>(d)) {
    shape_error("layer_norm", "features " + std::to_string(d) + " vs gain " + shape_str(gain.shape()));
  }
  const int rows = static_cast<int>(x.size() / static_cast<std::size_t>(d));
  Tensor out(x.shape());
  // xhat and 1/std are kept for the backward pass.
  auto xhat = std::make_shared<std::vector<double>>(x.size());
  auto rstd = std::make_shared<std::vector<double>>(static_cast<std::size_t>(rows));
  const double* xv = x.value().ptr();
  const double* gv = gain.value().ptr();
  const double* bv = bias.value().ptr();
  for (int r = 0; r < rows; ++r) {
    const double* row = xv + static_cast<std::size_t>(r) * d;
    double mu = 0.0;
    for (int j = 0; j < d; ++j) mu += row[j];
    mu /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= d;
    const double rs = 1.0 / std::sqrt(var + eps);
    (*rstd)[static_cast<std::size_t>(r)] = rs;
    for (int j = 0; j < d; ++j) {
      const std::size_t idx = static_cast<std::size_t>(r) * d + j;
      (*xhat)[idx] = (row[j] - mu) * rs;
      out[idx] = (*xhat)[idx] * gv[j] + bv[j];
    }
  }
  return make_result(std::move(out), {x, gain, bias}, [rows, d, xhat, rstd](Node& self) {
    double* gx = pgrad(self, 0);
    double* gg = pgrad(self, 1);
    double* gb = pgrad(self, 2);
    const double* gv = pval(self, 1).ptr();
    std::vector<double> dxhat(static_cast<std::size_t>(d));
    for (int r = 0; r < rows; ++r) {
      const std::size_t base = static_cast<std::size_t>(r) * d;
      double mean_dxhat = 0.0;
      double mean_dxhat_xhat = 0.0;
      for (int j = 0; j < d; ++j) {
        const double dy = self.grad[base + j];
        if (gg) gg[j] += dy * (*xhat)[base + j];
        if (gb) gb[j] += dy;
        dxhat[static_cast<std::size_t>(j)] = dy * gv[j];
        mean_dxhat += dxhat[static_cast<std::size_t>(j)];
        mean_dxhat_xhat += dxhat[static_cast<std::size_t>(j)] * (*xhat)[base + j];
      }
      if (!gx) continue;
      mean_dxhat /= d;
      mean_dxhat_xhat /= d;
      const double rs = (*rstd)[static_cast<std::size_t>(r)];
      for (int j = 0; j < d; ++j) {
        gx[base + j] += rs * (dxhat[static_cast<std::size_t>(j)] - mean_dxhat - (*xhat)[base + j] * mean_dxhat_xhat);
      }
    }
  });
}

Var embedding(const Var& table, std::span<const int> ids, const Shape& leading) {
  require_rank(table, 2, "embedding");
  const int vocab = table.dim(0), d = table.dim(1);
  if (numel(leading) != ids.size()) {
    shape_error("embedding", std::to_string(ids.size()) + " ids for leading shape " + shape_str(leading));
  }
  Shape out_shape = leading;
  out_shape.push_back(d);
  Tensor out(out_shape);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const int id = ids[i];
    if (id < 0 || id >= vocab) {
      throw Error(Errc::TokenOutOfRange, "token " + std::to_string(id) + " outside vocabulary of " +
                                             std::to_string(vocab));
    }
    std::copy_n(table.value().ptr() + static_cast<std::size_t>(id) * d, d, out.ptr() + i * d);
  }
  std::vector<int> idv(ids.begin(), ids.end());
  return make_result(std::move(out), {table}, [idv = std::move(idv), d](Node& self) {
    double* g = pgrad(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < idv.size(); ++i) {
      double* row = g + static_cast<std::size_t>(idv[i]) * d;
      for (int j = 0; j < d; ++j) row[j] += self.grad[i * d + j];
    }
  });
}

Var reshape(const Var& a, Shape shape) {
  Tensor out = a.value();
  out.reshape(std::move(shape));
  const std::size_t n = a.size();
  return make_result(std::move(out), {a}, [n](Node& self) {
    if (double* g = pgrad(self, 0)) {
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i];
    }
  });
}

Var concat_seq(const Var& a, const Var& b) {
  require_rank(a, 3, "concat_seq");
  require_rank(b, 3, "concat_seq");
  const int batch = a.dim(0), la = a.dim(1), lb = b.dim(1), d = a.dim(2);
  if (b.dim(0) != batch || b.dim(2) != d) {
    shape_error("concat_seq", shape_str(a.shape()) + " ++ " + shape_str(b.shape()));
  }
  const int l = la + lb;
  Tensor out({batch, l, d});
  for (int i = 0; i < batch; ++i) {
    std::copy_n(a.value().ptr() + static_cast<std::size_t>(i) * la * d, static_cast<std::size_t>(la) * d,
                out.ptr() + static_cast<std::size_t>(i) * l * d);
    std::copy_n(b.value().ptr() + static_cast<std::size_t>(i) * lb * d, static_cast<std::size_t>(lb) * d,
                out.ptr() + (static_cast<std::size_t>(i) * l + la) * d);
  }
  return make_result(std::move(out), {a, b}, [batch, la, lb, l, d](Node& self) {
    const std::size_t sa = static_cast<std::size_t>(la) * d;
    const std::size_t sb = static_cast<std::size_t>(lb) * d;
    double* ga = pgrad(self, 0);
    double* gb = pgrad(self, 1);
    for (int i = 0; i < batch; ++i) {
      const double* src = self.grad.data() + static_cast<std::size_t>(i) * l * d;
      if (ga) {
        for (std::size_t j = 0; j < sa; ++j) ga[i * sa + j] += src[j];
      }
      if (gb) {
        for (std::size_t j = 0; j < sb; ++j) gb[i * sb + j] += src[sa + j];
      }
    }
  });
}

Var slice_seq(const Var& a, int start, int length) {
  require_rank(a, 3, "slice_seq");
  const int batch = a.dim(0), l = a.dim(1), d = a.dim(2);
  if (start < 0 || length < 0 || start + length > l) {
    shape_error("slice_seq", "range [" + std::to_string(start) + "," + std::to_string(start + length) +
                                 ") of length " + std::to_string(l));
  }
  Tensor out({batch, length, d});
  for (int i = 0; i < batch; ++i) {
    std::copy_n(a.value().ptr() + (static_cast<std::size_t>(i) * l + start) * d,
                static_cast<std::size_t>(length) * d, out.ptr() + static_cast<std::size_t>(i) * length * d);
  }
  return make_result(std::move(out), {a}, [batch, l, d, start, length](Node& self) {
    double* g = pgrad(self, 0);
    if (!g) return;
    const std::size_t span_len = static_cast<std::size_t>(length) * d;
    for (int i = 0; i < batch; ++i) {
      double* dst = g + (static_cast<std::size_t>(i) * l + start) * d;
      const double* src = self.grad.data() + i * span_len;
      for (std::size_t j = 0; j < span_len; ++j) dst[j] += src[j];
    }
  });
}

Var attention(const Var& q, const Var& k, const Var& v, int heads, const AttnMask& mask) {
  require_rank(q, 3, "attention");
  require_rank(k, 3, "attention");
  require_same(k, v, "attention");
  const int batch = q.dim(0), lq = q.dim(1), d = q.dim(2), lk = k.dim(1);
  if (k.dim(0) != batch || k.dim(2) != d) {
    shape_error("attention", "query " + shape_str(q.shape()) + " vs key " + shape_str(k.shape()));
  }
  if (heads <= 0 || d % heads != 0) {
    shape_error("attention", std::to_string(d) + " features over " + std::to_string(heads) + " heads");
  }
  if (!mask.key_valid.empty() && mask.key_valid.size() != static_cast<std::size_t>(batch) * lk) {
    shape_error("attention", "key mask of length " + std::to_string(mask.key_valid.size()));
  }
  const int dh = d / heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
  const int offset = lk - lq;

  // Visibility of key j for query i in batch b.
  auto visible = [&mask, lk, offset](int b, int i, int j) {
    if (mask.causal && j > i + offset) return false;
    return mask.key_valid.empty() || mask.key_valid[static_cast<std::size_t>(b) * lk + j] != 0;
  };

  const std::size_t probs_per = static_cast<std::size_t>(lq) * lk;
  auto probs = std::make_shared<std::vector<double>>(static_cast<std::size_t>(batch) * heads * probs_per);
  Tensor out({batch, lq, d});
  RowMat scores(lq, lk);
  for (int b = 0; b < batch; ++b) {
    for (int h = 0; h < heads; ++h) {
      const std::size_t qoff = static_cast<std::size_t>(b) * lq * d + static_cast<std::size_t>(h) * dh;
      const std::size_t koff = static_cast<std::size_t>(b) * lk * d + static_cast<std::size_t>(h) * dh;
      CSMatMap qh(q.value().ptr() + qoff, lq, dh, Strided(d));
      CSMatMap kh(k.value().ptr() + koff, lk, dh, Strided(d));
      CSMatMap vh(v.value().ptr() + koff, lk, dh, Strided(d));
      scores.noalias() = qh * kh.transpose();
      MatMap p(probs->data() + (static_cast<std::size_t>(b) * heads + h) * probs_per, lq, lk);
      for (int i = 0; i < lq; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < lk; ++j) {
          if (visible(b, i, j)) mx = std::max(mx, scores(i, j) * sc);
        }
        double z = 0.0;
        for (int j = 0; j < lk; ++j) {
          const double e = visible(b, i, j) ? std::exp(scores(i, j) * sc - mx) : 0.0;
          p(i, j) = e;
          z += e;
        }
        if (z > 0.0) p.row(i) /= z;
      }
      SMatMap oh(out.ptr() + qoff, lq, dh, Strided(d));
      oh.noalias() = p * vh;
    }
  }

  return make_result(std::move(out), {q, k, v}, [=](Node& self) {
    double* gq = pgrad(self, 0);
    double* gk = pgrad(self, 1);
    double* gv = pgrad(self, 2);
    const Tensor& qv = pval(self, 0);
    const Tensor& kv = pval(self, 1);
    const Tensor& vv = pval(self, 2);
    RowMat dp(lq, lk);
    RowMat ds(lq, lk);
    for (int b = 0; b < batch; ++b) {
      for (int h = 0; h < heads; ++h) {
        const std::size_t qoff = static_cast<std::size_t>(b) * lq * d + static_cast<std::size_t>(h) * dh;
        const std::size_t koff = static_cast<std::size_t>(b) * lk * d + static_cast<std::size_t>(h) * dh;
        CMatMap p(probs->data() + (static_cast<std::size_t>(b) * heads + h) * probs_per, lq, lk);
        CSMatMap go(self.grad.data() + qoff, lq, dh, Strided(d));
        CSMatMap vh(vv.ptr() + koff, lk, dh, Strided(d));
        if (gv) SMatMap(gv + koff, lk, dh, Strided(d)).noalias() += p.transpose() * go;
        if (!gq && !gk) continue;
        dp.noalias() = go * vh.transpose();
        for (int i = 0; i < lq; ++i) {
          double row_dot = 0.0;
          for (int j = 0; j < lk; ++j) row_dot += dp(i, j) * p(i, j);
          for (int j = 0; j < lk; ++j) ds(i, j) = p(i, j) * (dp(i, j) - row_dot);
        }
        ds *= sc;
        if (gq) {
          CSMatMap kh(kv.ptr() + koff, lk, dh, Strided(d));
          SMatMap(gq + qoff, lq, dh, Strided(d)).noalias() += ds * kh;
        }
        if (gk) {
          CSMatMap qh(qv.ptr() + qoff, lq, dh, Strided(d));
          SMatMap(gk + koff, lk, dh, Strided(d)).noalias() += ds.transpose() * qh;
        }
      }
    }
  });
}

Var masked_mean(const Var& x, std::span<const std::uint8_t> valid) {
  require_rank(x, 3, "masked_mean");
  const int batch = x.dim(0), l = x.dim(1), d = x.dim(2);
  if (valid.size() != static_cast<std::size_t>(batch) * l) {
    shape_error("masked_mean", "mask of length " + std::to_string(valid.size()) + " for " + shape_str(x.shape()));
  }
  std::vector<double> weight(static_cast<std::size_t>(batch) * l, 0.0);
  for (int b = 0; b < batch; ++b) {
    int count = 0;
    for (int i = 0; i < l; ++i) count += valid[static_cast<std::size_t>(b) * l + i] ? 1 : 0;
    for (int i = 0; i < l; ++i) {
      const std::size_t idx = static_cast<std::size_t>(b) * l + i;
      weight[idx] = (valid[idx] && count > 0) ? 1.0 / count : 0.0;
    }
  }
  Tensor out({batch, d});
  for (int b = 0; b < batch; ++b) {
    for (int i = 0; i < l; ++i) {
      const double w = weight[static_cast<std::size_t>(b) * l + i];
      if (w == 0.0) continue;
      const double* row = x.value().ptr() + (static_cast<std::size_t>(b) * l + i) * d;
      for (int j = 0; j < d; ++j) out[static_cast<std::size_t>(b) * d + j] += w * row[j];
    }
  }
  return make_result(std::move(out), {x}, [batch, l, d, weight = std::move(weight)](Node& self) {
    double* g = pgrad(self, 0);
    if (!g) return;
    for (int b = 0; b < batch; ++b) {
      for (int i = 0; i < l; ++i) {
        const double w = weight[static_cast<std::size_t>(b) * l + i];
        if (w == 0.0) continue;
        double* row = g + (static_cast<std::size_t>(b) * l + i) * d;
        for (int j = 0; j < d; ++j) row[j] += w * self.grad[static_cast<std::size_t>(b) * d + j];
      }
    }
  });
}

Var l2_normalize(const Var& x, double eps) {
  require_rank(x, 2, "l2_normalize");
  const int n = x.dim(0), d = x.dim(1);
  auto norms = std::make_shared<std::vector<double>>(static_cast<std::size_t>(n));
  Tensor out(x.shape());
  for (int i = 0; i < n; ++i) {
    const double* row = x.value().ptr() + static_cast<std::size_t>(i) * d;
    double ss = 0.0;
    for (int j = 0; j < d; ++j) ss += row[j] * row[j];
    const double nrm = std::max(std::sqrt(ss), eps);
    (*norms)[static_cast<std::size_t>(i)] = nrm;
    for (int j = 0; j < d; ++j) out[static_cast<std::size_t>(i) * d + j] = row[j] / nrm;
  }
  return make_result(std::move(out), {x}, [n, d, norms](Node& self) {
    double* g = pgrad(self, 0);
    if (!g) return;
    for (int i = 0; i < n; ++i) {
      const std::size_t base = static_cast<std::size_t>(i) * d;
      double dot = 0.0;
      for (int j = 0; j < d; ++j) dot += self.value[base + j] * self.grad[base + j];
      const double nrm = (*norms)[static_cast<std::size_t>(i)];
      for (int j = 0; j < d; ++j) g[base + j] += (self.grad[base + j] - self.value[base + j] * dot) / nrm;
    }
  });
}

Var softmax_rows(const Var& x) {
  const int d = x.dim(-1);
  const int rows = static_cast<int>(x.size() / static_cast<std::size_t>(d));
  Tensor out(x.shape());
  for (int r = 0; r < rows; ++r) {
    const double* row = x.value().ptr() + static_cast<std::size_t>(r) * d;
    double* o = out.ptr() + static_cast<std::size_t>(r) * d;
    const double mx = *std::max_element(row, row + d);
    double z = 0.0;
    for (int j = 0; j < d; ++j) z += (o[j] = std::exp(row[j] - mx));
    for (int j = 0; j < d; ++j) o[j] /= z;
  }
  auto result = make_result(std::move(out), {x}, {});
  if (result.requires_grad()) {
    result.node()->backward_fn = [rows, d](Node& self) {
      double* g = pgrad(self, 0);
      if (!g) return;
      for (int r = 0; r < rows; ++r) {
        const std::size_t base = static_cast<std::size_t>(r) * d;
        double dot = 0.0;
        for (int j = 0; j < d; ++j) dot += self.grad[base + j] * self.value[base + j];
        for (int j = 0; j < d; ++j) g[base + j] += self.value[base + j] * (self.grad[base + j] - dot);
      }
    };
  }
  return result;
}

Var cross_entropy(const Var& logits, std::span<const int> targets, int ignore_index) {
  require_rank(logits, 2, "cross_entropy");
  const int n = logits.dim(0), c = logits.dim(1);
  if (targets.size() != static_cast<std::size_t>(n)) {
    shape_error("cross_entropy", std::to_string(targets.size()) + " targets for " + std::to_string(n) + " rows");
  }
  // Row softmax is kept for the backward pass.
  auto probs = std::make_shared<std::vector<double>>(logits.size());
  double total = 0.0;
  int count = 0;
  for (int r = 0; r < n; ++r) {
    const int t = targets[static_cast<std::size_t>(r)];
    if (t == ignore_index) continue;
    if (t < 0 || t >= c) {
      throw Error(Errc::TokenOutOfRange, "target " + std::to_string(t) + " outside " + std::to_string(c) + " classes");
    }
    const double* row = logits.value().ptr() + static_cast<std::size_t>(r) * c;
    double* p = probs->data() + static_cast<std::size_t>(r) * c;
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (int j = 0; j < c; ++j) z += (p[j] = std::exp(row[j] - mx));
    for (int j = 0; j < c; ++j) p[j] /= z;
    total += (mx + std::log(z)) - row[t];
    ++count;
  }
  if (count == 0) throw Error(Errc::EmptyTarget, "every target position is ignored");
  Tensor out({}, {total / count});
  std::vector<int> tv(targets.begin(), targets.end());
  return make_result(std::move(out), {logits}, [n, c, count, ignore_index, probs, tv = std::move(tv)](Node& self) {
    double* g = pgrad(self, 0);
    if (!g) return;
    const double w = self.grad[0] / count;
    for (int r = 0; r < n; ++r) {
      const int t = tv[static_cast<std::size_t>(r)];
      if (t == ignore_index) continue;
      const double* p = probs->data() + static_cast<std::size_t>(r) * c;
      double* gr = g + static_cast<std::size_t>(r) * c;
      for (int j = 0; j < c; ++j) gr[j] += w * p[j];
      gr[t] -= w;
    }
  });
}

Var mse(const Var& pred, Tensor target) {
  if (pred.size() != target.size()) {
    shape_error("mse", shape_str(pred.shape()) + " vs " + shape_str(target.shape()));
  }
  const std::size_t n = pred.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double diff = pred.value()[i] - target[i];
    acc += diff * diff;
  }
  Tensor out({}, {acc / static_cast<double>(n)});
  auto tgt = std::make_shared<Tensor>(std::move(target));
  return make_result(std::move(out), {pred}, [n, tgt](Node& self) {
    double* g = pgrad(self, 0);
    if (!g) return;
    const double w = 2.0 * self.grad[0] / static_cast<double>(n);
    const Tensor& pv = pval(self, 0);
    for (std::size_t i = 0; i < n; ++i) g[i] += w * (pv[i] - (*tgt)[i]);
  });
}

}  // namespace cadvlm::nn
