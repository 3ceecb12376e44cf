#include "cadvlm/nn/optim.hpp"

#include <cmath>
#include <numbers>

#include "cadvlm/error.hpp"

namespace cadvlm::nn {

double cosine_lr(long step, long total_steps, double lr0) {
  if (total_steps <= 0 || step < 0 || step > total_steps) {
    throw Error(Errc::StepOutOfRange,
                "step " + std::to_string(step) + " outside [0, " + std::to_string(total_steps) + "]");
  }
  return lr0 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(total_steps))) / 2.0;
}

void adamw_step(ParamStore& store, const TrainConfig& cfg, double lr) {
  bool any_grad = false;
  for (const auto& e : store.entries()) any_grad = any_grad || !e.param.grad().empty();
  if (!any_grad) throw Error(Errc::NoGrads, "no parameter has a gradient; run backward first");

  const long t = store.step() + 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (auto& e : store.entries()) {
    auto p = e.param.value().data();
    auto g = e.param.grad();
    if (e.decay && cfg.weight_decay != 0.0) {
      const double shrink = 1.0 - lr * cfg.weight_decay;
      for (double& v : p) v *= shrink;
    }
    if (g.empty()) continue;
    auto m = e.m.data();
    auto v = e.v.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
  store.set_step(t);
}

}  // namespace cadvlm::nn
