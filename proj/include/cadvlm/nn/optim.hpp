#pragma once

#include <cstdint>

#include "cadvlm/nn/layers.hpp"

namespace cadvlm::nn {

struct TrainConfig {
  double lr0 = 3e-4;
  int batch = 32;
  int epochs = 30;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long total_steps = 0;  // 0: derived from epochs and corpus size
  std::uint64_t seed = 0;
};

// lr0 * (1 + cos(pi * step / total_steps)) / 2. Throws Errc::StepOutOfRange.
double cosine_lr(long step, long total_steps, double lr0);

// One AdamW update with bias correction. Weight decay multiplies the
// parameter directly (p <- p * (1 - lr * lambda)) for entries flagged
// `decay`, independent of the gradient. Increments the store's step.
// Throws Errc::NoGrads if no parameter holds a gradient.
void adamw_step(ParamStore& store, const TrainConfig& cfg, double lr);

}  // namespace cadvlm::nn
