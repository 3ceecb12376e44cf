#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cadvlm/data.hpp"
#include "cadvlm/model.hpp"
#include "cadvlm/nn/optim.hpp"

namespace cadvlm {

// Encoder/decoder material for one sketch under a task.
struct Sample {
  std::vector<int> text;    // encoder input, BOS ... EOS (empty for image-cond)
  std::vector<int> target;  // decoder sequence, BOS ... EOS
  std::shared_ptr<const RasterImage> image;         // encoder image, may be null
  std::shared_ptr<const RasterImage> target_image;  // IDL target, may be null
};

struct SampleOptions {
  std::optional<double> ratio;  // fixed prefix ratio for completion
  AugmentSpec render;
  bool render_images = true;
};

// Autocomplete: prefix tokens + prefix image -> suffix tokens, full image.
// Autoconstrain: primitive tokens + full image -> constraint tokens.
// Image-conditioned: full image -> primitive tokens, full image.
Sample make_sample(Task task, const Sketch& s, Rng& rng, const SampleOptions& opts = {});

Batch make_batch(std::span<const Sample> samples);

struct StepLog {
  long step = 0;  // 1-based update count
  int epoch = 0;  // 1-based
  double lr = 0.0;
  std::optional<double> itc;
  std::optional<double> idl;
  double lm = 0.0;
  double total = 0.0;

  nlohmann::json to_json() const;
};

struct TrainOptions {
  nn::TrainConfig optim;
  SampleOptions sample;
  // Draw one sample per sketch up front instead of resampling the prefix
  // every epoch.
  bool fixed_examples = false;
  std::string out_dir;        // metrics.jsonl and epN/ checkpoints; empty: none
  int checkpoint_every = 1;   // epochs; the last epoch is always written
  std::function<void(const StepLog&)> on_step;
};

struct TrainResult {
  std::vector<StepLog> log;
  long steps = 0;
  int epochs = 0;
  std::string last_checkpoint;
};

// Updates per epoch times epochs, unless total_steps overrides it.
long planned_steps(const nn::TrainConfig& cfg, std::size_t corpus_size);

// Per step: assemble a batch, total_loss, backward, AdamW at the cosine
// learning rate. Throws Errc::EmptyCorpus, and Errc::NanLoss on a
// non-finite loss.
TrainResult train(CadVlm& model, const std::vector<Sketch>& corpus, const TrainOptions& opts);

// Checkpoint metadata: model config plus training settings.
nlohmann::json checkpoint_config(const CadVlm& model, const TrainOptions& opts);
// Rebuilds the model from a checkpoint directory.
CadVlm load_model(const std::string& dir);

}  // namespace cadvlm
