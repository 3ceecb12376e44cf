#include "cadvlm/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "cadvlm/error.hpp"
#include "cadvlm/nn/checkpoint.hpp"

namespace cadvlm {

namespace {

std::shared_ptr<const RasterImage> render(const Sketch& s, Rng& rng, const SampleOptions& opts) {
  AugmentSpec spec = opts.render;
  if (spec.mode != RenderMode::Precise) spec.seed = rng.next_u64();
  return std::make_shared<const RasterImage>(rasterize(Sketch{s.entities, {}}, spec));
}

std::optional<double> value_of(const Var& v) {
  if (!v.defined()) return std::nullopt;
  return v.value().item();
}

nlohmann::json optim_json(const nn::TrainConfig& c) {
  return {{"lr0", c.lr0},         {"batch", c.batch},  {"epochs", c.epochs},
          {"weight_decay", c.weight_decay}, {"beta1", c.beta1}, {"beta2", c.beta2},
          {"eps", c.eps},         {"total_steps", c.total_steps}, {"seed", c.seed}};
}

}  // namespace

Sample make_sample(Task task, const Sketch& s, Rng& rng, const SampleOptions& opts) {
  Sample out;
  switch (task) {
    case Task::Autocomplete: {
      Example ex = make_example(s, rng, opts.ratio, opts.render, opts.render_images);
      out.text = std::move(ex.prefix.tokens);
      out.target = std::move(ex.suffix.tokens);
      if (opts.render_images) {
        out.image = std::make_shared<const RasterImage>(std::move(ex.input_image));
        out.target_image = std::make_shared<const RasterImage>(std::move(ex.target_image));
      }
      break;
    }
    case Task::Autoconstrain:
      out.text = encode_primitives(s).tokens;
      out.target = encode_constraints(s).tokens;
      if (opts.render_images) out.image = render(s, rng, opts);
      break;
    case Task::ImageConditioned:
      out.target = encode_primitives(s).tokens;
      out.image = render(s, rng, opts);
      out.target_image = out.image;
      break;
  }
  return out;
}

Batch make_batch(std::span<const Sample> samples) {
  Batch b;
  for (const auto& s : samples) {
    b.inputs.push_back({s.text, s.image.get()});
    b.targets.push_back(s.target);
    b.target_images.push_back(s.target_image.get());
  }
  return b;
}

nlohmann::json StepLog::to_json() const {
  nlohmann::json j{{"step", step}, {"epoch", epoch}, {"lr", lr}, {"lm", lm}, {"total", total}};
  j["itc"] = itc ? nlohmann::json(*itc) : nlohmann::json(nullptr);
  j["idl"] = idl ? nlohmann::json(*idl) : nlohmann::json(nullptr);
  return j;
}

long planned_steps(const nn::TrainConfig& cfg, std::size_t corpus_size) {
  if (cfg.total_steps > 0) return cfg.total_steps;
  const long per_epoch = static_cast<long>((corpus_size + static_cast<std::size_t>(cfg.batch) - 1) /
                                           static_cast<std::size_t>(cfg.batch));
  return per_epoch * cfg.epochs;
}

TrainResult train(CadVlm& model, const std::vector<Sketch>& corpus, const TrainOptions& opts) {
  if (corpus.empty()) throw Error(Errc::EmptyCorpus, "training corpus is empty");
  if (opts.optim.batch < 1) throw Error(Errc::ShapeMismatch, "batch size must be positive");
  const ModelConfig& cfg = model.config();
  const long total = planned_steps(opts.optim, corpus.size());

  SampleOptions sample_opts = opts.sample;
  sample_opts.render_images = sample_opts.render_images && cfg.uses_vision();

  Rng rng(opts.optim.seed);
  Rng sample_rng = rng.fork(1);
  std::vector<Sample> fixed;
  if (opts.fixed_examples) {
    for (const auto& s : corpus) fixed.push_back(make_sample(cfg.mode, s, sample_rng, sample_opts));
  }

  std::ofstream metrics;
  if (!opts.out_dir.empty()) {
    std::filesystem::create_directories(opts.out_dir);
    metrics.open(std::filesystem::path(opts.out_dir) / "metrics.jsonl");
    if (!metrics) throw Error(Errc::Io, "cannot write metrics in " + opts.out_dir);
  }
  const nlohmann::json ckpt_meta = checkpoint_config(model, opts);

  TrainResult result;
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t bs = static_cast<std::size_t>(opts.optim.batch);
  long step = 0;
  int epoch = 0;
  while (step < total) {
    ++epoch;
    rng.shuffle(order.begin(), order.end());
    for (std::size_t start = 0; start < order.size() && step < total; start += bs) {
      const std::size_t end = std::min(order.size(), start + bs);
      std::vector<Sample> samples;
      for (std::size_t i = start; i < end; ++i) {
        if (opts.fixed_examples) {
          samples.push_back(fixed[order[i]]);
        } else {
          samples.push_back(make_sample(cfg.mode, corpus[order[i]], sample_rng, sample_opts));
        }
      }
      const Batch batch = make_batch(samples);
      const double lr = nn::cosine_lr(step, total, opts.optim.lr0);
      LossBreakdown loss = model.total_loss(batch);
      StepLog entry;
      entry.step = step + 1;
      entry.epoch = epoch;
      entry.lr = lr;
      entry.total = loss.total.value().item();
      entry.lm = loss.lm.value().item();
      entry.itc = value_of(loss.itc);
      entry.idl = value_of(loss.idl);
      if (!std::isfinite(entry.total)) {
        throw Error(Errc::NanLoss, "non-finite loss at step " + std::to_string(entry.step) + ": " +
                                       entry.to_json().dump());
      }
      model.params().zero_grad();
      nn::backward(loss.total);
      nn::adamw_step(model.params(), opts.optim, lr);
      ++step;
      if (metrics.is_open()) metrics << entry.to_json().dump() << '\n';
      if (opts.on_step) opts.on_step(entry);
      result.log.push_back(entry);
    }
    const bool last = step >= total;
    if (!opts.out_dir.empty() && (last || epoch % std::max(1, opts.checkpoint_every) == 0)) {
      const auto dir = (std::filesystem::path(opts.out_dir) / ("ep" + std::to_string(epoch))).string();
      nn::save_checkpoint(dir, model.params(), ckpt_meta);
      result.last_checkpoint = dir;
    }
  }
  result.steps = step;
  result.epochs = epoch;
  return result;
}

nlohmann::json checkpoint_config(const CadVlm& model, const TrainOptions& opts) {
  return {{"model", model.config().to_json()}, {"train", optim_json(opts.optim)}};
}

CadVlm load_model(const std::string& dir) {
  const nlohmann::json manifest = nn::read_manifest(dir);
  if (!manifest.contains("config") || !manifest["config"].contains("model")) {
    throw Error(Errc::CheckpointMismatch, dir + ": manifest has no model config");
  }
  CadVlm model(ModelConfig::from_json(manifest["config"]["model"]));
  nn::load_checkpoint(dir, model.params());
  return model;
}

}  // namespace cadvlm
