#include "cadvlm/inference.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "cadvlm/data.hpp"
#include "cadvlm/error.hpp"
#include "cadvlm/raster.hpp"

namespace cadvlm {

namespace {

using nn::NoGradGuard;
using nn::Shape;
using nn::Tensor;

void require_mode(const CadVlm& model, Task task) {
  if (model.config().mode != task) {
    throw Error(Errc::CheckpointMismatch, "model was trained for '" + std::string(task_name(model.config().mode)) +
                                              "', request needs '" + std::string(task_name(task)) + "'");
  }
}

Var take_rows(const Var& v, std::span<const int> rows) {
  if (!v.defined()) return v;
  const Tensor& t = v.value();
  const std::size_t row = t.size() / static_cast<std::size_t>(t.dim(0));
  Shape shape = t.shape();
  shape[0] = static_cast<int>(rows.size());
  Tensor out(shape);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(t.data().begin() + static_cast<std::ptrdiff_t>(row * static_cast<std::size_t>(rows[i])), row,
                out.data().begin() + static_cast<std::ptrdiff_t>(row * i));
  }
  return nn::constant(std::move(out));
}

std::vector<std::uint8_t> take_mask_rows(const std::vector<std::uint8_t>& mask, int batch, std::span<const int> rows) {
  if (mask.empty()) return mask;
  const std::size_t row = mask.size() / static_cast<std::size_t>(batch);
  std::vector<std::uint8_t> out;
  out.reserve(row * rows.size());
  for (int r : rows) {
    auto first = mask.begin() + static_cast<std::ptrdiff_t>(row * static_cast<std::size_t>(r));
    out.insert(out.end(), first, first + static_cast<std::ptrdiff_t>(row));
  }
  return out;
}

FusedState take_rows(const FusedState& st, std::span<const int> rows) {
  FusedState out;
  out.image_emb = take_rows(st.image_emb, rows);
  out.text_emb = take_rows(st.text_emb, rows);
  out.fused = take_rows(st.fused, rows);
  out.text_valid = take_mask_rows(st.text_valid, st.batch, rows);
  out.fused_valid = take_mask_rows(st.fused_valid, st.batch, rows);
  out.batch = static_cast<int>(rows.size());
  return out;
}

std::vector<double> softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) z += (p[i] = std::exp(logits[i] - mx));
  for (auto& v : p) v /= z;
  return p;
}

int argmax(std::span<const double> values) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(values.size()); ++i) {
    if (values[static_cast<std::size_t>(i)] > values[static_cast<std::size_t>(best)]) best = i;
  }
  return best;
}

void check_p(double p) {
  if (!(p > 0.0 && p <= 1.0)) throw Error(Errc::InvalidP, "nucleus p must lie in (0, 1], got " + std::to_string(p));
}

using Picker = std::function<int(std::size_t row, std::span<const double> probs)>;

// Step-synchronous decoding: every unfinished row grows by one token per
// step, so rows never need padding.
std::vector<Generation> generate(const CadVlm& model, const FusedState& state, int max_len, const Picker& pick) {
  if (max_len < 1 || max_len > model.config().max_text_len) {
    throw Error(Errc::TokenOutOfRange, "generation length must lie in [1, " +
                                           std::to_string(model.config().max_text_len) + "]");
  }
  NoGradGuard no_grad;
  const int vocab_size = model.config().vocab_size;
  std::vector<Generation> out(static_cast<std::size_t>(state.batch));
  std::vector<int> active(static_cast<std::size_t>(state.batch));
  std::iota(active.begin(), active.end(), 0);
  for (auto& g : out) g.tokens = {vocab::kBos};
  FusedState current = state;
  for (int len = 1; len < max_len && !active.empty(); ++len) {
    std::vector<std::vector<int>> inputs;
    for (int r : active) inputs.push_back(out[static_cast<std::size_t>(r)].tokens);
    const Tensor logits = model.decode_text(current, inputs).value();
    std::vector<int> still;
    for (std::size_t i = 0; i < active.size(); ++i) {
      const std::size_t offset = (i * static_cast<std::size_t>(len) + static_cast<std::size_t>(len - 1)) *
                                 static_cast<std::size_t>(vocab_size);
      std::span<const double> row(logits.data().data() + offset, static_cast<std::size_t>(vocab_size));
      const std::vector<double> probs = softmax(row);
      auto& g = out[static_cast<std::size_t>(active[i])];
      const int tok = pick(static_cast<std::size_t>(active[i]), probs);
      g.tokens.push_back(tok);
      g.log_prob += std::log(probs[static_cast<std::size_t>(tok)]);
      if (tok == vocab::kEos) {
        g.finished = true;
      } else {
        still.push_back(static_cast<int>(i));
      }
    }
    if (still.size() != active.size()) {
      current = take_rows(current, still);
      std::vector<int> next;
      for (int i : still) next.push_back(active[static_cast<std::size_t>(i)]);
      active = std::move(next);
    }
  }
  return out;
}

FusedState encode(const CadVlm& model, std::span<const ModelInput> inputs) {
  NoGradGuard no_grad;
  return model.fuse(inputs);
}

RasterImage render_entities(const std::vector<Entity>& entities, const AugmentSpec& render) {
  return rasterize(Sketch{entities, {}}, render);
}

Completion assemble(const Sketch& partial, const Generation& g) {
  Completion c;
  c.tokens = TokenSeq{g.tokens, Stream::Primitive};
  PrimitiveDecode d = decode_primitives(c.tokens);
  c.generated = std::move(d.sketch.entities);
  c.flags = std::move(d.flags);
  c.sketch.entities = partial.entities;
  c.sketch.entities.insert(c.sketch.entities.end(), c.generated.begin(), c.generated.end());
  return c;
}

}  // namespace

std::vector<Entity> remaining_entities(const Sketch& truth, const Sketch& partial) {
  std::vector<Entity> pool;
  for (const auto& e : partial.entities) pool.push_back(canonicalize(e));
  std::vector<Entity> rest;
  for (const auto& e : truth.entities) {
    auto it = std::find(pool.begin(), pool.end(), canonicalize(e));
    if (it != pool.end()) {
      pool.erase(it);
    } else {
      rest.push_back(e);
    }
  }
  return rest;
}

std::vector<Generation> greedy_decode(const CadVlm& model, std::span<const ModelInput> inputs, int max_len) {
  const FusedState state = encode(model, inputs);
  return generate(model, state, max_len, [](std::size_t, std::span<const double> probs) { return argmax(probs); });
}

Generation greedy_decode(const CadVlm& model, const ModelInput& input, int max_len) {
  return greedy_decode(model, std::span<const ModelInput>(&input, 1), max_len).front();
}

std::vector<int> nucleus_set(std::span<const double> probs, double p) {
  check_p(p);
  std::vector<int> order(probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return probs[static_cast<std::size_t>(a)] > probs[static_cast<std::size_t>(b)];
  });
  double total = 0.0;
  for (double v : probs) total += v;
  double mass = 0.0;
  std::size_t n = 0;
  // The relative slack keeps p = 1 from running past the last token on
  // rounding error.
  while (n < order.size()) {
    mass += probs[static_cast<std::size_t>(order[n++])];
    if (mass >= p * total * (1.0 - 1e-12)) break;
  }
  order.resize(n);
  return order;
}

int nucleus_pick(std::span<const double> probs, double p, double u) {
  const std::vector<int> set = nucleus_set(probs, p);
  double mass = 0.0;
  for (int id : set) mass += probs[static_cast<std::size_t>(id)];
  const double target = u * mass;
  double acc = 0.0;
  for (int id : set) {
    acc += probs[static_cast<std::size_t>(id)];
    if (target < acc) return id;
  }
  return set.back();
}

SampleSet nucleus_sample(const CadVlm& model, const ModelInput& input, double p, std::uint64_t seed, int k,
                         int max_len) {
  check_p(p);
  if (k < 1) throw Error(Errc::ShapeMismatch, "need at least one sample");
  const FusedState one = encode(model, std::span<const ModelInput>(&input, 1));
  const std::vector<int> rows(static_cast<std::size_t>(k), 0);
  const FusedState state = take_rows(one, rows);
  Rng root(seed);
  std::vector<Rng> streams;
  for (int i = 0; i < k; ++i) streams.push_back(root.fork(static_cast<std::uint64_t>(i)));
  SampleSet out;
  out.candidates = generate(model, state, max_len, [&](std::size_t row, std::span<const double> probs) {
    return nucleus_pick(probs, p, streams[row].uniform());
  });
  for (std::size_t i = 1; i < out.candidates.size(); ++i) {
    if (out.candidates[i].log_prob > out.candidates[out.best].log_prob) out.best = i;
  }
  return out;
}

Completion complete(const CadVlm& model, const Sketch& partial, const Sketch* truth, const AugmentSpec& render) {
  Completion c = complete_batch(model, std::span<const Sketch>(&partial, 1), render).front();
  if (truth) c.report = entity_match(c.generated, remaining_entities(*truth, partial));
  return c;
}

std::vector<Completion> complete_batch(const CadVlm& model, std::span<const Sketch> partials,
                                       const AugmentSpec& render, int batch) {
  require_mode(model, Task::Autocomplete);
  const bool vision = model.config().uses_vision();
  std::vector<Completion> out;
  for (std::size_t start = 0; start < partials.size(); start += static_cast<std::size_t>(std::max(1, batch))) {
    const std::size_t end = std::min(partials.size(), start + static_cast<std::size_t>(std::max(1, batch)));
    std::vector<RasterImage> images;
    images.reserve(end - start);
    std::vector<ModelInput> inputs;
    for (std::size_t i = start; i < end; ++i) {
      if (vision) images.push_back(render_entities(partials[i].entities, render));
      inputs.push_back({encode_entities(partials[i].entities).tokens, vision ? &images.back() : nullptr});
    }
    const auto gens = greedy_decode(model, inputs);
    for (std::size_t i = start; i < end; ++i) out.push_back(assemble(partials[i], gens[i - start]));
  }
  return out;
}

std::vector<Completion> complete_sampled(const CadVlm& model, const Sketch& partial, double p, std::uint64_t seed,
                                         int k, const AugmentSpec& render) {
  require_mode(model, Task::Autocomplete);
  const bool vision = model.config().uses_vision();
  RasterImage image;
  if (vision) image = render_entities(partial.entities, render);
  const ModelInput input{encode_entities(partial.entities).tokens, vision ? &image : nullptr};
  SampleSet set = nucleus_sample(model, input, p, seed, k);
  std::vector<Completion> out;
  out.push_back(assemble(partial, set.candidates[set.best]));
  for (std::size_t i = 0; i < set.candidates.size(); ++i) {
    if (i != set.best) out.push_back(assemble(partial, set.candidates[i]));
  }
  return out;
}

ConstraintResult autoconstrain(const CadVlm& model, const Sketch& s, const AugmentSpec& render) {
  return autoconstrain_batch(model, std::span<const Sketch>(&s, 1), render).front();
}

std::vector<ConstraintResult> autoconstrain_batch(const CadVlm& model, std::span<const Sketch> sketches,
                                                  const AugmentSpec& render, int batch) {
  require_mode(model, Task::Autoconstrain);
  const bool vision = model.config().uses_vision();
  std::vector<ConstraintResult> out;
  for (std::size_t start = 0; start < sketches.size(); start += static_cast<std::size_t>(std::max(1, batch))) {
    const std::size_t end = std::min(sketches.size(), start + static_cast<std::size_t>(std::max(1, batch)));
    std::vector<RasterImage> images;
    images.reserve(end - start);
    std::vector<ModelInput> inputs;
    for (std::size_t i = start; i < end; ++i) {
      if (vision) images.push_back(render_entities(sketches[i].entities, render));
      inputs.push_back({encode_primitives(sketches[i]).tokens, vision ? &images.back() : nullptr});
    }
    const auto gens = greedy_decode(model, inputs);
    for (std::size_t i = start; i < end; ++i) {
      ConstraintResult r;
      r.tokens = TokenSeq{gens[i - start].tokens, Stream::Constraint};
      ConstraintDecode d = decode_constraints(r.tokens, sketches[i]);
      r.constraints = std::move(d.constraints);
      r.flags = std::move(d.flags);
      out.push_back(std::move(r));
    }
  }
  return out;
}

PrimitiveDecode generate_from_image(const CadVlm& model, const RasterImage& image) {
  require_mode(model, Task::ImageConditioned);
  const Generation g = greedy_decode(model, ModelInput{{}, &image});
  return decode_primitives(TokenSeq{g.tokens, Stream::Primitive});
}

std::vector<MatchReport> evaluate_completion(const CadVlm& model, std::span<const Sketch> sketches,
                                             std::optional<double> ratio, std::uint64_t seed,
                                             const AugmentSpec& render, int batch) {
  Rng root(seed);
  std::vector<Sketch> partials;
  std::vector<std::vector<Entity>> remainders;
  for (std::size_t i = 0; i < sketches.size(); ++i) {
    Rng rng = root.fork(i);
    Example ex = make_example(sketches[i], rng, ratio, render, false);
    partials.push_back(std::move(ex.prefix_sketch));
    remainders.push_back(std::move(ex.suffix_entities));
  }
  const auto completions = complete_batch(model, partials, render, batch);
  std::vector<MatchReport> reports;
  for (std::size_t i = 0; i < completions.size(); ++i) {
    reports.push_back(entity_match(completions[i].generated, remainders[i]));
  }
  return reports;
}

std::vector<MatchReport> evaluate_constraints(const CadVlm& model, std::span<const Sketch> sketches,
                                              const AugmentSpec& render, int batch) {
  const auto results = autoconstrain_batch(model, sketches, render, batch);
  std::vector<MatchReport> reports;
  for (std::size_t i = 0; i < results.size(); ++i) {
    reports.push_back(constraint_match(results[i].constraints, sketches[i].constraints));
  }
  return reports;
}

}  // namespace cadvlm
