#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "cadvlm/metrics.hpp"
#include "cadvlm/model.hpp"
#include "cadvlm/tokens.hpp"

namespace cadvlm {

inline constexpr int kMaxGenerationLength = 256;

// Decoder output for one input. `tokens` starts with BOS and ends with EOS
// unless the length limit was hit first.
struct Generation {
  std::vector<int> tokens;
  double log_prob = 0.0;  // sum of model log-probabilities of the emitted tokens
  bool finished = false;  // EOS emitted
};

// Argmax per step, ties to the lowest token id. The encoders run once per
// batch. Throws Errc::TokenOutOfRange for max_len < 1 or > the model limit.
std::vector<Generation> greedy_decode(const CadVlm& model, std::span<const ModelInput> inputs,
                                      int max_len = kMaxGenerationLength);
Generation greedy_decode(const CadVlm& model, const ModelInput& input, int max_len = kMaxGenerationLength);

// Smallest set of token ids, in descending probability (ties: lower id
// first), whose mass reaches p. Throws Errc::InvalidP unless 0 < p <= 1.
std::vector<int> nucleus_set(std::span<const double> probs, double p);
// Draws from the renormalized nucleus using uniform variate u in [0, 1).
int nucleus_pick(std::span<const double> probs, double p, double u);

struct SampleSet {
  std::vector<Generation> candidates;
  std::size_t best = 0;  // highest log-probability candidate
};

// k independent nucleus completions of one input, reproducible per seed.
SampleSet nucleus_sample(const CadVlm& model, const ModelInput& input, double p, std::uint64_t seed, int k,
                         int max_len = kMaxGenerationLength);

struct Completion {
  Sketch sketch;  // partial entities followed by the generated ones
  std::vector<Entity> generated;
  std::vector<DecodeFlag> flags;
  TokenSeq tokens;                    // raw suffix generation
  std::optional<MatchReport> report;  // against the ground-truth remainder, if given
};

// Renders the partial sketch, decodes greedily and appends the decoded
// entities. With `truth` (the full sketch) the report compares the
// generated entities against truth minus the partial entities.
// Throws Errc::CheckpointMismatch unless the model is an autocompletion model.
Completion complete(const CadVlm& model, const Sketch& partial, const Sketch* truth = nullptr,
                    const AugmentSpec& render = {});
std::vector<Completion> complete_batch(const CadVlm& model, std::span<const Sketch> partials,
                                       const AugmentSpec& render = {}, int batch = 32);
// Nucleus variant: every candidate decoded; the highest-probability one first.
std::vector<Completion> complete_sampled(const CadVlm& model, const Sketch& partial, double p,
                                         std::uint64_t seed, int k, const AugmentSpec& render = {});

// Entities of `truth` left after removing (as a multiset) those of `partial`.
std::vector<Entity> remaining_entities(const Sketch& truth, const Sketch& partial);

struct ConstraintResult {
  std::vector<Constraint> constraints;
  std::vector<DecodeFlag> flags;
  TokenSeq tokens;
};

// Throws Errc::CheckpointMismatch unless the model is an autoconstraint model.
ConstraintResult autoconstrain(const CadVlm& model, const Sketch& s, const AugmentSpec& render = {});
std::vector<ConstraintResult> autoconstrain_batch(const CadVlm& model, std::span<const Sketch> sketches,
                                                  const AugmentSpec& render = {}, int batch = 32);

// Whole-sketch generation from a rendering alone. Throws
// Errc::CheckpointMismatch unless the model is image-conditioned.
PrimitiveDecode generate_from_image(const CadVlm& model, const RasterImage& image);

// Autocompletion benchmark: each sketch is split by make_example (ratio
// fixed or sampled, per-sketch generator derived from seed) and the
// generated entities are matched against the held-out remainder.
std::vector<MatchReport> evaluate_completion(const CadVlm& model, std::span<const Sketch> sketches,
                                             std::optional<double> ratio, std::uint64_t seed,
                                             const AugmentSpec& render = {}, int batch = 32);
// Autoconstraint benchmark against each sketch's own constraints.
std::vector<MatchReport> evaluate_constraints(const CadVlm& model, std::span<const Sketch> sketches,
                                              const AugmentSpec& render = {}, int batch = 32);

}  // namespace cadvlm
