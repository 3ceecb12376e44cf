#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cadvlm/nn/layers.hpp"
#include "cadvlm/raster.hpp"

namespace cadvlm {

using nn::Var;

enum class Task { Autocomplete, Autoconstrain, ImageConditioned };

std::string_view task_name(Task task);               // "complete", "constrain", "image-cond"
std::optional<Task> task_from_name(std::string_view name);

// Named ablations: full model, text-only input with LM loss, and the
// w/o-IDL, w/o-ITC, w/o-IDL&ITC loss subsets.
enum class Variant { Full, Text, NoIdl, NoItc, NoIdlItc };

std::string_view variant_name(Variant v);
std::optional<Variant> variant_from_name(std::string_view name);

struct ModelConfig {
  int patch = 32;
  int image_side = kImageSide;
  int d_model = 64;
  int vision_dim = 96;  // encoder width before down-sampling to d_model
  int n_heads = 4;
  int vision_layers = 2;
  int enc_layers = 2;
  int dec_layers = 2;
  int image_dec_layers = 1;
  int vocab_size = 85;
  int max_text_len = 256;
  double itc_temperature = 0.07;  // initial value; learned in log space
  double dropout = 0.0;           // residual dropout while training
  Task mode = Task::Autocomplete;
  bool use_image = true;  // false: text encoder only (no vision stream)
  bool use_itc = true;
  bool use_idl = true;
  std::uint64_t seed = 0;

  int patches_per_side() const { return image_side / patch; }
  int num_patches() const { return patches_per_side() * patches_per_side(); }
  int patch_values() const { return patch * patch * kChannels; }
  bool uses_text_encoder() const { return mode != Task::ImageConditioned; }
  bool uses_vision() const { return use_image || mode == Task::ImageConditioned; }
  bool itc_enabled() const { return use_itc && uses_vision() && uses_text_encoder(); }
  bool idl_enabled() const { return use_idl && uses_vision() && mode != Task::Autoconstrain; }

  // Throws Errc::ShapeMismatch on inconsistent dimensions.
  void check() const;
  void apply(Variant v);

  nlohmann::json to_json() const;
  // Missing keys keep their defaults.
  static ModelConfig from_json(const nlohmann::json& j);
};

// One sample as seen by the encoders. `text` is a complete token sequence
// (BOS ... EOS); `image` may be null when the config has no vision stream.
struct ModelInput {
  std::vector<int> text;
  const RasterImage* image = nullptr;
};

struct Batch {
  std::vector<ModelInput> inputs;
  std::vector<std::vector<int>> targets;          // decoder sequences, BOS ... EOS
  std::vector<const RasterImage*> target_images;  // IDL targets

  std::size_t size() const { return inputs.size(); }
};

// Encoder outputs and their sequence-axis concatenation (image first).
struct FusedState {
  Var image_emb;  // [B, 49, D] or undefined
  Var text_emb;   // [B, L, D] or undefined
  Var fused;      // [B, 49 + L, D]
  std::vector<std::uint8_t> text_valid;   // B*L
  std::vector<std::uint8_t> fused_valid;  // B*(49+L)
  int batch = 0;
};

// Components are undefined when disabled for the mode/variant.
struct LossBreakdown {
  Var total;
  Var itc;
  Var idl;
  Var lm;
};

// Pixel layout helpers: patch-major [49, 32*32*3] with (row, col, channel)
// order inside a patch.
nn::Tensor image_to_patches(std::span<const RasterImage* const> images, int patch, bool ink);
RasterImage patches_to_image(std::span<const double> values, int patch);

class CadVlm {
 public:
  explicit CadVlm(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }

  // Linear patch embedding of the ink map (1 - pixel), before positions.
  Var patch_embed(std::span<const RasterImage* const> images) const;
  // Full vision stream: patch embed + positions -> encoder -> down-sample +
  // projection. Output [B, 49, D]. Throws Errc::ShapeMismatch/Errc::WrongMode.
  Var encode_image(std::span<const RasterImage* const> images) const;
  // Bidirectional text encoder over PAD-padded sequences; `valid` receives
  // the B*L non-PAD mask. Throws Errc::TokenOutOfRange (bad id or length).
  Var encode_text(const std::vector<std::vector<int>>& seqs, std::vector<std::uint8_t>* valid) const;

  FusedState fuse(std::span<const ModelInput> inputs) const;

  // Teacher-forced/causal decoder logits [B, T, V] for PAD-padded inputs.
  Var decode_text(const FusedState& state, const std::vector<std::vector<int>>& decoder_inputs) const;
  // Per-patch pixel predictions [B, 49, 32*32*3]. Throws Errc::WrongMode
  // when the model has no image decoder.
  Var decode_image(const FusedState& state) const;

  // Sum of the enabled objectives. Throws Errc::ModeMismatch for batches
  // missing what the mode needs.
  LossBreakdown total_loss(const Batch& batch) const;

  Var log_temperature() const { return log_tau_; }

 private:
  ModelConfig cfg_;
  nn::ParamStore store_;
  std::shared_ptr<Rng> dropout_rng_;

  // vision
  nn::Linear patch_embed_;
  Var vision_pos_;
  std::vector<nn::TransformerBlock> vision_blocks_;
  nn::LayerNorm vision_ln_;
  nn::Linear downsample_;
  nn::Linear projection_;
  // text encoder
  Var enc_tok_;
  Var enc_pos_;
  std::vector<nn::TransformerBlock> enc_blocks_;
  nn::LayerNorm enc_ln_;
  // text decoder
  Var dec_tok_;
  Var dec_pos_;
  std::vector<nn::TransformerBlock> dec_blocks_;
  nn::LayerNorm dec_ln_;
  nn::Linear lm_head_;
  // image decoder
  Var img_queries_;
  std::vector<nn::TransformerBlock> img_blocks_;
  nn::LayerNorm img_ln_;
  nn::Linear pixel_head_;
  // contrastive temperature
  Var log_tau_;
};

// Contrastive loss over pooled, L2-normalized embeddings [N, D]:
// logits = <img_i, txt_j> / tau, averaged image->text and text->image
// cross-entropy against the diagonal. Throws Errc::BatchTooSmall for N < 2.
Var itc_loss(const Var& image_pooled, const Var& text_pooled, const Var& log_tau);
// Pools the sequence embeddings (masked mean) then applies the above.
Var itc_loss(const FusedState& state, const Var& log_tau);

// Mean squared pixel error against the ground-truth images.
Var idl_loss(const Var& decoded_patches, std::span<const RasterImage* const> targets, int patch);

// Mean token NLL over non-PAD labels. logits [B, T, V]; labels B rows of
// length T (PAD where ignored). Throws Errc::EmptyTarget.
Var lm_loss(const Var& logits, const std::vector<std::vector<int>>& labels);

// Splits target sequences into decoder inputs (all but last) and labels
// (all but first), right-padded with PAD to a common length.
void shift_targets(const std::vector<std::vector<int>>& targets, std::vector<std::vector<int>>& inputs,
                   std::vector<std::vector<int>>& labels);

}  // namespace cadvlm
