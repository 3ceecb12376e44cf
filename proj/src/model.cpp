#include "cadvlm/model.hpp"

#include <cmath>

#include "cadvlm/error.hpp"
#include "cadvlm/tokens.hpp"

namespace cadvlm {

using nn::AttnMask;
using nn::Shape;
using nn::Tensor;

std::string_view task_name(Task task) {
  switch (task) {
    case Task::Autocomplete: return "complete";
    case Task::Autoconstrain: return "constrain";
    case Task::ImageConditioned: return "image-cond";
  }
  return "?";
}

std::optional<Task> task_from_name(std::string_view name) {
  if (name == "complete") return Task::Autocomplete;
  if (name == "constrain") return Task::Autoconstrain;
  if (name == "image-cond") return Task::ImageConditioned;
  return std::nullopt;
}

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::Full: return "full";
    case Variant::Text: return "text";
    case Variant::NoIdl: return "no-idl";
    case Variant::NoItc: return "no-itc";
    case Variant::NoIdlItc: return "no-idl-itc";
  }
  return "?";
}

std::optional<Variant> variant_from_name(std::string_view name) {
  for (Variant v : {Variant::Full, Variant::Text, Variant::NoIdl, Variant::NoItc, Variant::NoIdlItc}) {
    if (variant_name(v) == name) return v;
  }
  return std::nullopt;
}

void ModelConfig::check() const {
  auto fail = [](const std::string& what) { throw Error(Errc::ShapeMismatch, what); };
  if (patch <= 0 || image_side % patch != 0) fail("image side must be a multiple of the patch size");
  if (image_side != kImageSide) fail("images are fixed at 224x224");
  if (d_model <= 0 || n_heads <= 0 || d_model % n_heads != 0) fail("d_model must divide into heads");
  if (vision_dim <= 0 || vision_dim % n_heads != 0) fail("vision_dim must divide into heads");
  if (vocab_size != vocab::kSize) fail("vocab_size must be 85");
  if (max_text_len <= 0) fail("max_text_len must be positive");
  if (!(itc_temperature > 0.0)) fail("temperature must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
}

void ModelConfig::apply(Variant v) {
  use_image = v != Variant::Text;
  use_itc = v == Variant::Full || v == Variant::NoIdl;
  use_idl = v == Variant::Full || v == Variant::NoItc;
}

nlohmann::json ModelConfig::to_json() const {
  return {{"patch", patch},
          {"image_side", image_side},
          {"d_model", d_model},
          {"vision_dim", vision_dim},
          {"n_heads", n_heads},
          {"vision_layers", vision_layers},
          {"enc_layers", enc_layers},
          {"dec_layers", dec_layers},
          {"image_dec_layers", image_dec_layers},
          {"vocab_size", vocab_size},
          {"max_text_len", max_text_len},
          {"itc_temperature", itc_temperature},
          {"dropout", dropout},
          {"mode", task_name(mode)},
          {"use_image", use_image},
          {"use_itc", use_itc},
          {"use_idl", use_idl},
          {"seed", seed}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.patch = j.value("patch", c.patch);
  c.image_side = j.value("image_side", c.image_side);
  c.d_model = j.value("d_model", c.d_model);
  c.vision_dim = j.value("vision_dim", c.vision_dim);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.vision_layers = j.value("vision_layers", c.vision_layers);
  c.enc_layers = j.value("enc_layers", c.enc_layers);
  c.dec_layers = j.value("dec_layers", c.dec_layers);
  c.image_dec_layers = j.value("image_dec_layers", c.image_dec_layers);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.max_text_len = j.value("max_text_len", c.max_text_len);
  c.itc_temperature = j.value("itc_temperature", c.itc_temperature);
  c.dropout = j.value("dropout", c.dropout);
  if (j.contains("mode")) {
    auto t = task_from_name(j["mode"].get<std::string>());
    if (!t) throw Error(Errc::ParseError, "unknown mode " + j["mode"].dump());
    c.mode = *t;
  }
  if (j.contains("variant")) {
    auto v = variant_from_name(j["variant"].get<std::string>());
    if (!v) throw Error(Errc::ParseError, "unknown variant " + j["variant"].dump());
    c.apply(*v);
  }
  c.use_image = j.value("use_image", c.use_image);
  c.use_itc = j.value("use_itc", c.use_itc);
  c.use_idl = j.value("use_idl", c.use_idl);
  c.seed = j.value("seed", c.seed);
  return c;
}

Tensor image_to_patches(std::span<const RasterImage* const> images, int patch, bool ink) {
  const int per_side = kImageSide / patch;
  const int n_patches = per_side * per_side;
  const int values = patch * patch * kChannels;
  const int batch = static_cast<int>(images.size());
  Tensor out({batch, n_patches, values});
  double* dst = out.ptr();
  for (const RasterImage* img : images) {
    for (int pr = 0; pr < per_side; ++pr) {
      for (int pc = 0; pc < per_side; ++pc) {
        for (int r = 0; r < patch; ++r) {
          const double* src = &img->pixels[(static_cast<std::size_t>(pr * patch + r) * kImageSide + pc * patch) * kChannels];
          for (int i = 0; i < patch * kChannels; ++i) *dst++ = ink ? 1.0 - src[i] : src[i];
        }
      }
    }
  }
  return out;
}

RasterImage patches_to_image(std::span<const double> values, int patch) {
  const int per_side = kImageSide / patch;
  if (values.size() != static_cast<std::size_t>(kImageValues)) {
    throw Error(Errc::ShapeMismatch, "patch values do not cover a 224x224x3 image");
  }
  RasterImage img;
  const double* src = values.data();
  for (int pr = 0; pr < per_side; ++pr) {
    for (int pc = 0; pc < per_side; ++pc) {
      for (int r = 0; r < patch; ++r) {
        double* dst = &img.pixels[(static_cast<std::size_t>(pr * patch + r) * kImageSide + pc * patch) * kChannels];
        for (int i = 0; i < patch * kChannels; ++i) dst[i] = *src++;
      }
    }
  }
  return img;
}

namespace {

std::vector<nn::TransformerBlock> make_blocks(nn::ParamStore& store, const std::string& prefix, int count,
                                              const nn::BlockConfig& bc, Rng& rng, const nn::DropoutConfig& drop) {
  std::vector<nn::TransformerBlock> blocks;
  for (int i = 0; i < count; ++i) {
    blocks.push_back(nn::TransformerBlock::create(store, prefix + "." + std::to_string(i), bc, rng, drop));
  }
  return blocks;
}

// Right-pads with PAD; returns [B, L] ids flattened and the non-PAD mask.
std::vector<int> pad_batch(const std::vector<std::vector<int>>& seqs, int& length, std::vector<std::uint8_t>& valid) {
  length = 0;
  for (const auto& s : seqs) length = std::max(length, static_cast<int>(s.size()));
  std::vector<int> ids(seqs.size() * static_cast<std::size_t>(length), vocab::kPad);
  valid.assign(ids.size(), 0);
  for (std::size_t b = 0; b < seqs.size(); ++b) {
    for (std::size_t i = 0; i < seqs[b].size(); ++i) {
      ids[b * length + i] = seqs[b][i];
      valid[b * length + i] = seqs[b][i] != vocab::kPad;
    }
  }
  return ids;
}

// Position rows 0..length-1 of a [max_len, D] table, broadcast over batch.
Var add_positions(const Var& x, const Var& pos_table, int length) {
  std::vector<int> rows(static_cast<std::size_t>(length));
  for (int i = 0; i < length; ++i) rows[static_cast<std::size_t>(i)] = i;
  return nn::add_broadcast(x, nn::embedding(pos_table, rows, {length}));
}

}  // namespace

CadVlm::CadVlm(ModelConfig cfg) : cfg_(cfg) {
  cfg_.check();
  Rng rng(cfg_.seed);
  // Separate stream so initialization does not depend on the dropout setting.
  dropout_rng_ = std::make_shared<Rng>(Rng(cfg_.seed).fork(0xd5));
  const nn::DropoutConfig drop{cfg_.dropout, dropout_rng_};
  const int d = cfg_.d_model;
  const int np = cfg_.num_patches();
  constexpr double kStd = 0.02;

  // Parameters are created for every stream so checkpoints share one layout
  // across variants; disabled streams simply never receive gradients.
  patch_embed_ = nn::Linear::create(store_, "vision.patch_embed", cfg_.patch_values(), cfg_.vision_dim, rng);
  vision_pos_ = store_.add("vision.pos", nn::normal_tensor({np, cfg_.vision_dim}, kStd, rng));
  vision_blocks_ = make_blocks(store_, "vision.block", cfg_.vision_layers,
                               {cfg_.vision_dim, cfg_.n_heads, 4, false}, rng, drop);
  vision_ln_ = nn::LayerNorm::create(store_, "vision.ln", cfg_.vision_dim);
  downsample_ = nn::Linear::create(store_, "vision.downsample", cfg_.vision_dim, d, rng);
  projection_ = nn::Linear::create(store_, "vision.projection", d, d, rng);

  enc_tok_ = store_.add("text_enc.tok", nn::normal_tensor({cfg_.vocab_size, d}, kStd, rng));
  enc_pos_ = store_.add("text_enc.pos", nn::normal_tensor({cfg_.max_text_len, d}, kStd, rng));
  enc_blocks_ = make_blocks(store_, "text_enc.block", cfg_.enc_layers, {d, cfg_.n_heads, 4, false}, rng, drop);
  enc_ln_ = nn::LayerNorm::create(store_, "text_enc.ln", d);

  dec_tok_ = store_.add("text_dec.tok", nn::normal_tensor({cfg_.vocab_size, d}, kStd, rng));
  dec_pos_ = store_.add("text_dec.pos", nn::normal_tensor({cfg_.max_text_len, d}, kStd, rng));
  dec_blocks_ = make_blocks(store_, "text_dec.block", cfg_.dec_layers, {d, cfg_.n_heads, 4, true}, rng, drop);
  dec_ln_ = nn::LayerNorm::create(store_, "text_dec.ln", d);
  lm_head_ = nn::Linear::create(store_, "text_dec.lm_head", d, cfg_.vocab_size, rng);

  img_queries_ = store_.add("image_dec.queries", nn::normal_tensor({np, d}, kStd, rng));
  img_blocks_ = make_blocks(store_, "image_dec.block", cfg_.image_dec_layers, {d, cfg_.n_heads, 4, false}, rng, drop);
  img_ln_ = nn::LayerNorm::create(store_, "image_dec.ln", d);
  pixel_head_ = nn::Linear::create(store_, "image_dec.pixel_head", d, cfg_.patch_values(), rng);
  // Start the pixel head at the white background.
  for (double& v : pixel_head_.bias.value().data()) v = 1.0;

  log_tau_ = store_.add("itc.log_tau", Tensor({}, {std::log(cfg_.itc_temperature)}), false);
}

Var CadVlm::patch_embed(std::span<const RasterImage* const> images) const {
  for (const RasterImage* img : images) {
    if (img == nullptr || img->pixels.size() != static_cast<std::size_t>(kImageValues)) {
      throw Error(Errc::ShapeMismatch, "encode_image expects 224x224x3 images");
    }
  }
  return patch_embed_(nn::constant(image_to_patches(images, cfg_.patch, true)));
}

Var CadVlm::encode_image(std::span<const RasterImage* const> images) const {
  if (!cfg_.uses_vision()) throw Error(Errc::WrongMode, "model was built without the vision stream");
  Var x = nn::add_broadcast(patch_embed(images), vision_pos_);
  const AttnMask full;
  for (const auto& block : vision_blocks_) x = block(x, full);
  x = vision_ln_(x);
  return projection_(nn::gelu(downsample_(x)));
}

Var CadVlm::encode_text(const std::vector<std::vector<int>>& seqs, std::vector<std::uint8_t>* valid) const {
  for (const auto& s : seqs) {
    if (static_cast<int>(s.size()) > cfg_.max_text_len) {
      throw Error(Errc::TokenOutOfRange, "text of length " + std::to_string(s.size()) + " exceeds " +
                                             std::to_string(cfg_.max_text_len));
    }
    if (s.empty()) throw Error(Errc::TokenOutOfRange, "empty text sequence");
  }
  int length = 0;
  std::vector<std::uint8_t> mask;
  const std::vector<int> ids = pad_batch(seqs, length, mask);
  const int batch = static_cast<int>(seqs.size());
  Var x = add_positions(nn::embedding(enc_tok_, ids, {batch, length}), enc_pos_, length);
  AttnMask attn;
  attn.key_valid = mask;
  for (const auto& block : enc_blocks_) x = block(x, attn);
  x = enc_ln_(x);
  if (valid) *valid = std::move(mask);
  return x;
}

FusedState CadVlm::fuse(std::span<const ModelInput> inputs) const {
  FusedState st;
  st.batch = static_cast<int>(inputs.size());
  if (st.batch == 0) throw Error(Errc::ModeMismatch, "empty batch");
  const int np = cfg_.num_patches();

  if (cfg_.uses_vision()) {
    std::vector<const RasterImage*> images;
    for (const auto& in : inputs) {
      if (!in.image) throw Error(Errc::ModeMismatch, "vision model needs an input image per sample");
      images.push_back(in.image);
    }
    st.image_emb = encode_image(images);
  }
  if (cfg_.uses_text_encoder()) {
    std::vector<std::vector<int>> texts;
    for (const auto& in : inputs) {
      if (in.text.empty()) throw Error(Errc::ModeMismatch, "text encoder needs an input sequence per sample");
      texts.push_back(in.text);
    }
    st.text_emb = encode_text(texts, &st.text_valid);
  }

  if (st.image_emb.defined() && st.text_emb.defined()) {
    st.fused = nn::concat_seq(st.image_emb, st.text_emb);
  } else {
    st.fused = st.image_emb.defined() ? st.image_emb : st.text_emb;
  }
  const int text_len = st.text_emb.defined() ? st.text_emb.dim(1) : 0;
  const int img_len = st.image_emb.defined() ? np : 0;
  st.fused_valid.assign(static_cast<std::size_t>(st.batch) * (img_len + text_len), 1);
  for (int b = 0; b < st.batch; ++b) {
    for (int i = 0; i < text_len; ++i) {
      st.fused_valid[static_cast<std::size_t>(b) * (img_len + text_len) + img_len + i] =
          st.text_valid[static_cast<std::size_t>(b) * text_len + i];
    }
  }
  return st;
}

Var CadVlm::decode_text(const FusedState& state, const std::vector<std::vector<int>>& decoder_inputs) const {
  if (static_cast<int>(decoder_inputs.size()) != state.batch) {
    throw Error(Errc::ShapeMismatch, "decoder batch does not match the fused state");
  }
  for (const auto& s : decoder_inputs) {
    if (static_cast<int>(s.size()) > cfg_.max_text_len) {
      throw Error(Errc::TokenOutOfRange, "decoder input exceeds " + std::to_string(cfg_.max_text_len) + " tokens");
    }
  }
  int length = 0;
  std::vector<std::uint8_t> mask;
  const std::vector<int> ids = pad_batch(decoder_inputs, length, mask);
  Var x = add_positions(nn::embedding(dec_tok_, ids, {state.batch, length}), dec_pos_, length);
  AttnMask self_mask;
  self_mask.causal = true;
  self_mask.key_valid = std::move(mask);
  AttnMask memory_mask;
  memory_mask.key_valid = state.fused_valid;
  for (const auto& block : dec_blocks_) x = block(x, self_mask, state.fused, memory_mask);
  return lm_head_(dec_ln_(x));
}

Var CadVlm::decode_image(const FusedState& state) const {
  if (cfg_.mode == Task::Autoconstrain || !cfg_.uses_vision()) {
    throw Error(Errc::WrongMode, "image decoding needs an image-conditioned or autocompletion model");
  }
  const int np = cfg_.num_patches();
  const int fused_len = state.fused.dim(1);
  Var queries = nn::add_broadcast(nn::constant(Tensor({state.batch, np, cfg_.d_model})), img_queries_);
  Var x = nn::concat_seq(state.fused, queries);
  AttnMask mask;
  mask.key_valid.reserve(static_cast<std::size_t>(state.batch) * (fused_len + np));
  for (int b = 0; b < state.batch; ++b) {
    auto first = state.fused_valid.begin() + static_cast<std::ptrdiff_t>(b) * fused_len;
    mask.key_valid.insert(mask.key_valid.end(), first, first + fused_len);
    mask.key_valid.insert(mask.key_valid.end(), static_cast<std::size_t>(np), 1);
  }
  for (const auto& block : img_blocks_) x = block(x, mask);
  return pixel_head_(img_ln_(nn::slice_seq(x, fused_len, np)));
}

void shift_targets(const std::vector<std::vector<int>>& targets, std::vector<std::vector<int>>& inputs,
                   std::vector<std::vector<int>>& labels) {
  std::size_t length = 0;
  for (const auto& t : targets) {
    if (t.size() < 2) throw Error(Errc::EmptyTarget, "target sequence needs at least BOS and one token");
    length = std::max(length, t.size() - 1);
  }
  inputs.assign(targets.size(), std::vector<int>(length, vocab::kPad));
  labels.assign(targets.size(), std::vector<int>(length, vocab::kPad));
  for (std::size_t b = 0; b < targets.size(); ++b) {
    for (std::size_t i = 0; i + 1 < targets[b].size(); ++i) {
      inputs[b][i] = targets[b][i];
      labels[b][i] = targets[b][i + 1];
    }
  }
}

Var itc_loss(const Var& image_pooled, const Var& text_pooled, const Var& log_tau) {
  const int n = image_pooled.dim(0);
  if (n < 2) throw Error(Errc::BatchTooSmall, "contrastive loss needs at least two pairs");
  if (text_pooled.shape() != image_pooled.shape()) {
    throw Error(Errc::ShapeMismatch, "image and text embeddings differ in shape");
  }
  const Var inv_tau = nn::exp(nn::scale(log_tau, -1.0));
  const Var logits = nn::mul_scalar(nn::matmul_nt(nn::l2_normalize(image_pooled), nn::l2_normalize(text_pooled)), inv_tau);
  std::vector<int> diag(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) diag[static_cast<std::size_t>(i)] = i;
  const Var i2t = nn::cross_entropy(logits, diag);
  const Var t2i = nn::cross_entropy(nn::transpose(logits), diag);
  return nn::scale(nn::add(i2t, t2i), 0.5);
}

Var itc_loss(const FusedState& state, const Var& log_tau) {
  if (!state.image_emb.defined() || !state.text_emb.defined()) {
    throw Error(Errc::ModeMismatch, "contrastive loss needs both image and text embeddings");
  }
  const std::vector<std::uint8_t> img_valid(static_cast<std::size_t>(state.batch) * state.image_emb.dim(1), 1);
  return itc_loss(nn::masked_mean(state.image_emb, img_valid), nn::masked_mean(state.text_emb, state.text_valid),
                  log_tau);
}

Var idl_loss(const Var& decoded_patches, std::span<const RasterImage* const> targets, int patch) {
  if (decoded_patches.dim(0) != static_cast<int>(targets.size()) ||
      decoded_patches.size() != targets.size() * static_cast<std::size_t>(kImageValues)) {
    throw Error(Errc::ShapeMismatch, "decoded image batch " + nn::shape_str(decoded_patches.shape()) +
                                         " vs " + std::to_string(targets.size()) + " targets");
  }
  return nn::mse(decoded_patches, image_to_patches(targets, patch, false));
}

Var lm_loss(const Var& logits, const std::vector<std::vector<int>>& labels) {
  const int batch = logits.dim(0), length = logits.dim(1), vocab_size = logits.dim(2);
  if (static_cast<int>(labels.size()) != batch) throw Error(Errc::ShapeMismatch, "label batch mismatch");
  std::vector<int> flat(static_cast<std::size_t>(batch) * length, vocab::kPad);
  for (int b = 0; b < batch; ++b) {
    if (static_cast<int>(labels[static_cast<std::size_t>(b)].size()) > length) {
      throw Error(Errc::ShapeMismatch, "labels longer than logits");
    }
    std::copy(labels[static_cast<std::size_t>(b)].begin(), labels[static_cast<std::size_t>(b)].end(),
              flat.begin() + static_cast<std::ptrdiff_t>(b) * length);
  }
  return nn::cross_entropy(nn::reshape(logits, {batch * length, vocab_size}), flat, vocab::kPad);
}

LossBreakdown CadVlm::total_loss(const Batch& batch) const {
  if (batch.size() == 0 || batch.targets.size() != batch.size()) {
    throw Error(Errc::ModeMismatch, "batch needs one decoder target per input");
  }
  const bool want_idl = cfg_.idl_enabled();
  if (want_idl && batch.target_images.size() != batch.size()) {
    throw Error(Errc::ModeMismatch, std::string(task_name(cfg_.mode)) + " batch needs a target image per sample");
  }

  const FusedState state = fuse(batch.inputs);
  LossBreakdown out;

  std::vector<std::vector<int>> dec_in;
  std::vector<std::vector<int>> labels;
  shift_targets(batch.targets, dec_in, labels);
  out.lm = lm_loss(decode_text(state, dec_in), labels);
  out.total = out.lm;

  // A single pair has no negatives; the contrastive term is skipped.
  if (cfg_.itc_enabled() && batch.size() >= 2) {
    out.itc = itc_loss(state, log_tau_);
    out.total = nn::add(out.total, out.itc);
  }
  if (want_idl) {
    out.idl = idl_loss(decode_image(state), batch.target_images, cfg_.patch);
    out.total = nn::add(out.total, out.idl);
  }
  return out;
}

}  // namespace cadvlm
