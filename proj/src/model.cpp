#include "flap/model.hpp"

#include <cmath>
#include <stdexcept>

#include "flap/text.hpp"

namespace flap::model {

namespace {
constexpr double kInitStd = 0.02;  // positional/token tables
constexpr double kAttnMask = -1e30;

// Xavier scaling for weight matrices [fan_in, fan_out].
double xavier_std(size_t fan_in, size_t fan_out) {
  return std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
}
}  // namespace

void ModelConfig::validate() const {
  if (audio_width % audio_heads != 0) {
    throw std::invalid_argument("audio width not divisible by head count");
  }
  if (text_width % text_heads != 0) {
    throw std::invalid_argument("text width not divisible by head count");
  }
  if (with_decoder && decoder_width % decoder_heads != 0) {
    throw std::invalid_argument("decoder width not divisible by head count");
  }
  if (with_decoder && decoder_width % 4 != 0) {
    throw std::invalid_argument(
        "decoder width must be divisible by 4 for 2-D sinusoidal positions");
  }
  if (vocab_size == 0 || audio_tokens == 0) {
    throw std::invalid_argument("vocab_size and audio_tokens must be set");
  }
  if (tau_init <= 0.0) {
    throw std::invalid_argument("temperature must be positive");
  }
}

Tensor sinusoid_2d(size_t grid_t, size_t grid_f, size_t width) {
  if (width % 4 != 0) {
    throw std::invalid_argument("sinusoid_2d: width " + std::to_string(width) +
                                " not divisible by 4");
  }
  size_t half = width / 2;     // per-axis embedding width
  size_t quarter = width / 4;  // sin (or cos) bank size per axis
  Tensor table = Tensor::zeros({grid_t * grid_f, width});
  for (size_t t = 0; t < grid_t; ++t) {
    for (size_t f = 0; f < grid_f; ++f) {
      double* row = table.data() + (t * grid_f + f) * width;
      for (size_t i = 0; i < quarter; ++i) {
        double omega = std::pow(10000.0, -static_cast<double>(i) /
                                             static_cast<double>(quarter));
        row[i] = std::sin(static_cast<double>(t) * omega);
        row[quarter + i] = std::cos(static_cast<double>(t) * omega);
        row[half + i] = std::sin(static_cast<double>(f) * omega);
        row[half + quarter + i] = std::cos(static_cast<double>(f) * omega);
      }
    }
  }
  return table;
}

FlapModel::FlapModel(const ModelConfig& config, Rng& init_rng)
    : config_(config) {
  config_.validate();
  size_t dp = config_.patch_dim();
  size_t d = config_.audio_width;
  size_t dt = config_.text_width;
  size_t ds = config_.d_shared;

  patch_embed_w_ = params_.create_randn("audio_encoder.patch_embed.weight",
                                        {dp, d}, init_rng, xavier_std(dp, d));
  patch_embed_b_ = params_.create("audio_encoder.patch_embed.bias", {d});
  audio_pos_ = params_.create_randn("audio_encoder.pos_embed",
                                    {config_.audio_tokens, d}, init_rng,
                                    kInitStd);
  audio_tower_ = build_tower("audio_encoder", config_.audio_depth, d, init_rng);
  audio_proj_w_ = params_.create_randn("audio_encoder.proj.weight", {d, ds},
                                       init_rng, xavier_std(d, ds));
  audio_proj_b_ = params_.create("audio_encoder.proj.bias", {ds});

  token_embed_ = params_.create_randn("text_encoder.token_embed",
                                      {config_.vocab_size, dt}, init_rng,
                                      kInitStd);
  text_pos_ = params_.create_randn("text_encoder.pos_embed",
                                   {config_.text_max_len, dt}, init_rng,
                                   kInitStd);
  text_tower_ = build_tower("text_encoder", config_.text_depth, dt, init_rng);
  text_proj_w_ = params_.create_randn("text_encoder.proj.weight", {dt, ds},
                                      init_rng, xavier_std(dt, ds));
  text_proj_b_ = params_.create("text_encoder.proj.bias", {ds});

  log_tau_ = params_.create_full("loss.log_tau", {1}, std::log(config_.tau_init));

  if (config_.with_decoder) {
    size_t dd = config_.decoder_width;
    dec_in_w_ = params_.create_randn("decoder.proj_in.weight", {d, dd},
                                     init_rng, xavier_std(d, dd));
    dec_in_b_ = params_.create("decoder.proj_in.bias", {dd});
    mask_token_ =
        params_.create_randn("decoder.mask_token", {dd}, init_rng, kInitStd);
    dec_tower_ = build_tower("decoder", config_.decoder_depth, dd, init_rng);
    dec_head_w_ = params_.create_randn("decoder.head.weight", {dd, dp},
                                       init_rng, xavier_std(dd, dp));
    dec_head_b_ = params_.create("decoder.head.bias", {dp});
  }

  if (config_.with_fusion) {
    // Averaging start: the merge of four equal views reproduces any one view.
    fusion_kernel_ = params_.create("fusion.kernel", {4, 3, 3});
    for (size_t c = 0; c < 4; ++c) {
      fusion_kernel_.at((c * 3 + 1) * 3 + 1) = 0.25;
    }
    fusion_bias_ = params_.create("fusion.bias", {1});
  }
}

FlapModel::Tower FlapModel::build_tower(const std::string& prefix, size_t depth,
                                        size_t width, Rng& rng) {
  Tower tower;
  size_t hidden = width * config_.mlp_ratio;
  for (size_t i = 0; i < depth; ++i) {
    std::string base = prefix + ".block" + std::to_string(i);
    BlockParams p;
    p.ln1.gain = params_.create_full(base + ".ln1.gain", {width}, 1.0);
    p.ln1.bias = params_.create(base + ".ln1.bias", {width});
    p.wq = params_.create_randn(base + ".attn.wq", {width, width}, rng,
                                xavier_std(width, width));
    p.bq = params_.create(base + ".attn.bq", {width});
    p.wk = params_.create_randn(base + ".attn.wk", {width, width}, rng,
                                xavier_std(width, width));
    p.bk = params_.create(base + ".attn.bk", {width});
    p.wv = params_.create_randn(base + ".attn.wv", {width, width}, rng,
                                xavier_std(width, width));
    p.bv = params_.create(base + ".attn.bv", {width});
    p.wo = params_.create_randn(base + ".attn.wo", {width, width}, rng,
                                xavier_std(width, width));
    p.bo = params_.create(base + ".attn.bo", {width});
    p.ln2.gain = params_.create_full(base + ".ln2.gain", {width}, 1.0);
    p.ln2.bias = params_.create(base + ".ln2.bias", {width});
    p.w1 = params_.create_randn(base + ".mlp.w1", {width, hidden}, rng,
                                xavier_std(width, hidden));
    p.b1 = params_.create(base + ".mlp.b1", {hidden});
    p.w2 = params_.create_randn(base + ".mlp.w2", {hidden, width}, rng,
                                xavier_std(hidden, width));
    p.b2 = params_.create(base + ".mlp.b2", {width});
    tower.blocks.push_back(std::move(p));
  }
  tower.norm.gain = params_.create_full(prefix + ".norm.gain", {width}, 1.0);
  tower.norm.bias = params_.create(prefix + ".norm.bias", {width});
  return tower;
}

Tensor FlapModel::run_block(Tape& tape, const Tensor& x, const BlockParams& p,
                            size_t heads, const Tensor& attn_bias) const {
  size_t b = x.extent(0), n = x.extent(1), d = x.extent(2);
  size_t dh = d / heads;

  Tensor h = tape.layernorm_lastdim(x, p.ln1.gain, p.ln1.bias);
  Tensor flat = tape.reshape(h, {b * n, d});
  Tensor q = tape.add_bias(tape.matmul(flat, p.wq), p.bq);
  Tensor k = tape.add_bias(tape.matmul(flat, p.wk), p.bk);
  Tensor v = tape.add_bias(tape.matmul(flat, p.wv), p.bv);

  Tensor qh = tape.head_split(tape.reshape(q, {b, n, d}), heads);
  Tensor kh = tape.head_split(tape.reshape(k, {b, n, d}), heads);
  Tensor vh = tape.head_split(tape.reshape(v, {b, n, d}), heads);

  Tensor logits = tape.bmm(qh, tape.transpose_12(kh));
  logits = tape.scale(logits, 1.0 / std::sqrt(static_cast<double>(dh)));
  if (attn_bias.defined()) {
    logits = tape.add(logits, attn_bias);
  }
  Tensor attn = tape.softmax_lastdim(logits);
  Tensor ctx = tape.head_merge(tape.bmm(attn, vh), heads);

  Tensor ctx_flat = tape.reshape(ctx, {b * n, d});
  Tensor out = tape.add_bias(tape.matmul(ctx_flat, p.wo), p.bo);
  Tensor x1 = tape.add(x, tape.reshape(out, {b, n, d}));

  Tensor h2 = tape.layernorm_lastdim(x1, p.ln2.gain, p.ln2.bias);
  Tensor m = tape.add_bias(tape.matmul(tape.reshape(h2, {b * n, d}), p.w1), p.b1);
  m = tape.gelu(m);
  m = tape.add_bias(tape.matmul(m, p.w2), p.b2);
  return tape.add(x1, tape.reshape(m, {b, n, d}));
}

Tensor FlapModel::run_tower(Tape& tape, const Tensor& x, const Tower& tower,
                            size_t heads, const Tensor& attn_bias) const {
  Tensor h = x;
  for (const auto& block : tower.blocks) {
    h = run_block(tape, h, block, heads, attn_bias);
  }
  return tape.layernorm_lastdim(h, tower.norm.gain, tower.norm.bias);
}

AudioEncoding FlapModel::encode_audio(Tape& tape, const Tensor& patch_tokens,
                                      const masking::MaskPlan& plan) const {
  if (patch_tokens.rank() != 3 ||
      patch_tokens.extent(2) != config_.patch_dim()) {
    throw std::invalid_argument("encode_audio: expected [B,N," +
                                std::to_string(config_.patch_dim()) +
                                "], got " + patch_tokens.shape_str());
  }
  if (patch_tokens.extent(1) != config_.audio_tokens) {
    throw std::invalid_argument(
        "encode_audio: token count " + std::to_string(patch_tokens.extent(1)) +
        " does not match configured " + std::to_string(config_.audio_tokens));
  }
  size_t b = patch_tokens.extent(0), n = patch_tokens.extent(1);
  size_t d = config_.audio_width;

  Tensor flat = tape.reshape(patch_tokens, {b * n, config_.patch_dim()});
  Tensor emb = tape.add_bias(tape.matmul(flat, patch_embed_w_), patch_embed_b_);
  Tensor x = tape.reshape(emb, {b, n, d});
  // Positions go on before masking so kept tokens carry their original slot.
  x = tape.add_rows(x, audio_pos_);
  x = masking::apply_mask(tape, x, plan);

  Tensor per_token =
      run_tower(tape, x, audio_tower_, config_.audio_heads, Tensor());
  Tensor pooled = tape.mean_axis1(per_token);
  Tensor proj = tape.add_bias(tape.matmul(pooled, audio_proj_w_), audio_proj_b_);
  return {tape.l2_normalize_rows(proj), per_token};
}

Tensor FlapModel::encode_text(
    Tape& tape, const std::vector<std::vector<int>>& token_ids) const {
  if (token_ids.empty()) {
    throw std::invalid_argument("encode_text: empty batch");
  }
  size_t b = token_ids.size();
  size_t len = 1;
  for (const auto& ids : token_ids) {
    if (ids.size() > config_.text_max_len) {
      throw std::invalid_argument("encode_text: caption longer than cap of " +
                                  std::to_string(config_.text_max_len));
    }
    len = std::max(len, ids.size());
  }

  std::vector<int> padded(b * len, text::Vocab::kPad);
  std::vector<double> nonpad(b * len, 0.0);
  for (size_t i = 0; i < b; ++i) {
    for (size_t j = 0; j < token_ids[i].size(); ++j) {
      padded[i * len + j] = token_ids[i][j];
      nonpad[i * len + j] = 1.0;
    }
  }

  Tensor x = tape.embedding(token_embed_, padded, b, len);
  x = tape.add_rows(x, text_pos_);

  // Pad columns are removed from attention so a caption's embedding does not
  // depend on how much padding its batch needed.
  Tensor bias;
  bool any_pad = false;
  for (double w : nonpad) {
    if (w == 0.0) any_pad = true;
  }
  if (any_pad) {
    bias = Tensor::zeros({b * config_.text_heads, len, len});
    for (size_t i = 0; i < b; ++i) {
      for (size_t h = 0; h < config_.text_heads; ++h) {
        double* mat = bias.data() + (i * config_.text_heads + h) * len * len;
        for (size_t qr = 0; qr < len; ++qr) {
          for (size_t kc = 0; kc < len; ++kc) {
            if (nonpad[i * len + kc] == 0.0) {
              mat[qr * len + kc] = kAttnMask;
            }
          }
        }
      }
    }
  }

  Tensor h = run_tower(tape, x, text_tower_, config_.text_heads, bias);
  Tensor pooled = tape.masked_mean_axis1(h, nonpad);
  Tensor proj = tape.add_bias(tape.matmul(pooled, text_proj_w_), text_proj_b_);
  return tape.l2_normalize_rows(proj);
}

Tensor FlapModel::decode_audio(Tape& tape, const Tensor& per_token,
                               const masking::MaskPlan& plan,
                               const audio::PatchGrid& grid) const {
  if (!config_.with_decoder) {
    throw std::logic_error("decode_audio: model built without decoder");
  }
  if (grid.tokens() != plan.total) {
    throw std::invalid_argument("decode_audio: grid and plan disagree on N");
  }
  size_t b = per_token.extent(0), nv = per_token.extent(1);
  size_t d = config_.audio_width, dd = config_.decoder_width;

  Tensor x = tape.add_bias(
      tape.matmul(tape.reshape(per_token, {b * nv, d}), dec_in_w_), dec_in_b_);
  x = tape.reshape(x, {b, nv, dd});
  x = masking::restore_order(tape, x, mask_token_, plan);
  Tensor pos = sinusoid_2d(grid.time_patches, grid.freq_patches, dd);
  x = tape.add_rows(x, pos);

  Tensor h = run_tower(tape, x, dec_tower_, config_.decoder_heads, Tensor());
  Tensor out = tape.add_bias(
      tape.matmul(tape.reshape(h, {b * plan.total, dd}), dec_head_w_),
      dec_head_b_);
  return tape.reshape(out, {b, plan.total, config_.patch_dim()});
}

double FlapModel::tau() const { return std::exp(log_tau_.at(0)); }

void FlapModel::clamp_tau(double min_tau) {
  double floor = std::log(min_tau);
  if (log_tau_.at(0) < floor) {
    log_tau_.at(0) = floor;
  }
}

}  // namespace flap::model
