#pragma once

#include <string>
#include <vector>

#include "flap/masking.hpp"
#include "flap/params.hpp"
#include "flap/patches.hpp"
#include "flap/tape.hpp"

namespace flap::model {

struct ModelConfig {
  // audio encoder
  size_t audio_depth = 2;
  size_t audio_heads = 4;
  size_t audio_width = 64;
  size_t mlp_ratio = 4;
  size_t patch_t = 16;
  size_t patch_f = 16;
  size_t audio_tokens = 0;  // N, fixed by target length and patch size

  size_t d_shared = 64;

  // text encoder (takes the place of RoBERTa at desk scale)
  size_t vocab_size = 0;
  size_t text_depth = 2;
  size_t text_heads = 4;
  size_t text_width = 64;
  size_t text_max_len = 77;

  // reconstruction decoder
  bool with_decoder = false;
  size_t decoder_depth = 4;
  size_t decoder_heads = 4;
  size_t decoder_width = 512;

  bool with_fusion = false;

  double tau_init = 0.07;

  size_t patch_dim() const { return patch_t * patch_f; }
  void validate() const;
};

// Fixed 2-D sinusoidal table over a (time_patches, freq_patches) grid; the
// first half of each row encodes the time index, the second the frequency
// index, as interleaved sin/cos banks. width must be divisible by 4.
Tensor sinusoid_2d(size_t grid_t, size_t grid_f, size_t width);

struct AudioEncoding {
  Tensor pooled;     // [B, d_shared], unit rows
  Tensor per_token;  // [B, N', audio_width]
};

class FlapModel {
 public:
  FlapModel(const ModelConfig& config, Rng& init_rng);

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // Patch embed + learned positions (pre-mask) -> visible tokens -> pre-norm
  // transformer stack -> mean pool -> projection -> L2 normalize.
  AudioEncoding encode_audio(Tape& tape, const Tensor& patch_tokens,
                             const masking::MaskPlan& plan) const;

  // Token + position embeddings -> transformer stack with pad columns masked
  // out of attention -> mean over non-pad tokens -> projection -> normalize.
  Tensor encode_text(Tape& tape,
                     const std::vector<std::vector<int>>& token_ids) const;

  // Project to decoder width, restore order with the trainable mask token,
  // add the fixed 2-D sinusoidal positions, run the decoder stack, and map
  // each token back to raw patch values.
  Tensor decode_audio(Tape& tape, const Tensor& per_token,
                      const masking::MaskPlan& plan,
                      const audio::PatchGrid& grid) const;

  Tensor log_tau() const { return log_tau_; }
  double tau() const;
  // Keeps the learned temperature at or above the floor (applied after each
  // optimizer step, outside the graph).
  void clamp_tau(double min_tau = 0.01);

  Tensor fusion_kernel() const { return fusion_kernel_; }
  Tensor fusion_bias() const { return fusion_bias_; }

 private:
  struct LayerNormParams {
    Tensor gain, bias;
  };
  struct BlockParams {
    LayerNormParams ln1, ln2;
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor w1, b1, w2, b2;
  };
  struct Tower {
    std::vector<BlockParams> blocks;
    LayerNormParams norm;
  };

  Tower build_tower(const std::string& prefix, size_t depth, size_t width,
                    Rng& rng);
  // One pre-norm block; attn_bias (optional, constant) is added to the
  // attention logits of every head.
  Tensor run_block(Tape& tape, const Tensor& x, const BlockParams& p,
                   size_t heads, const Tensor& attn_bias) const;
  Tensor run_tower(Tape& tape, const Tensor& x, const Tower& tower,
                   size_t heads, const Tensor& attn_bias) const;

  ModelConfig config_;
  ParamStore params_;

  Tensor patch_embed_w_, patch_embed_b_, audio_pos_;
  Tower audio_tower_;
  Tensor audio_proj_w_, audio_proj_b_;

  Tensor token_embed_, text_pos_;
  Tower text_tower_;
  Tensor text_proj_w_, text_proj_b_;

  Tensor log_tau_;

  Tensor dec_in_w_, dec_in_b_, mask_token_;
  Tower dec_tower_;
  Tensor dec_head_w_, dec_head_b_;

  Tensor fusion_kernel_, fusion_bias_;
};

}  // namespace flap::model
