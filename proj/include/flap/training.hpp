#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flap/manifest.hpp"
#include "flap/masking.hpp"
#include "flap/mel.hpp"
#include "flap/model.hpp"
#include "flap/objectives.hpp"
#include "flap/params.hpp"
#include "flap/text.hpp"

namespace flap::training {

// Everything a run needs, loadable from a flat key = value file (one pair per
// line, '#' comments). Unknown keys are an error. See README for the key
// list; defaults below follow the training recipe.
struct TrainConfig {
  uint64_t seed = 42;
  size_t batch_size = 16;
  size_t epochs = 45;
  size_t max_steps = 0;  // 0 = bounded by epochs only
  double peak_lr = 1e-4;
  size_t warmup_steps = 0;  // 0 = 5% of total steps
  // The betas below are the recipe's printed values; note they invert the
  // usual Adam convention (beta1 > beta2).
  double adam_beta1 = 0.99;
  double adam_beta2 = 0.9;
  double adam_eps = 1e-8;
  double grad_clip = 0.0;  // 0 = off

  masking::MaskConfig mask;
  bool recon_enabled = false;
  double lambda_recon = 1.0;
  bool loss_symmetric = true;
  double tau_init = 0.07;

  size_t audio_depth = 2, audio_heads = 4, audio_width = 64, mlp_ratio = 4;
  size_t patch_t = 16, patch_f = 16, d_shared = 64;
  size_t text_depth = 2, text_heads = 4, text_width = 64, text_max_len = 77;
  size_t decoder_depth = 4, decoder_heads = 4, decoder_width = 512;

  uint32_t sample_rate = 16000;
  double target_seconds = 10.0;
  bool spec_augment = true;
  bool fusion = false;

  std::string out_dir = "run";

  static TrainConfig from_file(const std::string& path);
  void validate() const;

  audio::MelConfig mel_config() const;
  size_t target_frames() const;
  // Token count implied by target length and patch size.
  size_t audio_tokens() const;
  model::ModelConfig model_config(size_t vocab_size) const;
};

// Linear warmup to peak_lr over warmup steps, then cosine decay to zero at
// total_steps.
double lr_at(size_t step, size_t total_steps, size_t warmup_steps,
             double peak_lr);

// Adam with bias correction over a parameter registry. Moment buffers are
// aligned with registry order. A non-finite gradient aborts the run naming
// the offending parameter.
class Adam {
 public:
  Adam(ParamStore& params, double beta1, double beta2, double eps);

  void step(double lr);
  size_t step_count() const { return t_; }

 private:
  ParamStore& params_;
  double beta1_, beta2_, eps_;
  size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// Uniform pick among a record's captions, originals and generated alike.
const data::Caption& sample_caption(const data::CaptionRecord& record, Rng& rng);

struct StepLog {
  size_t step = 0;
  size_t epoch = 0;
  double lr = 0.0;
  objectives::LossReport loss;
};

struct TrainResult {
  std::string checkpoint_path;
  std::string log_path;
  std::string vocab_path;
  size_t steps = 0;
  // Mean matmul MACs spent inside encode_audio per step (forward only).
  double encoder_macs_per_step = 0.0;
  std::vector<StepLog> history;
};

// Full training procedure: per epoch, seeded shuffle into batches; per batch,
// features -> SpecAug -> patchify -> fresh mask plan -> forward -> combined
// loss -> backward -> Adam. Checkpoints every epoch (last two retained), CSV
// log per step, all randomness from config.seed.
TrainResult train(const data::Manifest& manifest, const TrainConfig& config);

}  // namespace flap::training
