#include "flap/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "flap/checkpoint.hpp"
#include "flap/fusion.hpp"
#include "flap/kernels.hpp"
#include "flap/patches.hpp"
#include "flap/wav.hpp"

namespace flap::training {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// config

namespace {

std::map<std::string, std::string> parse_kv_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) {
    throw std::runtime_error("cannot open config: " + path);
  }
  std::map<std::string, std::string> kv;
  std::string line;
  size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    size_t hash = line.find('#');
    if (hash != std::string::npos) {
      line = line.substr(0, hash);
    }
    auto strip = [](std::string s) {
      size_t a = s.find_first_not_of(" \t\r");
      if (a == std::string::npos) return std::string();
      size_t b = s.find_last_not_of(" \t\r");
      return s.substr(a, b - a + 1);
    };
    std::string stripped = strip(line);
    if (stripped.empty()) continue;
    size_t eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error(path + " line " + std::to_string(line_no) +
                               ": expected key = value");
    }
    kv[strip(stripped.substr(0, eq))] = strip(stripped.substr(eq + 1));
  }
  return kv;
}

class KvReader {
 public:
  explicit KvReader(std::map<std::string, std::string> kv) : kv_(std::move(kv)) {}

  template <typename T, typename Parse>
  void read(const std::string& key, T& out, Parse parse) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return;
    out = parse(it->second);
    consumed_.insert(key);
  }

  void read_u64(const std::string& key, uint64_t& out) {
    read(key, out, [](const std::string& s) { return std::stoull(s); });
  }
  void read_size(const std::string& key, size_t& out) {
    read(key, out,
         [](const std::string& s) { return static_cast<size_t>(std::stoull(s)); });
  }
  void read_u32(const std::string& key, uint32_t& out) {
    read(key, out,
         [](const std::string& s) { return static_cast<uint32_t>(std::stoul(s)); });
  }
  void read_double(const std::string& key, double& out) {
    read(key, out, [](const std::string& s) { return std::stod(s); });
  }
  void read_bool(const std::string& key, bool& out) {
    read(key, out, [&key](const std::string& s) {
      if (s == "true" || s == "1" || s == "yes") return true;
      if (s == "false" || s == "0" || s == "no") return false;
      throw std::runtime_error("config key " + key + ": expected boolean, got " + s);
    });
  }
  void read_string(const std::string& key, std::string& out) {
    read(key, out, [](const std::string& s) { return s; });
  }

  void finish(const std::string& path) const {
    for (const auto& [k, v] : kv_) {
      if (!consumed_.count(k)) {
        throw std::runtime_error("unknown config key in " + path + ": " + k);
      }
    }
  }

 private:
  std::map<std::string, std::string> kv_;
  std::unordered_set<std::string> consumed_;
};

}  // namespace

TrainConfig TrainConfig::from_file(const std::string& path) {
  KvReader r(parse_kv_file(path));
  TrainConfig c;
  r.read_u64("seed", c.seed);
  r.read_size("batch_size", c.batch_size);
  r.read_size("epochs", c.epochs);
  r.read_size("max_steps", c.max_steps);
  r.read_double("peak_lr", c.peak_lr);
  r.read_size("warmup_steps", c.warmup_steps);
  r.read_double("adam_beta1", c.adam_beta1);
  r.read_double("adam_beta2", c.adam_beta2);
  r.read_double("adam_eps", c.adam_eps);
  r.read_double("grad_clip", c.grad_clip);

  std::string strategy = "none";
  if (c.mask.strategy == masking::Strategy::mask1d) strategy = "1d";
  if (c.mask.strategy == masking::Strategy::mask2d) strategy = "2d";
  r.read_string("mask.strategy", strategy);
  if (strategy == "none") {
    c.mask.strategy = masking::Strategy::none;
  } else if (strategy == "1d") {
    c.mask.strategy = masking::Strategy::mask1d;
  } else if (strategy == "2d") {
    c.mask.strategy = masking::Strategy::mask2d;
  } else {
    throw std::runtime_error("mask.strategy must be none, 1d or 2d, got " +
                             strategy);
  }
  r.read_double("mask.ratio", c.mask.ratio);
  r.read_double("mask.ratio_groups", c.mask.ratio_groups);
  r.read_double("mask.ratio_frames", c.mask.ratio_frames);
  r.read_size("mask.groups", c.mask.groups);

  r.read_bool("recon.enabled", c.recon_enabled);
  r.read_double("recon.lambda", c.lambda_recon);
  r.read_bool("loss.symmetric", c.loss_symmetric);
  r.read_double("loss.tau_init", c.tau_init);

  r.read_size("model.audio_depth", c.audio_depth);
  r.read_size("model.audio_heads", c.audio_heads);
  r.read_size("model.audio_width", c.audio_width);
  r.read_size("model.mlp_ratio", c.mlp_ratio);
  r.read_size("model.patch_t", c.patch_t);
  r.read_size("model.patch_f", c.patch_f);
  r.read_size("model.d_shared", c.d_shared);
  r.read_size("model.text_depth", c.text_depth);
  r.read_size("model.text_heads", c.text_heads);
  r.read_size("model.text_width", c.text_width);
  r.read_size("model.text_max_len", c.text_max_len);
  r.read_size("model.decoder_depth", c.decoder_depth);
  r.read_size("model.decoder_heads", c.decoder_heads);
  r.read_size("model.decoder_width", c.decoder_width);

  r.read_u32("audio.sample_rate", c.sample_rate);
  r.read_double("audio.target_seconds", c.target_seconds);
  r.read_bool("audio.spec_augment", c.spec_augment);
  r.read_bool("audio.fusion", c.fusion);

  r.read_string("out_dir", c.out_dir);
  r.finish(path);
  c.validate();
  return c;
}

void TrainConfig::validate() const {
  if (batch_size == 0) {
    throw std::invalid_argument("batch_size must be at least 1");
  }
  if (batch_size < 2) {
    std::cerr << "warning: batch_size 1 gives a degenerate contrastive loss\n";
  }
  if (epochs == 0) {
    throw std::invalid_argument("epochs must be at least 1");
  }
  if (peak_lr <= 0.0) {
    throw std::invalid_argument("peak_lr must be positive");
  }
  if (tau_init <= 0.0) {
    throw std::invalid_argument("loss.tau_init must be positive");
  }
  if (mask.strategy == masking::Strategy::mask2d) {
    size_t n = audio_tokens();
    if (mask.groups == 0 || n % mask.groups != 0) {
      throw std::invalid_argument(
          "mask.groups (" + std::to_string(mask.groups) +
          ") must divide the token count " + std::to_string(n));
    }
  }
}

audio::MelConfig TrainConfig::mel_config() const {
  audio::MelConfig m;
  m.sample_rate = sample_rate;
  return m;
}

size_t TrainConfig::target_frames() const {
  size_t frames = mel_config().frames_for_seconds(target_seconds);
  if (frames == 0) {
    throw std::invalid_argument("target_seconds shorter than one window");
  }
  return frames;
}

size_t TrainConfig::audio_tokens() const {
  auto grid = audio::make_grid(target_frames(), mel_config().num_bins, patch_t,
                               patch_f);
  return grid.tokens();
}

model::ModelConfig TrainConfig::model_config(size_t vocab_size) const {
  model::ModelConfig m;
  m.audio_depth = audio_depth;
  m.audio_heads = audio_heads;
  m.audio_width = audio_width;
  m.mlp_ratio = mlp_ratio;
  m.patch_t = patch_t;
  m.patch_f = patch_f;
  m.audio_tokens = audio_tokens();
  m.d_shared = d_shared;
  m.vocab_size = vocab_size;
  m.text_depth = text_depth;
  m.text_heads = text_heads;
  m.text_width = text_width;
  m.text_max_len = text_max_len;
  m.with_decoder = recon_enabled;
  m.decoder_depth = decoder_depth;
  m.decoder_heads = decoder_heads;
  m.decoder_width = decoder_width;
  m.with_fusion = fusion;
  m.tau_init = tau_init;
  return m;
}

// ---------------------------------------------------------------------------
// schedule and optimizer

double lr_at(size_t step, size_t total_steps, size_t warmup_steps,
             double peak_lr) {
  if (total_steps == 0 || step > total_steps) {
    throw std::invalid_argument("lr_at: step outside schedule");
  }
  if (warmup_steps > 0 && step < warmup_steps) {
    return peak_lr * static_cast<double>(step) /
           static_cast<double>(warmup_steps);
  }
  double progress = warmup_steps == total_steps
                        ? 1.0
                        : static_cast<double>(step - warmup_steps) /
                              static_cast<double>(total_steps - warmup_steps);
  return peak_lr * 0.5 * (1.0 + std::cos(M_PI * progress));
}

Adam::Adam(ParamStore& params, double beta1, double beta2, double eps)
    : params_(params), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& [name, t] : params_.items()) {
    m_.emplace_back(t.size(), 0.0);
    v_.emplace_back(t.size(), 0.0);
  }
}

void Adam::step(double lr) {
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  size_t idx = 0;
  for (auto& [name, param] : params_.items()) {
    Tensor t = param;
    const double* g = t.has_grad() ? t.grad_vec().data() : nullptr;
    auto& m = m_[idx];
    auto& v = v_[idx];
    ++idx;
    if (g == nullptr) continue;
    double* p = t.data();
    for (size_t i = 0; i < t.size(); ++i) {
      if (!std::isfinite(g[i])) {
        throw std::runtime_error("non-finite gradient in parameter " + name);
      }
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

const data::Caption& sample_caption(const data::CaptionRecord& record,
                                    Rng& rng) {
  if (record.captions.empty()) {
    throw std::invalid_argument("record has no captions: " + record.id);
  }
  return record.captions[rng.uniform_int(record.captions.size())];
}

// ---------------------------------------------------------------------------
// training loop

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

TrainResult train(const data::Manifest& manifest, const TrainConfig& config) {
  config.validate();
  if (manifest.records.empty()) {
    throw std::invalid_argument("training manifest is empty");
  }
  fs::create_directories(config.out_dir);

  text::Vocab vocab = text::build_vocab(manifest);
  std::string vocab_path = (fs::path(config.out_dir) / "vocab.txt").string();
  vocab.save(vocab_path);

  Rng master(config.seed);
  Rng init_rng = master.split();
  Rng data_rng = master.split();

  model::FlapModel net(config.model_config(vocab.size()), init_rng);
  Adam optimizer(net.params(), config.adam_beta1, config.adam_beta2,
                 config.adam_eps);

  audio::MelConfig mel_cfg = config.mel_config();
  size_t target_frames = config.target_frames();
  audio::PatchGrid grid = audio::make_grid(target_frames, mel_cfg.num_bins,
                                           config.patch_t, config.patch_f);
  size_t n_tokens = grid.tokens();

  // Raw mel features (fusion keeps waveforms instead) cached per record;
  // unreadable audio drops the record with a warning.
  std::vector<size_t> usable;
  std::unordered_map<size_t, audio::MelSpectrogram> mel_cache;
  std::unordered_map<size_t, std::vector<double>> wav_cache;
  for (size_t i = 0; i < manifest.records.size(); ++i) {
    const auto& rec = manifest.records[i];
    try {
      auto wav = audio::load_wav(rec.audio_path, mel_cfg.sample_rate);
      if (config.fusion) {
        wav_cache[i] = std::move(wav);
      } else {
        mel_cache[i] = audio::mel_spectrogram(wav, mel_cfg);
      }
      usable.push_back(i);
    } catch (const std::exception& e) {
      std::cerr << "warning: skipping record " << rec.id << ": " << e.what()
                << "\n";
    }
  }
  if (usable.empty()) {
    throw std::runtime_error("no readable audio in manifest");
  }

  size_t batches_per_epoch = (usable.size() + config.batch_size - 1) / config.batch_size;
  size_t total_steps = config.epochs * batches_per_epoch;
  if (config.max_steps > 0) {
    total_steps = std::min(total_steps, config.max_steps);
  }
  size_t warmup = config.warmup_steps > 0
                      ? config.warmup_steps
                      : std::max<size_t>(1, total_steps / 20);
  if (warmup >= total_steps) {
    throw std::invalid_argument("warmup_steps must be below total steps (" +
                                std::to_string(total_steps) + ")");
  }

  std::string log_path = (fs::path(config.out_dir) / "train_log.csv").string();
  std::ofstream log(log_path, std::ios::trunc);
  log << "step,epoch,lr,contrastive,reconstruction,total,tau\n";

  TrainResult result;
  result.log_path = log_path;
  result.vocab_path = vocab_path;
  uint64_t encoder_macs = 0;

  size_t step = 0;
  std::string prev_ckpt, prev_prev_ckpt;
  for (size_t epoch = 0; epoch < config.epochs && step < total_steps; ++epoch) {
    auto order = data_rng.permutation(usable.size());
    for (size_t start = 0; start < order.size() && step < total_steps;
         start += config.batch_size) {
      size_t bsz = std::min(config.batch_size, order.size() - start);

      Tape tape;
      std::vector<Tensor> token_rows;
      std::vector<std::vector<int>> caption_ids;
      token_rows.reserve(bsz);
      for (size_t bi = 0; bi < bsz; ++bi) {
        const auto& rec = manifest.records[usable[order[start + bi]]];
        Tensor tokens;
        if (config.fusion) {
          Tensor fused = audio::fuse_features(
              tape, wav_cache[usable[order[start + bi]]], mel_cfg,
              target_frames, net.fusion_kernel(), net.fusion_bias(), &data_rng);
          if (config.spec_augment) {
            // SpecAug as a constant 0/1 mask so the merge kernel stays on the tape.
            audio::MelSpectrogram ones;
            ones.num_frames = target_frames;
            ones.num_bins = mel_cfg.num_bins;
            ones.values.assign(target_frames * mel_cfg.num_bins, 1.0);
            auto mask = audio::spec_augment(ones, data_rng);
            fused = tape.mul(fused, Tensor::from_data(
                                        {target_frames, mel_cfg.num_bins},
                                        mask.values));
          }
          tokens = tape.permute_elements(fused, audio::patch_index_map(grid),
                                         {grid.tokens(), grid.patch_dim()});
        } else {
          auto spec = audio::pad_or_crop(mel_cache[usable[order[start + bi]]],
                                         target_frames, data_rng);
          if (config.spec_augment) {
            spec = audio::spec_augment(spec, data_rng);
          }
          tokens = audio::patchify(spec, config.patch_t, config.patch_f);
        }
        token_rows.push_back(tokens);
        caption_ids.push_back(text::tokenize(sample_caption(rec, data_rng).text,
                                             vocab, config.text_max_len));
      }
      Tensor batch_tokens = tape.stack0(token_rows);

      auto plan = masking::plan_mask(config.mask, bsz, n_tokens,
                                     masking::Mode::train, data_rng);

      uint64_t before = kernels::mac_count();
      auto audio_enc = net.encode_audio(tape, batch_tokens, plan);
      encoder_macs += kernels::mac_count() - before;

      Tensor text_emb = net.encode_text(tape, caption_ids);

      objectives::ReconstructionLoss recon;
      if (config.recon_enabled && !plan.keeps_all()) {
        Tensor reconstructed =
            net.decode_audio(tape, audio_enc.per_token, plan, grid);
        // Targets are the raw patch values actually fed to the encoder.
        Tensor target = Tensor::from_data(batch_tokens.shape(),
                                          batch_tokens.vec());
        recon = objectives::reconstruction_mse(tape, reconstructed, target, plan);
      } else {
        recon.loss = Tensor::scalar(0.0);
      }

      auto combined = objectives::combined_loss(tape, audio_enc.pooled, text_emb,
                                                net.log_tau(), recon,
                                                config.lambda_recon,
                                                config.loss_symmetric);
      tape.backward(combined.total);

      if (config.grad_clip > 0.0) {
        double sq = 0.0;
        for (const auto& [name, p] : net.params().items()) {
          if (!p.has_grad()) continue;
          for (double g : p.grad_vec()) sq += g * g;
        }
        double norm = std::sqrt(sq);
        if (norm > config.grad_clip) {
          double s = config.grad_clip / norm;
          for (const auto& [name, p] : net.params().items()) {
            Tensor t = p;
            if (!t.has_grad()) continue;
            double* g = t.grad();
            for (size_t i = 0; i < t.size(); ++i) g[i] *= s;
          }
        }
      }

      double lr = lr_at(step, total_steps, warmup, config.peak_lr);
      optimizer.step(lr);
      net.clamp_tau();
      net.params().zero_grads();

      StepLog entry{step, epoch, lr, combined.report};
      result.history.push_back(entry);
      log << step << "," << epoch << "," << format_double(lr) << ","
          << format_double(entry.loss.contrastive) << ","
          << format_double(entry.loss.reconstruction) << ","
          << format_double(entry.loss.total) << ","
          << format_double(entry.loss.tau) << "\n";
      ++step;
    }

    std::string ckpt = (fs::path(config.out_dir) /
                        ("checkpoint_epoch" + std::to_string(epoch) + ".bin"))
                           .string();
    save_checkpoint(ckpt, net.params());
    if (!prev_prev_ckpt.empty()) {
      fs::remove(prev_prev_ckpt);
    }
    prev_prev_ckpt = prev_ckpt;
    prev_ckpt = ckpt;
  }

  result.checkpoint_path =
      (fs::path(config.out_dir) / "checkpoint_final.bin").string();
  save_checkpoint(result.checkpoint_path, net.params());
  result.steps = step;
  result.encoder_macs_per_step =
      step > 0 ? static_cast<double>(encoder_macs) / static_cast<double>(step)
               : 0.0;
  return result;
}

}  // namespace flap::training
