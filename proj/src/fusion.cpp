#include "flap/fusion.hpp"

#include <stdexcept>

namespace flap::audio {

namespace {

std::vector<double> stride_resample(const std::vector<double>& wav,
                                    size_t target_samples) {
  std::vector<double> out(target_samples);
  for (size_t i = 0; i < target_samples; ++i) {
    out[i] = wav[i * wav.size() / target_samples];
  }
  return out;
}

}  // namespace

Tensor fuse_features(Tape& tape, const std::vector<double>& waveform,
                     const MelConfig& mel_config, size_t target_frames,
                     const Tensor& kernel, const Tensor& bias, Rng* rng) {
  size_t window = mel_config.window_samples();
  size_t hop = mel_config.hop_samples();
  if (target_frames == 0) {
    throw std::invalid_argument("fuse_features: target_frames must be positive");
  }
  // Samples that produce exactly target_frames frames.
  size_t target_samples = window + (target_frames - 1) * hop;

  std::vector<MelSpectrogram> views;
  views.reserve(4);
  if (waveform.size() <= target_samples) {
    MelSpectrogram padded = pad_or_crop_center(mel_spectrogram(waveform, mel_config),
                                               target_frames);
    views.assign(4, padded);
  } else {
    views.push_back(
        mel_spectrogram(stride_resample(waveform, target_samples), mel_config));
    size_t span = waveform.size() - target_samples;
    size_t starts[3];
    if (rng != nullptr) {
      for (auto& s : starts) {
        s = rng->uniform_int(span + 1);
      }
    } else {
      starts[0] = 0;
      starts[1] = span / 2;
      starts[2] = span;
    }
    for (size_t s : starts) {
      std::vector<double> crop(waveform.begin() + s,
                               waveform.begin() + s + target_samples);
      views.push_back(mel_spectrogram(crop, mel_config));
    }
    for (auto& v : views) {
      v = pad_or_crop_center(v, target_frames);
    }
  }

  size_t bins = mel_config.num_bins;
  Tensor stacked = Tensor::zeros({4, target_frames, bins});
  for (size_t c = 0; c < 4; ++c) {
    std::copy(views[c].values.begin(), views[c].values.end(),
              stacked.data() + c * target_frames * bins);
  }
  return tape.conv2d_merge(stacked, kernel, bias);
}

}  // namespace flap::audio
