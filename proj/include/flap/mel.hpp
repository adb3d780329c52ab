#pragma once

#include <cstddef>
#include <vector>

#include "flap/rng.hpp"

namespace flap::audio {

struct MelConfig {
  uint32_t sample_rate = 16000;
  double frame_length_ms = 25.0;  // 400 samples at 16 kHz
  double frame_shift_ms = 10.0;   // 160 samples at 16 kHz
  size_t num_bins = 128;
  double log_floor = 1e-10;

  size_t window_samples() const {
    return static_cast<size_t>(frame_length_ms * sample_rate / 1000.0);
  }
  size_t hop_samples() const {
    return static_cast<size_t>(frame_shift_ms * sample_rate / 1000.0);
  }
  // floor((len - window)/hop) + 1
  size_t frames_for_samples(size_t num_samples) const;
  size_t frames_for_seconds(double seconds) const;
};

struct MelSpectrogram {
  size_t num_frames = 0;
  size_t num_bins = 0;
  std::vector<double> values;  // row-major [num_frames][num_bins]

  double& at(size_t t, size_t b) { return values[t * num_bins + b]; }
  double at(size_t t, size_t b) const { return values[t * num_bins + b]; }
};

// Triangular HTK-mel filterbank over the 0..Nyquist power spectrum;
// weights[bin][fft_bin] with fft_bins = nfft/2 + 1. Exposed so tests can
// locate which filters cover a given frequency.
std::vector<std::vector<double>> mel_filterbank(const MelConfig& config,
                                                size_t nfft);

// FFT size used for the given window (next power of two).
size_t fft_size_for_window(size_t window_samples);

// Hann-windowed STFT power -> mel filterbank -> ln(energy + log_floor).
MelSpectrogram mel_spectrogram(const std::vector<double>& waveform,
                               const MelConfig& config);

// Shorter inputs are zero-padded at the end; longer ones get a contiguous
// random crop. Output always has exactly target_frames frames.
MelSpectrogram pad_or_crop(const MelSpectrogram& spec, size_t target_frames,
                           Rng& rng);

// Deterministic variant used at evaluation time: center crop instead of a
// random one.
MelSpectrogram pad_or_crop_center(const MelSpectrogram& spec,
                                  size_t target_frames);

// One time mask of width uniform in [0, 192] frames and one frequency mask of
// width uniform in [0, 48] bins, both zeroed; everything else untouched.
MelSpectrogram spec_augment(const MelSpectrogram& spec, Rng& rng,
                            size_t max_time_width = 192,
                            size_t max_freq_width = 48);

}  // namespace flap::audio
