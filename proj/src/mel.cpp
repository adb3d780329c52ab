#include "flap/mel.hpp"

#include <cmath>
#include <complex>
#include <stdexcept>

namespace flap::audio {

namespace {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

// Iterative radix-2 FFT, in place.
void fft(std::vector<std::complex<double>>& a) {
  size_t n = a.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) {
      j ^= bit;
    }
    j ^= bit;
    if (i < j) {
      std::swap(a[i], a[j]);
    }
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    double ang = -2.0 * M_PI / static_cast<double>(len);
    std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t j = 0; j < len / 2; ++j) {
        std::complex<double> u = a[i + j];
        std::complex<double> v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

}  // namespace

size_t MelConfig::frames_for_samples(size_t num_samples) const {
  size_t window = window_samples();
  if (num_samples < window) {
    return 0;
  }
  return (num_samples - window) / hop_samples() + 1;
}

size_t MelConfig::frames_for_seconds(double seconds) const {
  return frames_for_samples(
      static_cast<size_t>(seconds * static_cast<double>(sample_rate)));
}

size_t fft_size_for_window(size_t window_samples) {
  size_t n = 1;
  while (n < window_samples) {
    n <<= 1;
  }
  return n;
}

std::vector<std::vector<double>> mel_filterbank(const MelConfig& config,
                                                size_t nfft) {
  size_t fft_bins = nfft / 2 + 1;
  double nyquist = config.sample_rate / 2.0;
  size_t nb = config.num_bins;

  // nb + 2 edge points equally spaced on the mel axis from 0 to Nyquist.
  std::vector<double> edges_hz(nb + 2);
  double mel_max = hz_to_mel(nyquist);
  for (size_t i = 0; i < nb + 2; ++i) {
    edges_hz[i] = mel_to_hz(mel_max * static_cast<double>(i) /
                            static_cast<double>(nb + 1));
  }

  std::vector<std::vector<double>> weights(nb,
                                           std::vector<double>(fft_bins, 0.0));
  double bin_hz = static_cast<double>(config.sample_rate) /
                  static_cast<double>(nfft);
  for (size_t m = 0; m < nb; ++m) {
    double lo = edges_hz[m], center = edges_hz[m + 1], hi = edges_hz[m + 2];
    for (size_t k = 0; k < fft_bins; ++k) {
      double f = bin_hz * static_cast<double>(k);
      if (f <= lo || f >= hi) {
        continue;
      }
      weights[m][k] = f <= center ? (f - lo) / (center - lo)
                                  : (hi - f) / (hi - center);
    }
  }
  return weights;
}

MelSpectrogram mel_spectrogram(const std::vector<double>& waveform,
                               const MelConfig& config) {
  size_t window = config.window_samples();
  size_t hop = config.hop_samples();
  if (waveform.size() < window) {
    throw std::invalid_argument(
        "waveform shorter than one analysis window (" +
        std::to_string(waveform.size()) + " < " + std::to_string(window) +
        " samples)");
  }
  size_t frames = config.frames_for_samples(waveform.size());
  size_t nfft = fft_size_for_window(window);
  size_t fft_bins = nfft / 2 + 1;

  std::vector<double> hann(window);
  for (size_t i = 0; i < window; ++i) {
    hann[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(i) /
                                   static_cast<double>(window - 1));
  }
  auto filters = mel_filterbank(config, nfft);

  MelSpectrogram out;
  out.num_frames = frames;
  out.num_bins = config.num_bins;
  out.values.assign(frames * config.num_bins, 0.0);

  std::vector<std::complex<double>> buf(nfft);
  std::vector<double> power(fft_bins);
  for (size_t t = 0; t < frames; ++t) {
    const double* src = waveform.data() + t * hop;
    for (size_t i = 0; i < window; ++i) {
      buf[i] = std::complex<double>(src[i] * hann[i], 0.0);
    }
    for (size_t i = window; i < nfft; ++i) {
      buf[i] = 0.0;
    }
    fft(buf);
    for (size_t k = 0; k < fft_bins; ++k) {
      power[k] = std::norm(buf[k]);
    }
    for (size_t m = 0; m < config.num_bins; ++m) {
      double energy = 0.0;
      const auto& w = filters[m];
      for (size_t k = 0; k < fft_bins; ++k) {
        if (w[k] != 0.0) {
          energy += w[k] * power[k];
        }
      }
      out.at(t, m) = std::log(energy + config.log_floor);
    }
  }
  return out;
}

namespace {

MelSpectrogram crop_at(const MelSpectrogram& spec, size_t start,
                       size_t target_frames) {
  MelSpectrogram out;
  out.num_frames = target_frames;
  out.num_bins = spec.num_bins;
  out.values.assign(spec.values.begin() + start * spec.num_bins,
                    spec.values.begin() + (start + target_frames) * spec.num_bins);
  return out;
}

MelSpectrogram pad_to(const MelSpectrogram& spec, size_t target_frames) {
  MelSpectrogram out;
  out.num_frames = target_frames;
  out.num_bins = spec.num_bins;
  out.values.assign(target_frames * spec.num_bins, 0.0);
  std::copy(spec.values.begin(), spec.values.end(), out.values.begin());
  return out;
}

}  // namespace

MelSpectrogram pad_or_crop(const MelSpectrogram& spec, size_t target_frames,
                           Rng& rng) {
  if (spec.num_frames == target_frames) {
    return spec;
  }
  if (spec.num_frames < target_frames) {
    return pad_to(spec, target_frames);
  }
  size_t start = rng.uniform_int(spec.num_frames - target_frames + 1);
  return crop_at(spec, start, target_frames);
}

MelSpectrogram pad_or_crop_center(const MelSpectrogram& spec,
                                  size_t target_frames) {
  if (spec.num_frames == target_frames) {
    return spec;
  }
  if (spec.num_frames < target_frames) {
    return pad_to(spec, target_frames);
  }
  return crop_at(spec, (spec.num_frames - target_frames) / 2, target_frames);
}

MelSpectrogram spec_augment(const MelSpectrogram& spec, Rng& rng,
                            size_t max_time_width, size_t max_freq_width) {
  MelSpectrogram out = spec;
  size_t t_width = rng.uniform_int(max_time_width + 1);
  if (t_width > spec.num_frames) {
    t_width = spec.num_frames;
  }
  size_t t_start = rng.uniform_int(spec.num_frames - t_width + 1);
  size_t f_width = rng.uniform_int(max_freq_width + 1);
  if (f_width > spec.num_bins) {
    f_width = spec.num_bins;
  }
  size_t f_start = rng.uniform_int(spec.num_bins - f_width + 1);

  for (size_t t = t_start; t < t_start + t_width; ++t) {
    for (size_t b = 0; b < spec.num_bins; ++b) {
      out.at(t, b) = 0.0;
    }
  }
  for (size_t t = 0; t < spec.num_frames; ++t) {
    for (size_t b = f_start; b < f_start + f_width; ++b) {
      out.at(t, b) = 0.0;
    }
  }
  return out;
}

}  // namespace flap::audio
