#pragma once

#include <string>
#include <vector>

namespace flap::audio {

// Reads a RIFF PCM16 mono WAV at the expected sample rate. Samples are scaled
// to [-1, 1] by 1/32768. Anything else (other codecs, stereo, a different
// rate) is a format error; there is deliberately no silent resampling.
std::vector<double> load_wav(const std::string& path,
                             uint32_t expected_rate = 16000);

// PCM16 mono writer used by tests and the synthetic dataset generator.
// Values are clipped to [-1, 1] before quantization.
void write_wav(const std::string& path, const std::vector<double>& samples,
               uint32_t sample_rate = 16000);

}  // namespace flap::audio
