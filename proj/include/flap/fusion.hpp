#pragma once

#include <vector>

#include "flap/mel.hpp"
#include "flap/tape.hpp"

namespace flap::audio {

// Feature fusion for long clips: a global view (the whole waveform strided
// down to the target length) and three local crops, each turned into a
// mel-spectrogram, stacked channel-wise and merged by a learned 3x3
// convolution. Clips at or under the target length degenerate to four copies
// of the padded clip, so the fused shape always equals the unfused one.
//
// With rng null the local crop starts are start / middle / end, which keeps
// evaluation deterministic. The returned [target_frames, bins] spectrogram
// lives on the tape so the merge kernel stays trainable.
Tensor fuse_features(Tape& tape, const std::vector<double>& waveform,
                     const MelConfig& mel_config, size_t target_frames,
                     const Tensor& kernel, const Tensor& bias,
                     Rng* rng = nullptr);

}  // namespace flap::audio
