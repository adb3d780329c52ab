#pragma once

#include <cstdint>
#include <string>

#include "flap/manifest.hpp"

namespace flap::data {

// Writes a small tone <-> caption dataset: n_pairs sine-wave WAV files with
// distinct frequencies, each paired with a distinct one-word caption
// ("tone0", "tone1", ...). Returns the manifest, which is also saved as
// manifest.jsonl in out_dir. Used by the sanity-training workflow and tests.
Manifest make_tone_dataset(const std::string& out_dir, size_t n_pairs,
                           double seconds, uint64_t seed = 7,
                           uint32_t sample_rate = 16000);

}  // namespace flap::data
