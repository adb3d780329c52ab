#pragma once

#include <cstddef>
#include <vector>

#include "flap/mel.hpp"
#include "flap/tensor.hpp"

namespace flap::audio {

// Non-overlapping patch layout over a [frames x bins] spectrogram. Tokens are
// ordered time-major (all frequency patches of the first time slab, then the
// next), and each token is the patch flattened row-major.
struct PatchGrid {
  size_t time_patches = 0;
  size_t freq_patches = 0;
  size_t patch_t = 0;
  size_t patch_f = 0;
  size_t source_frames = 0;  // before padding

  size_t tokens() const { return time_patches * freq_patches; }
  size_t patch_dim() const { return patch_t * patch_f; }
  size_t padded_frames() const { return time_patches * patch_t; }
  size_t bins() const { return freq_patches * patch_f; }

  bool operator==(const PatchGrid&) const = default;
};

// Pads the frame count up to a multiple of patch_t; bins must divide exactly.
PatchGrid make_grid(size_t frames, size_t bins, size_t patch_t, size_t patch_f);

// Maps token-layout element index -> padded-spectrogram element index.
// Entries equal to npos denote zero fill (padding rows).
inline constexpr size_t kPadElement = static_cast<size_t>(-1);
std::vector<size_t> patch_index_map(const PatchGrid& grid);

// [N, patch_dim] token matrix for one spectrogram.
Tensor patchify(const MelSpectrogram& spec, size_t patch_t, size_t patch_f,
                PatchGrid* grid_out = nullptr);

// Exact inverse onto the padded frame count.
MelSpectrogram depatchify(const Tensor& tokens, const PatchGrid& grid);

}  // namespace flap::audio
