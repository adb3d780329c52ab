#include "flap/patches.hpp"

#include <stdexcept>

namespace flap::audio {

PatchGrid make_grid(size_t frames, size_t bins, size_t patch_t,
                    size_t patch_f) {
  if (patch_t == 0 || patch_f == 0 || frames == 0) {
    throw std::invalid_argument("patch extents and frame count must be positive");
  }
  if (bins % patch_f != 0) {
    throw std::invalid_argument("mel bins (" + std::to_string(bins) +
                                ") not divisible by patch width " +
                                std::to_string(patch_f));
  }
  PatchGrid grid;
  grid.patch_t = patch_t;
  grid.patch_f = patch_f;
  grid.source_frames = frames;
  grid.time_patches = (frames + patch_t - 1) / patch_t;
  grid.freq_patches = bins / patch_f;
  return grid;
}

std::vector<size_t> patch_index_map(const PatchGrid& grid) {
  size_t bins = grid.bins();
  std::vector<size_t> map(grid.tokens() * grid.patch_dim());
  size_t idx = 0;
  for (size_t gt = 0; gt < grid.time_patches; ++gt) {
    for (size_t gf = 0; gf < grid.freq_patches; ++gf) {
      for (size_t pt = 0; pt < grid.patch_t; ++pt) {
        size_t t = gt * grid.patch_t + pt;
        for (size_t pf = 0; pf < grid.patch_f; ++pf) {
          size_t b = gf * grid.patch_f + pf;
          map[idx++] = t < grid.source_frames ? t * bins + b : kPadElement;
        }
      }
    }
  }
  return map;
}

Tensor patchify(const MelSpectrogram& spec, size_t patch_t, size_t patch_f,
                PatchGrid* grid_out) {
  PatchGrid grid = make_grid(spec.num_frames, spec.num_bins, patch_t, patch_f);
  auto map = patch_index_map(grid);
  Tensor tokens = Tensor::zeros({grid.tokens(), grid.patch_dim()});
  for (size_t i = 0; i < map.size(); ++i) {
    tokens.at(i) = map[i] == kPadElement ? 0.0 : spec.values[map[i]];
  }
  if (grid_out != nullptr) {
    *grid_out = grid;
  }
  return tokens;
}

MelSpectrogram depatchify(const Tensor& tokens, const PatchGrid& grid) {
  if (tokens.rank() != 2 || tokens.extent(0) != grid.tokens() ||
      tokens.extent(1) != grid.patch_dim()) {
    throw std::invalid_argument("depatchify: tokens " + tokens.shape_str() +
                                " do not match grid");
  }
  MelSpectrogram spec;
  spec.num_frames = grid.padded_frames();
  spec.num_bins = grid.bins();
  spec.values.assign(spec.num_frames * spec.num_bins, 0.0);
  auto map = patch_index_map(grid);
  for (size_t i = 0; i < map.size(); ++i) {
    if (map[i] != kPadElement) {
      spec.values[map[i]] = tokens.at(i);
    }
  }
  return spec;
}

}  // namespace flap::audio
