#pragma once

#include <cstddef>
#include <vector>

#include "flap/rng.hpp"
#include "flap/tape.hpp"
#include "flap/tensor.hpp"

namespace flap::masking {

enum class Strategy { none, mask1d, mask2d };

struct MaskConfig {
  Strategy strategy = Strategy::none;
  double ratio = 0.0;         // 1-D token drop ratio
  double ratio_groups = 0.0;  // 2-D: drop ratio over the M groups
  double ratio_frames = 0.0;  // 2-D: drop ratio within each kept group
  size_t groups = 0;          // 2-D: M, must divide N
};

// Kept/dropped bookkeeping for one batch. All items share the same kept
// count; the index sets are drawn independently per item.
struct MaskPlan {
  Strategy strategy = Strategy::none;
  size_t total = 0;  // N
  size_t kept_count = 0;  // N'
  std::vector<std::vector<size_t>> kept;     // per item, sorted ascending
  std::vector<std::vector<size_t>> dropped;  // complement, sorted ascending
  // restore[b][orig_pos] = position of orig_pos within [kept ++ dropped];
  // applying it to that concatenation reproduces the original order.
  std::vector<std::vector<size_t>> restore;

  bool keeps_all() const { return kept_count == total; }
  size_t dropped_count() const { return total - kept_count; }
};

// floor((1 - ratio) * n), clamped to at least one token.
size_t kept_after_ratio(size_t n, double ratio);

MaskPlan plan_keep_all(size_t batch, size_t n);

// Kept indices are the first N' entries of a uniform permutation, re-sorted.
MaskPlan plan_mask_1d(size_t batch, size_t n, double ratio, Rng& rng);

// Splits the sequence into M contiguous groups of K = N/M tokens, samples
// M' groups, then the same count K' of tokens inside every kept group
// (independent draws per group), so N' = M'. K' exactly.
MaskPlan plan_mask_2d(size_t batch, size_t n, size_t groups, double ratio_groups,
                      double ratio_frames, Rng& rng);

enum class Mode { train, eval };

// Masking is a training-time device; eval mode always returns keep-all.
MaskPlan plan_mask(const MaskConfig& config, size_t batch, size_t n, Mode mode,
                   Rng& rng);

// Row subset per the plan: output row j of item b is input row kept[b][j],
// bit-exact and nothing else.
Tensor apply_mask(Tape& tape, const Tensor& tokens, const MaskPlan& plan);

// Scatters processed visible rows back to their original positions and puts
// the shared mask token everywhere else.
Tensor restore_order(Tape& tape, const Tensor& visible, const Tensor& mask_token,
                     const MaskPlan& plan);

}  // namespace flap::masking
