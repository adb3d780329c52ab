#include "flap/masking.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace flap::masking {

namespace {

void check_ratio(double ratio, const char* name) {
  if (ratio < 0.0 || ratio >= 1.0) {
    throw std::invalid_argument(std::string(name) + " must lie in [0, 1), got " +
                                std::to_string(ratio));
  }
}

// Fills dropped and restore from sorted kept lists.
void finish_plan(MaskPlan& plan) {
  plan.dropped.resize(plan.kept.size());
  plan.restore.resize(plan.kept.size());
  for (size_t b = 0; b < plan.kept.size(); ++b) {
    const auto& kept = plan.kept[b];
    std::vector<bool> is_kept(plan.total, false);
    for (size_t i : kept) {
      is_kept[i] = true;
    }
    auto& dropped = plan.dropped[b];
    dropped.clear();
    for (size_t i = 0; i < plan.total; ++i) {
      if (!is_kept[i]) {
        dropped.push_back(i);
      }
    }
    auto& restore = plan.restore[b];
    restore.assign(plan.total, 0);
    for (size_t j = 0; j < kept.size(); ++j) {
      restore[kept[j]] = j;
    }
    for (size_t j = 0; j < dropped.size(); ++j) {
      restore[dropped[j]] = kept.size() + j;
    }
  }
}

}  // namespace

size_t kept_after_ratio(size_t n, double ratio) {
  auto kept = static_cast<size_t>(std::floor((1.0 - ratio) * static_cast<double>(n)));
  return kept < 1 ? 1 : kept;
}

MaskPlan plan_keep_all(size_t batch, size_t n) {
  MaskPlan plan;
  plan.strategy = Strategy::none;
  plan.total = n;
  plan.kept_count = n;
  std::vector<size_t> all(n);
  for (size_t i = 0; i < n; ++i) {
    all[i] = i;
  }
  plan.kept.assign(batch, all);
  finish_plan(plan);
  return plan;
}

MaskPlan plan_mask_1d(size_t batch, size_t n, double ratio, Rng& rng) {
  check_ratio(ratio, "mask ratio");
  MaskPlan plan;
  plan.strategy = Strategy::mask1d;
  plan.total = n;
  plan.kept_count = kept_after_ratio(n, ratio);
  plan.kept.resize(batch);
  for (size_t b = 0; b < batch; ++b) {
    auto perm = rng.permutation(n);
    perm.resize(plan.kept_count);
    std::sort(perm.begin(), perm.end());
    plan.kept[b] = std::move(perm);
  }
  finish_plan(plan);
  return plan;
}

MaskPlan plan_mask_2d(size_t batch, size_t n, size_t groups,
                      double ratio_groups, double ratio_frames, Rng& rng) {
  check_ratio(ratio_groups, "group mask ratio");
  check_ratio(ratio_frames, "frame mask ratio");
  if (groups == 0 || n % groups != 0) {
    throw std::invalid_argument("group count " + std::to_string(groups) +
                                " does not divide sequence length " +
                                std::to_string(n));
  }
  size_t frames_per_group = n / groups;
  size_t kept_groups = kept_after_ratio(groups, ratio_groups);
  size_t kept_frames = kept_after_ratio(frames_per_group, ratio_frames);

  MaskPlan plan;
  plan.strategy = Strategy::mask2d;
  plan.total = n;
  plan.kept_count = kept_groups * kept_frames;
  plan.kept.resize(batch);
  for (size_t b = 0; b < batch; ++b) {
    auto group_perm = rng.permutation(groups);
    group_perm.resize(kept_groups);
    std::vector<size_t> kept;
    kept.reserve(plan.kept_count);
    for (size_t g : group_perm) {
      auto frame_perm = rng.permutation(frames_per_group);
      frame_perm.resize(kept_frames);
      for (size_t f : frame_perm) {
        kept.push_back(g * frames_per_group + f);
      }
    }
    std::sort(kept.begin(), kept.end());
    plan.kept[b] = std::move(kept);
  }
  finish_plan(plan);
  return plan;
}

MaskPlan plan_mask(const MaskConfig& config, size_t batch, size_t n, Mode mode,
                   Rng& rng) {
  if (mode == Mode::eval || config.strategy == Strategy::none) {
    return plan_keep_all(batch, n);
  }
  if (config.strategy == Strategy::mask1d) {
    return plan_mask_1d(batch, n, config.ratio, rng);
  }
  return plan_mask_2d(batch, n, config.groups, config.ratio_groups,
                      config.ratio_frames, rng);
}

Tensor apply_mask(Tape& tape, const Tensor& tokens, const MaskPlan& plan) {
  if (tokens.rank() != 3 || tokens.extent(1) != plan.total) {
    throw std::invalid_argument("apply_mask: plan covers " +
                                std::to_string(plan.total) + " tokens, input is " +
                                tokens.shape_str());
  }
  if (tokens.extent(0) != plan.kept.size()) {
    throw std::invalid_argument("apply_mask: plan batch does not match input");
  }
  return tape.gather_rows(tokens, plan.kept);
}

Tensor restore_order(Tape& tape, const Tensor& visible, const Tensor& mask_token,
                     const MaskPlan& plan) {
  if (visible.rank() != 3 || visible.extent(1) != plan.kept_count) {
    throw std::invalid_argument("restore_order: plan kept count " +
                                std::to_string(plan.kept_count) +
                                " does not match input " + visible.shape_str());
  }
  return tape.scatter_restore(visible, mask_token, plan.kept, plan.total);
}

}  // namespace flap::masking
