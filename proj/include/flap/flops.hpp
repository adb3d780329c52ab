#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "flap/masking.hpp"

namespace flap::flops {

struct EncoderDims {
  size_t depth = 12;
  size_t width = 768;
  size_t heads = 12;
  size_t mlp_ratio = 4;
};

// Analytic transformer cost at 2 FLOPs per MAC, matmuls only. Per layer:
// QKV + output projections and the MLP scale linearly in sequence length,
// the two attention products quadratically. Norms and softmax are excluded
// (they carry no matmul MACs).
struct CostReport {
  EncoderDims dims;
  size_t batch = 1;
  size_t n_total = 0;
  size_t n_kept = 0;
  double keep_fraction = 0.0;
  double flops_linear = 0.0;
  double flops_attention = 0.0;
  double flops_total = 0.0;
  double relative_to_unmasked = 0.0;
};

// FLOPs of one forward pass over n tokens.
double linear_flops(size_t n, const EncoderDims& dims);
double attention_flops(size_t n, const EncoderDims& dims);
double total_flops(size_t n, const EncoderDims& dims);

CostReport encoder_flops(size_t n_kept, size_t n_total, const EncoderDims& dims,
                         size_t batch = 1);

struct CurveRow {
  masking::Strategy strategy;
  double ratio_1 = 0.0;
  double ratio_2 = 0.0;  // unused for 1-D
  size_t n_kept = 0;
  double keep_fraction = 0.0;
  double gflops = 0.0;
  double relative = 0.0;
};

// One row per ratio, using the exact floor/clamp kept counts from the masking
// module rather than the ideal fractions. For 2-D the ratio applies to both
// the group and frame axes.
std::vector<CurveRow> masking_cost_curve(const EncoderDims& dims, size_t n_total,
                                         size_t batch, masking::Strategy strategy,
                                         const std::vector<double>& ratios,
                                         size_t groups = 0);

// Header: strategy,ratio_1,ratio_2,keep_fraction,gflops,relative
std::string curve_to_csv(const std::vector<CurveRow>& rows);

// Runs the closure and returns matmul FLOPs (2 per MAC) spent inside it.
uint64_t measured_op_count(const std::function<void()>& forward);

}  // namespace flap::flops
