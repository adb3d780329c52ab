#include "flap/flops.hpp"

#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "flap/kernels.hpp"

namespace flap::flops {

double linear_flops(size_t n, const EncoderDims& dims) {
  double d = static_cast<double>(dims.width);
  double macs = (4.0 + 2.0 * static_cast<double>(dims.mlp_ratio)) *
                static_cast<double>(n) * d * d;
  return 2.0 * macs * static_cast<double>(dims.depth);
}

double attention_flops(size_t n, const EncoderDims& dims) {
  double nn = static_cast<double>(n);
  double macs = 2.0 * nn * nn * static_cast<double>(dims.width);
  return 2.0 * macs * static_cast<double>(dims.depth);
}

double total_flops(size_t n, const EncoderDims& dims) {
  return linear_flops(n, dims) + attention_flops(n, dims);
}

CostReport encoder_flops(size_t n_kept, size_t n_total, const EncoderDims& dims,
                         size_t batch) {
  if (n_kept == 0 || n_total == 0 || n_kept > n_total || batch == 0) {
    throw std::invalid_argument("encoder_flops: need 0 < n_kept <= n_total");
  }
  if (dims.width % dims.heads != 0) {
    throw std::invalid_argument("encoder_flops: width not divisible by heads");
  }
  CostReport r;
  r.dims = dims;
  r.batch = batch;
  r.n_total = n_total;
  r.n_kept = n_kept;
  r.keep_fraction = static_cast<double>(n_kept) / static_cast<double>(n_total);
  double b = static_cast<double>(batch);
  r.flops_linear = b * linear_flops(n_kept, dims);
  r.flops_attention = b * attention_flops(n_kept, dims);
  r.flops_total = r.flops_linear + r.flops_attention;
  r.relative_to_unmasked = r.flops_total / (b * total_flops(n_total, dims));
  return r;
}

std::vector<CurveRow> masking_cost_curve(const EncoderDims& dims, size_t n_total,
                                         size_t batch, masking::Strategy strategy,
                                         const std::vector<double>& ratios,
                                         size_t groups) {
  if (strategy == masking::Strategy::mask2d &&
      (groups == 0 || n_total % groups != 0)) {
    throw std::invalid_argument("masking_cost_curve: groups must divide N");
  }
  std::vector<CurveRow> rows;
  rows.reserve(ratios.size());
  for (double ratio : ratios) {
    if (ratio < 0.0 || ratio >= 1.0) {
      throw std::invalid_argument("masking_cost_curve: ratio outside [0,1)");
    }
    CurveRow row;
    row.strategy = strategy;
    row.ratio_1 = ratio;
    if (strategy == masking::Strategy::mask2d) {
      row.ratio_2 = ratio;
      size_t kept_groups = masking::kept_after_ratio(groups, ratio);
      size_t kept_frames =
          masking::kept_after_ratio(n_total / groups, ratio);
      row.n_kept = kept_groups * kept_frames;
    } else {
      row.n_kept = masking::kept_after_ratio(n_total, ratio);
    }
    CostReport cost = encoder_flops(row.n_kept, n_total, dims, batch);
    row.keep_fraction = cost.keep_fraction;
    row.gflops = cost.flops_total / 1e9;
    row.relative = cost.relative_to_unmasked;
    rows.push_back(row);
  }
  return rows;
}

std::string curve_to_csv(const std::vector<CurveRow>& rows) {
  std::ostringstream os;
  os << "strategy,ratio_1,ratio_2,keep_fraction,gflops,relative\n";
  char buf[200];
  for (const auto& row : rows) {
    const char* name = row.strategy == masking::Strategy::mask2d ? "2d" : "1d";
    if (row.strategy == masking::Strategy::mask2d) {
      std::snprintf(buf, sizeof(buf), "%s,%g,%g,%.10g,%.10g,%.10g\n", name,
                    row.ratio_1, row.ratio_2, row.keep_fraction, row.gflops,
                    row.relative);
    } else {
      std::snprintf(buf, sizeof(buf), "%s,%g,,%.10g,%.10g,%.10g\n", name,
                    row.ratio_1, row.keep_fraction, row.gflops, row.relative);
    }
    os << buf;
  }
  return os.str();
}

uint64_t measured_op_count(const std::function<void()>& forward) {
  uint64_t before = kernels::mac_count();
  forward();
  return 2 * (kernels::mac_count() - before);
}

}  // namespace flap::flops
