#include "flap/tape.hpp"

#include <cmath>
#include <stdexcept>

#include "flap/kernels.hpp"

namespace flap {

namespace {

void check_finite(const Tensor& x, const char* op) {
  for (double v : x.vec()) {
    if (!std::isfinite(v)) {
      throw std::domain_error(std::string(op) + ": input contains non-finite values");
    }
  }
}

double gelu_grad_one(double x) {
  double phi = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)) + x * phi;
}

}  // namespace

Tensor Tape::make_output(std::vector<size_t> shape, bool grad_needed) {
  Tensor out = Tensor::zeros(std::move(shape));
  out.set_requires_grad(recording_ && grad_needed);
  return out;
}

void Tape::record(std::function<void()> fn) { nodes_.push_back(std::move(fn)); }

void Tape::backward(Tensor loss) {
  if (loss.size() != 1) {
    throw std::invalid_argument("backward() expects a scalar loss, got " +
                                loss.shape_str());
  }
  Tensor l = loss;
  l.grad()[0] += 1.0;
  for (size_t i = nodes_.size(); i-- > 0;) {
    nodes_[i]();
  }
}

// ---------------------------------------------------------------------------
// matrix products

Tensor Tape::matmul(Tensor a, Tensor b) {
  if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(0)) {
    throw std::invalid_argument("matmul: inner dimensions disagree: " +
                                a.shape_str() + " vs " + b.shape_str());
  }
  size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
  Tensor out = make_output({m, n}, a.requires_grad() || b.requires_grad());
  kernels::matmul(a.data(), b.data(), out.data(), m, k, n);
  if (out.requires_grad()) {
    record([a, b, out, m, k, n]() mutable {
      if (!out.has_grad()) return;
      if (a.requires_grad()) {
        kernels::matmul_a_bt(out.grad_vec().data(), b.data(), a.grad(), m, n, k);
      }
      if (b.requires_grad()) {
        kernels::matmul_at_b(a.data(), out.grad_vec().data(), b.grad(), k, m, n);
      }
    });
  }
  return out;
}

Tensor Tape::bmm(Tensor a, Tensor b) {
  if (a.rank() != 3 || b.rank() != 3 || a.extent(0) != b.extent(0) ||
      a.extent(2) != b.extent(1)) {
    throw std::invalid_argument("bmm: incompatible shapes: " + a.shape_str() +
                                " vs " + b.shape_str());
  }
  size_t nb = a.extent(0), m = a.extent(1), k = a.extent(2), n = b.extent(2);
  Tensor out = make_output({nb, m, n}, a.requires_grad() || b.requires_grad());
  for (size_t i = 0; i < nb; ++i) {
    kernels::matmul(a.data() + i * m * k, b.data() + i * k * n,
                    out.data() + i * m * n, m, k, n);
  }
  if (out.requires_grad()) {
    record([a, b, out, nb, m, k, n]() mutable {
      if (!out.has_grad()) return;
      const double* g = out.grad_vec().data();
      for (size_t i = 0; i < nb; ++i) {
        if (a.requires_grad()) {
          kernels::matmul_a_bt(g + i * m * n, b.data() + i * k * n,
                               a.grad() + i * m * k, m, n, k);
        }
        if (b.requires_grad()) {
          kernels::matmul_at_b(a.data() + i * m * k, g + i * m * n,
                               b.grad() + i * k * n, k, m, n);
        }
      }
    });
  }
  return out;
}

Tensor Tape::transpose(Tensor x) {
  if (x.rank() != 2) {
    throw std::invalid_argument("transpose: expected rank-2, got " +
                                x.shape_str());
  }
  size_t m = x.extent(0), n = x.extent(1);
  Tensor out = make_output({n, m}, x.requires_grad());
  for (size_t i = 0; i < m; ++i) {
    for (size_t j = 0; j < n; ++j) {
      out.at(j, i) = x.at(i, j);
    }
  }
  if (out.requires_grad()) {
    record([x, out, m, n]() mutable {
      if (!out.has_grad()) return;
      double* gx = x.grad();
      const double* go = out.grad_vec().data();
      for (size_t i = 0; i < m; ++i) {
        for (size_t j = 0; j < n; ++j) {
          gx[i * n + j] += go[j * m + i];
        }
      }
    });
  }
  return out;
}

Tensor Tape::transpose_12(Tensor x) {
  if (x.rank() != 3) {
    throw std::invalid_argument("transpose_12: expected rank-3, got " +
                                x.shape_str());
  }
  size_t nb = x.extent(0), m = x.extent(1), n = x.extent(2);
  Tensor out = make_output({nb, n, m}, x.requires_grad());
  for (size_t b = 0; b < nb; ++b) {
    const double* xi = x.data() + b * m * n;
    double* oi = out.data() + b * m * n;
    for (size_t i = 0; i < m; ++i) {
      for (size_t j = 0; j < n; ++j) {
        oi[j * m + i] = xi[i * n + j];
      }
    }
  }
  if (out.requires_grad()) {
    record([x, out, nb, m, n]() mutable {
      if (!out.has_grad()) return;
      double* gx = x.grad();
      const double* go = out.grad_vec().data();
      for (size_t b = 0; b < nb; ++b) {
        for (size_t i = 0; i < m; ++i) {
          for (size_t j = 0; j < n; ++j) {
            gx[(b * m + i) * n + j] += go[(b * n + j) * m + i];
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// elementwise / broadcast

Tensor Tape::add(Tensor a, Tensor b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument("add: shape mismatch: " + a.shape_str() +
                                " vs " + b.shape_str());
  }
  Tensor out = make_output(a.shape(), a.requires_grad() || b.requires_grad());
  for (size_t i = 0; i < a.size(); ++i) {
    out.at(i) = a.at(i) + b.at(i);
  }
  if (out.requires_grad()) {
    record([a, b, out]() mutable {
      if (!out.has_grad()) return;
      const double* g = out.grad_vec().data();
      if (a.requires_grad()) {
        double* ga = a.grad();
        for (size_t i = 0; i < a.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        double* gb = b.grad();
        for (size_t i = 0; i < b.size(); ++i) gb[i] += g[i];
      }
    });
  }
  return out;
}

Tensor Tape::sub(Tensor a, Tensor b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument("sub: shape mismatch: " + a.shape_str() +
                                " vs " + b.shape_str());
  }
  Tensor out = make_output(a.shape(), a.requires_grad() || b.requires_grad());
  for (size_t i = 0; i < a.size(); ++i) {
    out.at(i) = a.at(i) - b.at(i);
  }
  if (out.requires_grad()) {
    record([a, b, out]() mutable {
      if (!out.has_grad()) return;
      const double* g = out.grad_vec().data();
      if (a.requires_grad()) {
        double* ga = a.grad();
        for (size_t i = 0; i < a.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        double* gb = b.grad();
        for (size_t i = 0; i < b.size(); ++i) gb[i] -= g[i];
      }
    });
  }
  return out;
}

Tensor Tape::mul(Tensor a, Tensor b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument("mul: shape mismatch: " + a.shape_str() +
                                " vs " + b.shape_str());
  }
  Tensor out = make_output(a.shape(), a.requires_grad() || b.requires_grad());
  for (size_t i = 0; i < a.size(); ++i) {
    out.at(i) = a.at(i) * b.at(i);
  }
  if (out.requires_grad()) {
    record([a, b, out]() mutable {
      if (!out.has_grad()) return;
      const double* g = out.grad_vec().data();
      if (a.requires_grad()) {
        double* ga = a.grad();
        for (size_t i = 0; i < a.size(); ++i) ga[i] += g[i] * b.at(i);
      }
      if (b.requires_grad()) {
        double* gb = b.grad();
        for (size_t i = 0; i < b.size(); ++i) gb[i] += g[i] * a.at(i);
      }
    });
  }
  return out;
}

Tensor Tape::scale(Tensor x, double c) {
  Tensor out = make_output(x.shape(), x.requires_grad());
  for (size_t i = 0; i < x.size(); ++i) {
    out.at(i) = c * x.at(i);
  }
  if (out.requires_grad()) {
    record([x, out, c]() mutable {
      if (!out.has_grad()) return;
      double* gx = x.grad();
      const double* g = out.grad_vec().data();
      for (size_t i = 0; i < x.size(); ++i) gx[i] += c * g[i];
    });
  }
  return out;
}

Tensor Tape::mul_scalar(Tensor x, Tensor s) {
  if (s.size() != 1) {
    throw std::invalid_argument("mul_scalar: scale must be a 1-element tensor");
  }
  Tensor out = make_output(x.shape(), x.requires_grad() || s.requires_grad());
  double sv = s.at(0);
  for (size_t i = 0; i < x.size(); ++i) {
    out.at(i) = sv * x.at(i);
  }
  if (out.requires_grad()) {
    record([x, s, out, sv]() mutable {
      if (!out.has_grad()) return;
      const double* g = out.grad_vec().data();
      if (x.requires_grad()) {
        double* gx = x.grad();
        for (size_t i = 0; i < x.size(); ++i) gx[i] += sv * g[i];
      }
      if (s.requires_grad()) {
        double acc = 0.0;
        for (size_t i = 0; i < x.size(); ++i) acc += g[i] * x.at(i);
        s.grad()[0] += acc;
      }
    });
  }
  return out;
}

Tensor Tape::exp_elem(Tensor x) {
  Tensor out = make_output(x.shape(), x.requires_grad());
  for (size_t i = 0; i < x.size(); ++i) {
    out.at(i) = std::exp(x.at(i));
  }
  if (out.requires_grad()) {
    record([x, out]() mutable {
      if (!out.has_grad()) return;
      double* gx = x.grad();
      const double* g = out.grad_vec().data();
      for (size_t i = 0; i < x.size(); ++i) gx[i] += g[i] * out.at(i);
    });
  }
  return out;
}

Tensor Tape::gelu(Tensor x) {
  Tensor out = make_output(x.shape(), x.requires_grad());
  kernels::gelu(x.data(), out.data(), x.size());
  if (out.requires_grad()) {
    record([x, out]() mutable {
      if (!out.has_grad()) return;
      double* gx = x.grad();
      const double* g = out.grad_vec().data();
      for (size_t i = 0; i < x.size(); ++i) {
        gx[i] += g[i] * gelu_grad_one(x.at(i));
      }
    });
  }
  return out;
}

Tensor Tape::add_bias(Tensor x, Tensor b) {
  if (x.rank() != 2 || b.rank() != 1 || x.extent(1) != b.extent(0)) {
    throw std::invalid_argument("add_bias: expected [R,D]+[D], got " +
                                x.shape_str() + " and " + b.shape_str());
  }
  size_t rows = x.extent(0), d = x.extent(1);
  Tensor out = make_output(x.shape(), x.requires_grad() || b.requires_grad());
  for (size_t r = 0; r < rows; ++r) {
    for (size_t j = 0; j < d; ++j) {
      out.at(r, j) = x.at(r, j) + b.at(j);
    }
  }
  if (out.requires_grad()) {
    record([x, b, out, rows, d]() mutable {
      if (!out.has_grad()) return;
      const double* g = out.grad_vec().data();
      if (x.requires_grad()) {
        double* gx = x.grad();
        for (size_t i = 0; i < rows * d; ++i) gx[i] += g[i];
      }
      if (b.requires_grad()) {
        double* gb = b.grad();
        for (size_t r = 0; r < rows; ++r) {
          for (size_t j = 0; j < d; ++j) gb[j] += g[r * d + j];
        }
      }
    });
  }
  return out;
}

Tensor Tape::add_rows(Tensor x, Tensor table) {
  if (x.rank() != 3 || table.rank() != 2 || x.extent(2) != table.extent(1) ||
      table.extent(0) < x.extent(1)) {
    throw std::invalid_argument("add_rows: expected [B,N,D]+[R>=N,D], got " +
                                x.shape_str() + " and " + table.shape_str());
  }
  size_t nb = x.extent(0), n = x.extent(1), d = x.extent(2);
  Tensor out = make_output(x.shape(), x.requires_grad() || table.requires_grad());
  for (size_t b = 0; b < nb; ++b) {
    for (size_t i = 0; i < n; ++i) {
      for (size_t j = 0; j < d; ++j) {
        out.at(b, i, j) = x.at(b, i, j) + table.at(i, j);
      }
    }
  }
  if (out.requires_grad()) {
    record([x, table, out, nb, n, d]() mutable {
      if (!out.has_grad()) return;
      const double* g = out.grad_vec().data();
      if (x.requires_grad()) {
        double* gx = x.grad();
        for (size_t i = 0; i < nb * n * d; ++i) gx[i] += g[i];
      }
      if (table.requires_grad()) {
        double* gt = table.grad();
        for (size_t b = 0; b < nb; ++b) {
          for (size_t i = 0; i < n; ++i) {
            for (size_t j = 0; j < d; ++j) {
              gt[i * d + j] += g[(b * n + i) * d + j];
            }
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// normalization / reductions

Tensor Tape::softmax_lastdim(Tensor x) {
  check_finite(x, "softmax");
  size_t cols = x.extent(x.rank() - 1);
  size_t rows = x.size() / cols;
  Tensor out = make_output(x.shape(), x.requires_grad());
  kernels::softmax_rows(x.data(), out.data(), rows, cols);
  if (out.requires_grad()) {
    record([x, out, rows, cols]() mutable {
      if (!out.has_grad()) return;
      double* gx = x.grad();
      const double* g = out.grad_vec().data();
      const double* y = out.data();
      for (size_t r = 0; r < rows; ++r) {
        const double* yr = y + r * cols;
        const double* gr = g + r * cols;
        double dot = 0.0;
        for (size_t j = 0; j < cols; ++j) dot += gr[j] * yr[j];
        for (size_t j = 0; j < cols; ++j) {
          gx[r * cols + j] += yr[j] * (gr[j] - dot);
        }
      }
    });
  }
  return out;
}

Tensor Tape::layernorm_lastdim(Tensor x, Tensor gain,
                               Tensor bias, double eps) {
  size_t d = x.extent(x.rank() - 1);
  if (gain.size() != d || bias.size() != d) {
    throw std::invalid_argument("layernorm: gain/bias must have " +
                                std::to_string(d) + " elements");
  }
  if (eps <= 0.0) {
    throw std::invalid_argument("layernorm: eps must be positive");
  }
  size_t rows = x.size() / d;
  Tensor out = make_output(x.shape(), x.requires_grad() ||
                                          gain.requires_grad() ||
                                          bias.requires_grad());
  for (size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * d;
    double* yr = out.data() + r * d;
    double mean = 0.0;
    for (size_t j = 0; j < d; ++j) mean += xr[j];
    mean /= d;
    double var = 0.0;
    for (size_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= d;
    double rstd = 1.0 / std::sqrt(var + eps);
    for (size_t j = 0; j < d; ++j) {
      yr[j] = gain.at(j) * (xr[j] - mean) * rstd + bias.at(j);
    }
  }
  if (out.requires_grad()) {
    record([x, gain, bias, out, rows, d, eps]() mutable {
      if (!out.has_grad()) return;
      const double* g = out.grad_vec().data();
      for (size_t r = 0; r < rows; ++r) {
        const double* xr = x.data() + r * d;
        const double* gr = g + r * d;
        double mean = 0.0;
        for (size_t j = 0; j < d; ++j) mean += xr[j];
        mean /= d;
        double var = 0.0;
        for (size_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
        var /= d;
        double rstd = 1.0 / std::sqrt(var + eps);

        if (gain.requires_grad() || bias.requires_grad()) {
          double* gg = gain.requires_grad() ? gain.grad() : nullptr;
          double* gb = bias.requires_grad() ? bias.grad() : nullptr;
          for (size_t j = 0; j < d; ++j) {
            double xhat = (xr[j] - mean) * rstd;
            if (gg) gg[j] += gr[j] * xhat;
            if (gb) gb[j] += gr[j];
          }
        }
        if (x.requires_grad()) {
          // dL/dxhat = g*gain; fold mean/variance terms per row.
          double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
          for (size_t j = 0; j < d; ++j) {
            double xhat = (xr[j] - mean) * rstd;
            double dxhat = gr[j] * gain.at(j);
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat;
          }
          double* gx = x.grad() + r * d;
          for (size_t j = 0; j < d; ++j) {
            double xhat = (xr[j] - mean) * rstd;
            double dxhat = gr[j] * gain.at(j);
            gx[j] += rstd * (dxhat - (sum_dxhat + xhat * sum_dxhat_xhat) / d);
          }
        }
      }
    });
  }
  return out;
}

Tensor Tape::mean_axis1(Tensor x) {
  if (x.rank() != 3) {
    throw std::invalid_argument("mean_axis1: expected [B,N,D], got " +
                                x.shape_str());
  }
  size_t nb = x.extent(0), n = x.extent(1), d = x.extent(2);
  Tensor out = make_output({nb, d}, x.requires_grad());
  for (size_t b = 0; b < nb; ++b) {
    for (size_t i = 0; i < n; ++i) {
      for (size_t j = 0; j < d; ++j) {
        out.at(b, j) += x.at(b, i, j);
      }
    }
    for (size_t j = 0; j < d; ++j) out.at(b, j) /= static_cast<double>(n);
  }
  if (out.requires_grad()) {
    record([x, out, nb, n, d]() mutable {
      if (!out.has_grad()) return;
      double* gx = x.grad();
      const double* g = out.grad_vec().data();
      double inv = 1.0 / static_cast<double>(n);
      for (size_t b = 0; b < nb; ++b) {
        for (size_t i = 0; i < n; ++i) {
          for (size_t j = 0; j < d; ++j) {
            gx[(b * n + i) * d + j] += g[b * d + j] * inv;
          }
        }
      }
    });
  }
  return out;
}

Tensor Tape::masked_mean_axis1(Tensor x,
                               const std::vector<double>& weights) {
  if (x.rank() != 3 || weights.size() != x.extent(0) * x.extent(1)) {
    throw std::invalid_argument("masked_mean_axis1: weights must cover [B,N]");
  }
  size_t nb = x.extent(0), n = x.extent(1), d = x.extent(2);
  std::vector<double> denom(nb, 0.0);
  for (size_t b = 0; b < nb; ++b) {
    for (size_t i = 0; i < n; ++i) denom[b] += weights[b * n + i];
    if (denom[b] < 1.0) denom[b] = 1.0;
  }
  Tensor out = make_output({nb, d}, x.requires_grad());
  for (size_t b = 0; b < nb; ++b) {
    for (size_t i = 0; i < n; ++i) {
      double w = weights[b * n + i];
      if (w == 0.0) continue;
      for (size_t j = 0; j < d; ++j) out.at(b, j) += w * x.at(b, i, j);
    }
    for (size_t j = 0; j < d; ++j) out.at(b, j) /= denom[b];
  }
  if (out.requires_grad()) {
    record([x, out, weights, denom, nb, n, d]() mutable {
      if (!out.has_grad()) return;
      double* gx = x.grad();
      const double* g = out.grad_vec().data();
      for (size_t b = 0; b < nb; ++b) {
        for (size_t i = 0; i < n; ++i) {
          double w = weights[b * n + i] / denom[b];
          if (w == 0.0) continue;
          for (size_t j = 0; j < d; ++j) {
            gx[(b * n + i) * d + j] += g[b * d + j] * w;
          }
        }
      }
    });
  }
  return out;
}

Tensor Tape::l2_normalize_rows(Tensor x, double eps) {
  if (x.rank() != 2) {
    throw std::invalid_argument("l2_normalize_rows: expected [R,D], got " +
                                x.shape_str());
  }
  size_t rows = x.extent(0), d = x.extent(1);
  std::vector<double> norms(rows);
  Tensor out = make_output(x.shape(), x.requires_grad());
  for (size_t r = 0; r < rows; ++r) {
    double sq = 0.0;
    for (size_t j = 0; j < d; ++j) sq += x.at(r, j) * x.at(r, j);
    double nrm = std::sqrt(sq);
    norms[r] = nrm > eps ? nrm : eps;
    for (size_t j = 0; j < d; ++j) out.at(r, j) = x.at(r, j) / norms[r];
  }
  if (out.requires_grad()) {
    record([x, out, norms, rows, d, eps]() mutable {
      if (!out.has_grad()) return;
      double* gx = x.grad();
      const double* g = out.grad_vec().data();
      for (size_t r = 0; r < rows; ++r) {
        const double* yr = out.data() + r * d;
        const double* gr = g + r * d;
        double inv = 1.0 / norms[r];
        if (norms[r] <= eps) {
          // Clamped branch: y = x/eps is plain scaling.
          for (size_t j = 0; j < d; ++j) gx[r * d + j] += gr[j] * inv;
          continue;
        }
        double dot = 0.0;
        for (size_t j = 0; j < d; ++j) dot += gr[j] * yr[j];
        for (size_t j = 0; j < d; ++j) {
          gx[r * d + j] += (gr[j] - yr[j] * dot) * inv;
        }
      }
    });
  }
  return out;
}

Tensor Tape::sum(Tensor x) {
  Tensor out = make_output({1}, x.requires_grad());
  double acc = 0.0;
  for (size_t i = 0; i < x.size(); ++i) acc += x.at(i);
  out.at(0) = acc;
  if (out.requires_grad()) {
    record([x, out]() mutable {
      if (!out.has_grad()) return;
      double g = out.grad_vec()[0];
      double* gx = x.grad();
      for (size_t i = 0; i < x.size(); ++i) gx[i] += g;
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// structure

Tensor Tape::reshape(Tensor x, std::vector<size_t> shape) {
  if (shape_numel(shape) != x.size()) {
    throw std::invalid_argument("reshape: cannot view " + x.shape_str() +
                                " as requested shape");
  }
  Tensor out = make_output(std::move(shape), x.requires_grad());
  for (size_t i = 0; i < x.size(); ++i) out.at(i) = x.at(i);
  if (out.requires_grad()) {
    record([x, out]() mutable {
      if (!out.has_grad()) return;
      double* gx = x.grad();
      const double* g = out.grad_vec().data();
      for (size_t i = 0; i < x.size(); ++i) gx[i] += g[i];
    });
  }
  return out;
}

Tensor Tape::head_split(Tensor x, size_t heads) {
  if (x.rank() != 3 || x.extent(2) % heads != 0) {
    throw std::invalid_argument("head_split: width of " + x.shape_str() +
                                " not divisible by " + std::to_string(heads));
  }
  size_t nb = x.extent(0), n = x.extent(1), d = x.extent(2), dh = d / heads;
  Tensor out = make_output({nb * heads, n, dh}, x.requires_grad());
  for (size_t b = 0; b < nb; ++b) {
    for (size_t h = 0; h < heads; ++h) {
      for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < dh; ++j) {
          out.at(b * heads + h, i, j) = x.at(b, i, h * dh + j);
        }
      }
    }
  }
  if (out.requires_grad()) {
    record([x, out, nb, heads, n, dh]() mutable {
      if (!out.has_grad()) return;
      double* gx = x.grad();
      const double* g = out.grad_vec().data();
      size_t d = heads * dh;
      for (size_t b = 0; b < nb; ++b) {
        for (size_t h = 0; h < heads; ++h) {
          for (size_t i = 0; i < n; ++i) {
            for (size_t j = 0; j < dh; ++j) {
              gx[(b * n + i) * d + h * dh + j] +=
                  g[((b * heads + h) * n + i) * dh + j];
            }
          }
        }
      }
    });
  }
  return out;
}

Tensor Tape::head_merge(Tensor x, size_t heads) {
  if (x.rank() != 3 || x.extent(0) % heads != 0) {
    throw std::invalid_argument("head_merge: batch of " + x.shape_str() +
                                " not divisible by " + std::to_string(heads));
  }
  size_t nb = x.extent(0) / heads, n = x.extent(1), dh = x.extent(2);
  size_t d = heads * dh;
  Tensor out = make_output({nb, n, d}, x.requires_grad());
  for (size_t b = 0; b < nb; ++b) {
    for (size_t h = 0; h < heads; ++h) {
      for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < dh; ++j) {
          out.at(b, i, h * dh + j) = x.at(b * heads + h, i, j);
        }
      }
    }
  }
  if (out.requires_grad()) {
    record([x, out, nb, heads, n, dh, d]() mutable {
      if (!out.has_grad()) return;
      double* gx = x.grad();
      const double* g = out.grad_vec().data();
      for (size_t b = 0; b < nb; ++b) {
        for (size_t h = 0; h < heads; ++h) {
          for (size_t i = 0; i < n; ++i) {
            for (size_t j = 0; j < dh; ++j) {
              gx[((b * heads + h) * n + i) * dh + j] +=
                  g[(b * n + i) * d + h * dh + j];
            }
          }
        }
      }
    });
  }
  return out;
}

Tensor Tape::embedding(Tensor table, const std::vector<int>& ids,
                       size_t batch, size_t len) {
  if (table.rank() != 2 || ids.size() != batch * len) {
    throw std::invalid_argument("embedding: ids must cover [B,L]");
  }
  size_t vocab = table.extent(0), d = table.extent(1);
  for (int id : ids) {
    if (id < 0 || static_cast<size_t>(id) >= vocab) {
      throw std::out_of_range("embedding: token id " + std::to_string(id) +
                              " outside vocab of " + std::to_string(vocab));
    }
  }
  Tensor out = make_output({batch, len, d}, table.requires_grad());
  for (size_t i = 0; i < batch * len; ++i) {
    const double* row = table.data() + static_cast<size_t>(ids[i]) * d;
    double* dst = out.data() + i * d;
    for (size_t j = 0; j < d; ++j) dst[j] = row[j];
  }
  if (out.requires_grad()) {
    record([table, out, ids, batch, len, d]() mutable {
      if (!out.has_grad()) return;
      double* gt = table.grad();
      const double* g = out.grad_vec().data();
      for (size_t i = 0; i < batch * len; ++i) {
        double* dst = gt + static_cast<size_t>(ids[i]) * d;
        const double* src = g + i * d;
        for (size_t j = 0; j < d; ++j) dst[j] += src[j];
      }
    });
  }
  return out;
}

Tensor Tape::permute_elements(Tensor x,
                              const std::vector<size_t>& src_index,
                              std::vector<size_t> out_shape) {
  if (shape_numel(out_shape) != src_index.size()) {
    throw std::invalid_argument("permute_elements: index map does not cover output");
  }
  constexpr size_t kPad = static_cast<size_t>(-1);
  for (size_t s : src_index) {
    if (s != kPad && s >= x.size()) {
      throw std::invalid_argument("permute_elements: source index out of range");
    }
  }
  Tensor out = make_output(std::move(out_shape), x.requires_grad());
  for (size_t i = 0; i < src_index.size(); ++i) {
    out.at(i) = src_index[i] == kPad ? 0.0 : x.at(src_index[i]);
  }
  if (out.requires_grad()) {
    record([x, out, src_index]() mutable {
      if (!out.has_grad()) return;
      double* gx = x.grad();
      const double* g = out.grad_vec().data();
      for (size_t i = 0; i < src_index.size(); ++i) {
        if (src_index[i] != static_cast<size_t>(-1)) {
          gx[src_index[i]] += g[i];
        }
      }
    });
  }
  return out;
}

Tensor Tape::stack0(const std::vector<Tensor>& parts) {
  if (parts.empty()) {
    throw std::invalid_argument("stack0: nothing to stack");
  }
  bool grad_needed = false;
  for (const auto& p : parts) {
    if (p.shape() != parts[0].shape()) {
      throw std::invalid_argument("stack0: shape mismatch: " + p.shape_str() +
                                  " vs " + parts[0].shape_str());
    }
    grad_needed = grad_needed || p.requires_grad();
  }
  std::vector<size_t> shape = {parts.size()};
  shape.insert(shape.end(), parts[0].shape().begin(), parts[0].shape().end());
  size_t stride = parts[0].size();
  Tensor out = make_output(std::move(shape), grad_needed);
  for (size_t p = 0; p < parts.size(); ++p) {
    for (size_t i = 0; i < stride; ++i) {
      out.at(p * stride + i) = parts[p].at(i);
    }
  }
  if (out.requires_grad()) {
    std::vector<Tensor> parts_copy = parts;
    record([parts_copy, out, stride]() mutable {
      if (!out.has_grad()) return;
      const double* g = out.grad_vec().data();
      auto& parts = parts_copy;
      for (size_t p = 0; p < parts.size(); ++p) {
        if (!parts[p].requires_grad()) continue;
        double* gp = parts[p].grad();
        for (size_t i = 0; i < stride; ++i) {
          gp[i] += g[p * stride + i];
        }
      }
    });
  }
  return out;
}

Tensor Tape::gather_rows(Tensor x,
                         const std::vector<std::vector<size_t>>& kept) {
  if (x.rank() != 3 || kept.size() != x.extent(0)) {
    throw std::invalid_argument("gather_rows: kept lists must match batch of " +
                                x.shape_str());
  }
  size_t nb = x.extent(0), n = x.extent(1), d = x.extent(2);
  size_t nk = kept.empty() ? 0 : kept[0].size();
  for (const auto& rows : kept) {
    if (rows.size() != nk) {
      throw std::invalid_argument("gather_rows: ragged kept lists");
    }
    for (size_t r : rows) {
      if (r >= n) {
        throw std::invalid_argument("gather_rows: kept index out of range");
      }
    }
  }
  Tensor out = make_output({nb, nk, d}, x.requires_grad());
  for (size_t b = 0; b < nb; ++b) {
    for (size_t j = 0; j < nk; ++j) {
      const double* src = x.data() + (b * n + kept[b][j]) * d;
      double* dst = out.data() + (b * nk + j) * d;
      for (size_t c = 0; c < d; ++c) dst[c] = src[c];
    }
  }
  if (out.requires_grad()) {
    record([x, out, kept, nb, n, nk, d]() mutable {
      if (!out.has_grad()) return;
      double* gx = x.grad();
      const double* g = out.grad_vec().data();
      for (size_t b = 0; b < nb; ++b) {
        for (size_t j = 0; j < nk; ++j) {
          double* dst = gx + (b * n + kept[b][j]) * d;
          const double* src = g + (b * nk + j) * d;
          for (size_t c = 0; c < d; ++c) dst[c] += src[c];
        }
      }
    });
  }
  return out;
}

Tensor Tape::scatter_restore(Tensor visible, Tensor mask_token,
                             const std::vector<std::vector<size_t>>& kept,
                             size_t total_rows) {
  if (visible.rank() != 3 || kept.size() != visible.extent(0)) {
    throw std::invalid_argument("scatter_restore: kept lists must match batch");
  }
  size_t nb = visible.extent(0), nk = visible.extent(1), d = visible.extent(2);
  if (mask_token.size() != d) {
    throw std::invalid_argument("scatter_restore: mask token width " +
                                mask_token.shape_str() + " != " +
                                std::to_string(d));
  }
  for (const auto& rows : kept) {
    if (rows.size() != nk) {
      throw std::invalid_argument(
          "scatter_restore: plan does not match visible length " +
          std::to_string(nk));
    }
  }
  Tensor out = make_output({nb, total_rows, d},
                           visible.requires_grad() || mask_token.requires_grad());
  for (size_t b = 0; b < nb; ++b) {
    for (size_t i = 0; i < total_rows; ++i) {
      double* dst = out.data() + (b * total_rows + i) * d;
      for (size_t c = 0; c < d; ++c) dst[c] = mask_token.at(c);
    }
    for (size_t j = 0; j < nk; ++j) {
      const double* src = visible.data() + (b * nk + j) * d;
      double* dst = out.data() + (b * total_rows + kept[b][j]) * d;
      for (size_t c = 0; c < d; ++c) dst[c] = src[c];
    }
  }
  if (out.requires_grad()) {
    record([visible, mask_token, out, kept, nb, nk, d, total_rows]() mutable {
      if (!out.has_grad()) return;
      const double* g = out.grad_vec().data();
      for (size_t b = 0; b < nb; ++b) {
        std::vector<bool> is_kept(total_rows, false);
        for (size_t j = 0; j < nk; ++j) is_kept[kept[b][j]] = true;
        if (visible.requires_grad()) {
          double* gv = visible.grad();
          for (size_t j = 0; j < nk; ++j) {
            const double* src = g + (b * total_rows + kept[b][j]) * d;
            double* dst = gv + (b * nk + j) * d;
            for (size_t c = 0; c < d; ++c) dst[c] += src[c];
          }
        }
        if (mask_token.requires_grad()) {
          double* gm = mask_token.grad();
          for (size_t i = 0; i < total_rows; ++i) {
            if (is_kept[i]) continue;
            const double* src = g + (b * total_rows + i) * d;
            for (size_t c = 0; c < d; ++c) gm[c] += src[c];
          }
        }
      }
    });
  }
  return out;
}

Tensor Tape::conv2d_merge(Tensor x, Tensor kernel,
                          Tensor bias) {
  if (x.rank() != 3 || kernel.rank() != 3 || kernel.extent(0) != x.extent(0) ||
      kernel.extent(1) != 3 || kernel.extent(2) != 3 || bias.size() != 1) {
    throw std::invalid_argument("conv2d_merge: expected [C,H,W],[C,3,3],[1]");
  }
  size_t c = x.extent(0), h = x.extent(1), w = x.extent(2);
  Tensor out = make_output({h, w}, x.requires_grad() ||
                                       kernel.requires_grad() ||
                                       bias.requires_grad());
  for (size_t i = 0; i < h; ++i) {
    for (size_t j = 0; j < w; ++j) {
      double acc = bias.at(0);
      for (size_t ch = 0; ch < c; ++ch) {
        for (size_t u = 0; u < 3; ++u) {
          long ii = static_cast<long>(i) + static_cast<long>(u) - 1;
          if (ii < 0 || ii >= static_cast<long>(h)) continue;
          for (size_t v = 0; v < 3; ++v) {
            long jj = static_cast<long>(j) + static_cast<long>(v) - 1;
            if (jj < 0 || jj >= static_cast<long>(w)) continue;
            acc += kernel.at(ch, u, v) * x.at(ch, ii, jj);
          }
        }
      }
      out.at(i, j) = acc;
    }
  }
  if (out.requires_grad()) {
    record([x, kernel, bias, out, c, h, w]() mutable {
      if (!out.has_grad()) return;
      const double* g = out.grad_vec().data();
      for (size_t i = 0; i < h; ++i) {
        for (size_t j = 0; j < w; ++j) {
          double go = g[i * w + j];
          if (bias.requires_grad()) bias.grad()[0] += go;
          for (size_t ch = 0; ch < c; ++ch) {
            for (size_t u = 0; u < 3; ++u) {
              long ii = static_cast<long>(i) + static_cast<long>(u) - 1;
              if (ii < 0 || ii >= static_cast<long>(h)) continue;
              for (size_t v = 0; v < 3; ++v) {
                long jj = static_cast<long>(j) + static_cast<long>(v) - 1;
                if (jj < 0 || jj >= static_cast<long>(w)) continue;
                if (kernel.requires_grad()) {
                  kernel.grad()[(ch * 3 + u) * 3 + v] += go * x.at(ch, ii, jj);
                }
                if (x.requires_grad()) {
                  x.grad()[(ch * h + ii) * w + jj] += go * kernel.at(ch, u, v);
                }
              }
            }
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// losses / similarity

Tensor Tape::cross_entropy_rows(Tensor logits,
                                const std::vector<size_t>& targets) {
  if (logits.rank() != 2 || targets.size() != logits.extent(0)) {
    throw std::invalid_argument("cross_entropy_rows: need one target per row");
  }
  size_t rows = logits.extent(0), cols = logits.extent(1);
  for (size_t t : targets) {
    if (t >= cols) {
      throw std::invalid_argument("cross_entropy_rows: target out of range");
    }
  }
  Tensor out = make_output({1}, logits.requires_grad());
  double loss = 0.0;
  for (size_t r = 0; r < rows; ++r) {
    const double* lr = logits.data() + r * cols;
    double mx = lr[0];
    for (size_t j = 1; j < cols; ++j) mx = lr[j] > mx ? lr[j] : mx;
    double sum = 0.0;
    for (size_t j = 0; j < cols; ++j) sum += std::exp(lr[j] - mx);
    loss += std::log(sum) - (lr[targets[r]] - mx);
  }
  out.at(0) = loss / static_cast<double>(rows);
  if (out.requires_grad()) {
    record([logits, out, targets, rows, cols]() mutable {
      if (!out.has_grad()) return;
      double g = out.grad_vec()[0] / static_cast<double>(rows);
      double* gl = logits.grad();
      for (size_t r = 0; r < rows; ++r) {
        const double* lr = logits.data() + r * cols;
        double mx = lr[0];
        for (size_t j = 1; j < cols; ++j) mx = lr[j] > mx ? lr[j] : mx;
        double sum = 0.0;
        for (size_t j = 0; j < cols; ++j) sum += std::exp(lr[j] - mx);
        for (size_t j = 0; j < cols; ++j) {
          double p = std::exp(lr[j] - mx) / sum;
          gl[r * cols + j] += g * (p - (j == targets[r] ? 1.0 : 0.0));
        }
      }
    });
  }
  return out;
}

Tensor Tape::cosine_similarity(Tensor a, Tensor b, double eps) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("cosine_similarity: size mismatch: " +
                                a.shape_str() + " vs " + b.shape_str());
  }
  size_t n = a.size();
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < n; ++i) {
    dot += a.at(i) * b.at(i);
    na += a.at(i) * a.at(i);
    nb += b.at(i) * b.at(i);
  }
  // eps floor keeps the zero-vector case finite.
  na = std::max(std::sqrt(na), eps);
  nb = std::max(std::sqrt(nb), eps);
  Tensor out = make_output({1}, a.requires_grad() || b.requires_grad());
  double s = dot / (na * nb);
  out.at(0) = s;
  if (out.requires_grad()) {
    record([a, b, out, na, nb, s, n, eps]() mutable {
      if (!out.has_grad()) return;
      double g = out.grad_vec()[0];
      bool a_clamped = na <= eps, b_clamped = nb <= eps;
      if (a.requires_grad()) {
        double* ga = a.grad();
        for (size_t i = 0; i < n; ++i) {
          double t = b.at(i) / (na * nb);
          if (!a_clamped) t -= s * a.at(i) / (na * na);
          ga[i] += g * t;
        }
      }
      if (b.requires_grad()) {
        double* gb = b.grad();
        for (size_t i = 0; i < n; ++i) {
          double t = a.at(i) / (na * nb);
          if (!b_clamped) t -= s * b.at(i) / (nb * nb);
          gb[i] += g * t;
        }
      }
    });
  }
  return out;
}

Tensor Tape::mse_masked(Tensor recon, Tensor target,
                        const std::vector<std::vector<size_t>>& masked) {
  if (recon.shape() != target.shape() || recon.rank() != 3 ||
      masked.size() != recon.extent(0)) {
    throw std::invalid_argument("mse_masked: recon " + recon.shape_str() +
                                " vs target " + target.shape_str());
  }
  size_t nb = recon.extent(0), n = recon.extent(1), p = recon.extent(2);
  size_t count = 0;
  for (const auto& rows : masked) {
    for (size_t i : rows) {
      if (i >= n) {
        throw std::invalid_argument("mse_masked: masked index out of range");
      }
    }
    count += rows.size();
  }
  Tensor out = make_output({1}, recon.requires_grad());
  if (count == 0) {
    return out;  // keep-all plan: reconstruction inactive, loss 0
  }
  double loss = 0.0;
  for (size_t b = 0; b < nb; ++b) {
    for (size_t i : masked[b]) {
      const double* rr = recon.data() + (b * n + i) * p;
      const double* tr = target.data() + (b * n + i) * p;
      double patch = 0.0;
      for (size_t j = 0; j < p; ++j) {
        double diff = rr[j] - tr[j];
        patch += diff * diff;
      }
      loss += patch / static_cast<double>(p);
    }
  }
  out.at(0) = loss / static_cast<double>(count);
  if (out.requires_grad()) {
    record([recon, target, out, masked, nb, n, p, count]() mutable {
      if (!out.has_grad()) return;
      double g = out.grad_vec()[0] * 2.0 /
                 (static_cast<double>(count) * static_cast<double>(p));
      double* gr = recon.grad();
      for (size_t b = 0; b < nb; ++b) {
        for (size_t i : masked[b]) {
          const double* rr = recon.data() + (b * n + i) * p;
          const double* tr = target.data() + (b * n + i) * p;
          double* dst = gr + (b * n + i) * p;
          for (size_t j = 0; j < p; ++j) {
            dst[j] += g * (rr[j] - tr[j]);
          }
        }
      }
    });
  }
  return out;
}

}  // namespace flap
