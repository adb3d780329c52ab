#include "flap/kernels.hpp"

#include <atomic>
#include <cmath>

namespace flap::kernels {

namespace {
Backend g_backend = Backend::parallel;
std::atomic<uint64_t> g_macs{0};

inline void count_macs(size_t m, size_t k, size_t n) {
  g_macs.fetch_add(static_cast<uint64_t>(m) * k * n, std::memory_order_relaxed);
}

inline void softmax_row(const double* in, double* out, size_t cols) {
  double mx = in[0];
  for (size_t j = 1; j < cols; ++j) {
    mx = in[j] > mx ? in[j] : mx;
  }
  double sum = 0.0;
  for (size_t j = 0; j < cols; ++j) {
    out[j] = std::exp(in[j] - mx);
    sum += out[j];
  }
  double inv = 1.0 / sum;
  for (size_t j = 0; j < cols; ++j) {
    out[j] *= inv;
  }
}

inline double gelu_one(double x) {
  return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2));
}
}  // namespace

void set_backend(Backend b) { g_backend = b; }
Backend backend() { return g_backend; }

uint64_t mac_count() { return g_macs.load(std::memory_order_relaxed); }
void reset_mac_count() { g_macs.store(0, std::memory_order_relaxed); }

namespace serial {

void matmul(const double* a, const double* b, double* c, size_t m, size_t k,
            size_t n, bool accumulate) {
  for (size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    if (!accumulate) {
      for (size_t j = 0; j < n; ++j) {
        ci[j] = 0.0;
      }
    }
    const double* ai = a + i * k;
    for (size_t p = 0; p < k; ++p) {
      double av = ai[p];
      const double* bp = b + p * n;
      for (size_t j = 0; j < n; ++j) {
        ci[j] += av * bp[j];
      }
    }
  }
}

void matmul_at_b(const double* a, const double* b, double* c, size_t m,
                 size_t k, size_t n) {
  for (size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    for (size_t p = 0; p < k; ++p) {
      double av = a[p * m + i];
      const double* bp = b + p * n;
      for (size_t j = 0; j < n; ++j) {
        ci[j] += av * bp[j];
      }
    }
  }
}

void matmul_a_bt(const double* a, const double* b, double* c, size_t m,
                 size_t k, size_t n) {
  for (size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (size_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double sum = 0.0;
      for (size_t p = 0; p < k; ++p) {
        sum += ai[p] * bj[p];
      }
      ci[j] += sum;
    }
  }
}

void softmax_rows(const double* in, double* out, size_t rows, size_t cols) {
  for (size_t r = 0; r < rows; ++r) {
    softmax_row(in + r * cols, out + r * cols, cols);
  }
}

void gelu(const double* in, double* out, size_t n) {
  for (size_t i = 0; i < n; ++i) {
    out[i] = gelu_one(in[i]);
  }
}

}  // namespace serial

namespace parallel {

// Work is split over output rows; each element keeps the serial accumulation
// order, so the result is bit-identical to the reference for any thread count.

void matmul(const double* a, const double* b, double* c, size_t m, size_t k,
            size_t n, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    if (!accumulate) {
      for (size_t j = 0; j < n; ++j) {
        ci[j] = 0.0;
      }
    }
    const double* ai = a + i * k;
    for (size_t p = 0; p < k; ++p) {
      double av = ai[p];
      const double* bp = b + p * n;
      for (size_t j = 0; j < n; ++j) {
        ci[j] += av * bp[j];
      }
    }
  }
}

void matmul_at_b(const double* a, const double* b, double* c, size_t m,
                 size_t k, size_t n) {
#pragma omp parallel for schedule(static)
  for (size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    for (size_t p = 0; p < k; ++p) {
      double av = a[p * m + i];
      const double* bp = b + p * n;
      for (size_t j = 0; j < n; ++j) {
        ci[j] += av * bp[j];
      }
    }
  }
}

void matmul_a_bt(const double* a, const double* b, double* c, size_t m,
                 size_t k, size_t n) {
#pragma omp parallel for schedule(static)
  for (size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (size_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double sum = 0.0;
      for (size_t p = 0; p < k; ++p) {
        sum += ai[p] * bj[p];
      }
      ci[j] += sum;
    }
  }
}

void softmax_rows(const double* in, double* out, size_t rows, size_t cols) {
#pragma omp parallel for schedule(static)
  for (size_t r = 0; r < rows; ++r) {
    softmax_row(in + r * cols, out + r * cols, cols);
  }
}

void gelu(const double* in, double* out, size_t n) {
#pragma omp parallel for schedule(static)
  for (size_t i = 0; i < n; ++i) {
    out[i] = gelu_one(in[i]);
  }
}

}  // namespace parallel

void matmul(const double* a, const double* b, double* c, size_t m, size_t k,
            size_t n, bool accumulate) {
  count_macs(m, k, n);
  if (g_backend == Backend::parallel) {
    parallel::matmul(a, b, c, m, k, n, accumulate);
  } else {
    serial::matmul(a, b, c, m, k, n, accumulate);
  }
}

void matmul_at_b(const double* a, const double* b, double* c, size_t m,
                 size_t k, size_t n) {
  count_macs(m, k, n);
  if (g_backend == Backend::parallel) {
    parallel::matmul_at_b(a, b, c, m, k, n);
  } else {
    serial::matmul_at_b(a, b, c, m, k, n);
  }
}

void matmul_a_bt(const double* a, const double* b, double* c, size_t m,
                 size_t k, size_t n) {
  count_macs(m, k, n);
  if (g_backend == Backend::parallel) {
    parallel::matmul_a_bt(a, b, c, m, k, n);
  } else {
    serial::matmul_a_bt(a, b, c, m, k, n);
  }
}

void softmax_rows(const double* in, double* out, size_t rows, size_t cols) {
  if (g_backend == Backend::parallel) {
    parallel::softmax_rows(in, out, rows, cols);
  } else {
    serial::softmax_rows(in, out, rows, cols);
  }
}

void gelu(const double* in, double* out, size_t n) {
  if (g_backend == Backend::parallel) {
    parallel::gelu(in, out, n);
  } else {
    serial::gelu(in, out, n);
  }
}

}  // namespace flap::kernels
