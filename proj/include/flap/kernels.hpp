#pragma once

#include <cstddef>
#include <cstdint>

// Dense fp64 kernels behind the tensor ops. Each kernel has a serial
// reference implementation and an OpenMP variant; both walk every output
// element with the same accumulation order, so results are bit-identical and
// the parallel path can be checked against the reference directly.
namespace flap::kernels {

enum class Backend { serial, parallel };

void set_backend(Backend b);
Backend backend();

// Multiply-accumulate counter. Each matmul-family call adds m*k*n; the flops
// module converts to FLOPs at 2 per MAC.
uint64_t mac_count();
void reset_mac_count();

// c[m,n] = a[m,k] * b[k,n], or += when accumulate is set.
void matmul(const double* a, const double* b, double* c, size_t m, size_t k,
            size_t n, bool accumulate = false);

// c[m,n] += a[k,m]^T * b[k,n]
void matmul_at_b(const double* a, const double* b, double* c, size_t m,
                 size_t k, size_t n);

// c[m,n] += a[m,k] * b[n,k]^T
void matmul_a_bt(const double* a, const double* b, double* c, size_t m,
                 size_t k, size_t n);

// Row-wise softmax with max subtraction; in/out may alias.
void softmax_rows(const double* in, double* out, size_t rows, size_t cols);

// Exact GELU, x * Phi(x).
void gelu(const double* in, double* out, size_t n);

namespace serial {
void matmul(const double* a, const double* b, double* c, size_t m, size_t k,
            size_t n, bool accumulate);
void matmul_at_b(const double* a, const double* b, double* c, size_t m,
                 size_t k, size_t n);
void matmul_a_bt(const double* a, const double* b, double* c, size_t m,
                 size_t k, size_t n);
void softmax_rows(const double* in, double* out, size_t rows, size_t cols);
void gelu(const double* in, double* out, size_t n);
}  // namespace serial

namespace parallel {
void matmul(const double* a, const double* b, double* c, size_t m, size_t k,
            size_t n, bool accumulate);
void matmul_at_b(const double* a, const double* b, double* c, size_t m,
                 size_t k, size_t n);
void matmul_a_bt(const double* a, const double* b, double* c, size_t m,
                 size_t k, size_t n);
void softmax_rows(const double* in, double* out, size_t rows, size_t cols);
void gelu(const double* in, double* out, size_t n);
}  // namespace parallel

}  // namespace flap::kernels
