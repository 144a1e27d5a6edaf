// Copyright (c) 2026, the qor-predict authors
// SPDX-License-Identifier: Apache-2.0
//
// Data-parallel inner loops. Every kernel has a serial reference and an
// OpenMP variant; the unsuffixed entry point dispatches on the global
// parallel switch. Both variants accumulate each output element in the same
// order, so results are bit-identical regardless of the switch or the
// thread count. tools/bench_kernels compares the two.
#pragma once

#include <cstdint>

namespace qor::kernels {

bool parallel_enabled();
void set_parallel_enabled(bool on);

// Work below this many elements is not worth a parallel region.
inline constexpr int64_t kParallelGrain = 2048;

// c[m x n] = op_a(a) * op_b(b), where op transposes when the flag is set.
// a is m x k (or k x m when trans_a), b is k x n (or n x k when trans_b).
// When accumulate is set, adds into c instead of overwriting.
void gemm(const double* a, const double* b, double* c, int64_t m, int64_t k,
          int64_t n, bool trans_a, bool trans_b, bool accumulate);
void gemm_serial(const double* a, const double* b, double* c, int64_t m,
                 int64_t k, int64_t n, bool trans_a, bool trans_b,
                 bool accumulate);
void gemm_parallel(const double* a, const double* b, double* c, int64_t m,
                   int64_t k, int64_t n, bool trans_a, bool trans_b,
                   bool accumulate);

// One-filter 1-D convolution over each row of x[rows x len]:
// out[r][w] = sum_j x[r][w*stride + j] * w[j] + bias, w in [0, n_win).
void conv1d(const double* x, const double* kernel, double bias, double* out,
            int64_t rows, int64_t len, int64_t ksize, int64_t stride,
            int64_t n_win);
void conv1d_serial(const double* x, const double* kernel, double bias,
                   double* out, int64_t rows, int64_t len, int64_t ksize,
                   int64_t stride, int64_t n_win);
void conv1d_parallel(const double* x, const double* kernel, double bias,
                     double* out, int64_t rows, int64_t len, int64_t ksize,
                     int64_t stride, int64_t n_win);

// Row-stable softmax over `cols`-wide rows of x into y (max subtraction).
void softmax_rows(const double* x, double* y, int64_t rows, int64_t cols);
void softmax_rows_serial(const double* x, double* y, int64_t rows,
                         int64_t cols);
void softmax_rows_parallel(const double* x, double* y, int64_t rows,
                           int64_t cols);

// Elementwise parallel loop; the body must only touch index i.
template <typename F>
void parallel_for(int64_t n, F&& f) {
  if (parallel_enabled() && n >= kParallelGrain) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) f(i);
  } else {
    for (int64_t i = 0; i < n; ++i) f(i);
  }
}

}  // namespace qor::kernels
