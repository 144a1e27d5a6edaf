// Copyright (c) 2026, the qor-predict authors
// SPDX-License-Identifier: Apache-2.0

#include "qor/kernels.hpp"

#include <atomic>
#include <cmath>

namespace qor::kernels {

namespace {
std::atomic<bool> g_parallel{true};

// Inner body shared by the serial and parallel gemm variants: computes one
// output row i with a fixed accumulation order over k.
inline void gemm_row(const double* a, const double* b, double* c, int64_t i,
                     int64_t m, int64_t k, int64_t n, bool trans_a,
                     bool trans_b, bool accumulate) {
  double* crow = c + i * n;
  if (!accumulate) {
    for (int64_t j = 0; j < n; ++j) crow[j] = 0.0;
  }
  if (!trans_b) {
    // c[i][j] += a(i,l) * b[l][j], accumulated over l in row-sweeps.
    for (int64_t l = 0; l < k; ++l) {
      const double av = trans_a ? a[l * m + i] : a[i * k + l];
      const double* brow = b + l * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  } else {
    // b is n x k; dot products along contiguous rows of b.
    for (int64_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      if (!trans_a) {
        const double* arow = a + i * k;
        for (int64_t l = 0; l < k; ++l) acc += arow[l] * brow[l];
      } else {
        for (int64_t l = 0; l < k; ++l) acc += a[l * m + i] * brow[l];
      }
      crow[j] += acc;
    }
  }
}

inline void conv1d_row(const double* x, const double* kernel, double bias,
                       double* out, int64_t r, int64_t len, int64_t ksize,
                       int64_t stride, int64_t n_win) {
  const double* xrow = x + r * len;
  double* orow = out + r * n_win;
  for (int64_t w = 0; w < n_win; ++w) {
    double acc = bias;
    const double* win = xrow + w * stride;
    for (int64_t j = 0; j < ksize; ++j) acc += win[j] * kernel[j];
    orow[w] = acc;
  }
}

inline void softmax_row(const double* x, double* y, int64_t r, int64_t cols) {
  const double* xr = x + r * cols;
  double* yr = y + r * cols;
  double mx = xr[0];
  for (int64_t j = 1; j < cols; ++j) mx = xr[j] > mx ? xr[j] : mx;
  double sum = 0.0;
  for (int64_t j = 0; j < cols; ++j) {
    yr[j] = std::exp(xr[j] - mx);
    sum += yr[j];
  }
  const double inv = 1.0 / sum;
  for (int64_t j = 0; j < cols; ++j) yr[j] *= inv;
}
}  // namespace

bool parallel_enabled() { return g_parallel.load(std::memory_order_relaxed); }
void set_parallel_enabled(bool on) {
  g_parallel.store(on, std::memory_order_relaxed);
}

void gemm_serial(const double* a, const double* b, double* c, int64_t m,
                 int64_t k, int64_t n, bool trans_a, bool trans_b,
                 bool accumulate) {
  for (int64_t i = 0; i < m; ++i)
    gemm_row(a, b, c, i, m, k, n, trans_a, trans_b, accumulate);
}

void gemm_parallel(const double* a, const double* b, double* c, int64_t m,
                   int64_t k, int64_t n, bool trans_a, bool trans_b,
                   bool accumulate) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i)
    gemm_row(a, b, c, i, m, k, n, trans_a, trans_b, accumulate);
}

void gemm(const double* a, const double* b, double* c, int64_t m, int64_t k,
          int64_t n, bool trans_a, bool trans_b, bool accumulate) {
  if (parallel_enabled() && m * n >= kParallelGrain)
    gemm_parallel(a, b, c, m, k, n, trans_a, trans_b, accumulate);
  else
    gemm_serial(a, b, c, m, k, n, trans_a, trans_b, accumulate);
}

void conv1d_serial(const double* x, const double* kernel, double bias,
                   double* out, int64_t rows, int64_t len, int64_t ksize,
                   int64_t stride, int64_t n_win) {
  for (int64_t r = 0; r < rows; ++r)
    conv1d_row(x, kernel, bias, out, r, len, ksize, stride, n_win);
}

void conv1d_parallel(const double* x, const double* kernel, double bias,
                     double* out, int64_t rows, int64_t len, int64_t ksize,
                     int64_t stride, int64_t n_win) {
#pragma omp parallel for schedule(static)
  for (int64_t r = 0; r < rows; ++r)
    conv1d_row(x, kernel, bias, out, r, len, ksize, stride, n_win);
}

void conv1d(const double* x, const double* kernel, double bias, double* out,
            int64_t rows, int64_t len, int64_t ksize, int64_t stride,
            int64_t n_win) {
  if (parallel_enabled() && rows * n_win >= kParallelGrain)
    conv1d_parallel(x, kernel, bias, out, rows, len, ksize, stride, n_win);
  else
    conv1d_serial(x, kernel, bias, out, rows, len, ksize, stride, n_win);
}

void softmax_rows_serial(const double* x, double* y, int64_t rows,
                         int64_t cols) {
  for (int64_t r = 0; r < rows; ++r) softmax_row(x, y, r, cols);
}

void softmax_rows_parallel(const double* x, double* y, int64_t rows,
                           int64_t cols) {
#pragma omp parallel for schedule(static)
  for (int64_t r = 0; r < rows; ++r) softmax_row(x, y, r, cols);
}

void softmax_rows(const double* x, double* y, int64_t rows, int64_t cols) {
  if (parallel_enabled() && rows * cols >= kParallelGrain)
    softmax_rows_parallel(x, y, rows, cols);
  else
    softmax_rows_serial(x, y, rows, cols);
}

}  // namespace qor::kernels
