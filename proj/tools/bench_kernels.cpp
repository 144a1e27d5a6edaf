// Copyright (c) 2026, the qor-predict authors
// SPDX-License-Identifier: Apache-2.0
//
// Times the serial reference kernels against their OpenMP variants and
// verifies the outputs are bit-identical.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <vector>

#include "qor/kernels.hpp"
#include "qor/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<double> random_vec(size_t n, qor::Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

template <typename F>
double time_best_of(int reps, F&& f) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = Clock::now();
    f();
    best = std::min(best, seconds_since(t0));
  }
  return best;
}

void report(const char* name, double serial_s, double parallel_s, bool equal) {
  std::printf("%-24s serial %8.4fs   openmp %8.4fs   speedup %5.2fx   %s\n",
              name, serial_s, parallel_s, serial_s / parallel_s,
              equal ? "bit-identical" : "MISMATCH");
}

}  // namespace

int main() {
  using namespace qor::kernels;
  qor::Rng rng(99);

#ifdef _OPENMP
  std::printf("OpenMP enabled, max threads = %d\n\n", omp_get_max_threads());
#else
  std::printf("built without OpenMP: parallel variants run serially\n\n");
#endif

  {
    const int64_t m = 384, k = 384, n = 384;
    auto a = random_vec(static_cast<size_t>(m * k), rng);
    auto b = random_vec(static_cast<size_t>(k * n), rng);
    std::vector<double> c1(static_cast<size_t>(m * n)), c2(c1.size());
    const double ts = time_best_of(3, [&]() {
      gemm_serial(a.data(), b.data(), c1.data(), m, k, n, false, false, false);
    });
    const double tp = time_best_of(3, [&]() {
      gemm_parallel(a.data(), b.data(), c2.data(), m, k, n, false, false, false);
    });
    report("gemm 384^3", ts, tp, bit_equal(c1, c2));
  }
  {
    const int64_t m = 256, k = 512, n = 256;
    auto a = random_vec(static_cast<size_t>(m * k), rng);
    auto b = random_vec(static_cast<size_t>(n * k), rng);
    std::vector<double> c1(static_cast<size_t>(m * n)), c2(c1.size());
    const double ts = time_best_of(3, [&]() {
      gemm_serial(a.data(), b.data(), c1.data(), m, k, n, false, true, false);
    });
    const double tp = time_best_of(3, [&]() {
      gemm_parallel(a.data(), b.data(), c2.data(), m, k, n, false, true, false);
    });
    report("gemm_nt 256x512x256", ts, tp, bit_equal(c1, c2));
  }
  {
    const int64_t rows = 20000, len = 60, ksize = 21, stride = 3;
    const int64_t n_win = (len - ksize) / stride + 1;
    auto x = random_vec(static_cast<size_t>(rows * len), rng);
    auto k = random_vec(static_cast<size_t>(ksize), rng);
    std::vector<double> y1(static_cast<size_t>(rows * n_win)), y2(y1.size());
    const double ts = time_best_of(5, [&]() {
      conv1d_serial(x.data(), k.data(), 0.1, y1.data(), rows, len, ksize, stride, n_win);
    });
    const double tp = time_best_of(5, [&]() {
      conv1d_parallel(x.data(), k.data(), 0.1, y2.data(), rows, len, ksize, stride, n_win);
    });
    report("conv1d 20000x60 k21", ts, tp, bit_equal(y1, y2));
  }
  {
    const int64_t rows = 20000, cols = 128;
    auto x = random_vec(static_cast<size_t>(rows * cols), rng);
    std::vector<double> y1(x.size()), y2(x.size());
    const double ts = time_best_of(5, [&]() {
      softmax_rows_serial(x.data(), y1.data(), rows, cols);
    });
    const double tp = time_best_of(5, [&]() {
      softmax_rows_parallel(x.data(), y2.data(), rows, cols);
    });
    report("softmax 20000x128", ts, tp, bit_equal(y1, y2));
  }
  return 0;
}
