// Copyright (c) 2026, the qor-predict authors
// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference gradient checks for every differentiable
// operation and for the full extractor and joint-model paths. Shared by the
// CLI gradcheck command and the test suites.
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "qor/tensor.hpp"

namespace qor {

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  bool pass = false;
};

struct GradCheckReport {
  double tolerance = 1e-4;
  std::vector<GradCheckEntry> entries;

  bool all_pass() const;
  double worst() const;
};

// Central differences with step h on every leaf (coordinates sampled down to
// max_coords per leaf for large tensors); relative error is
// |analytic - numeric| / max(1, |analytic|, |numeric|).
double gradcheck_case(std::span<Tensor> leaves,
                      const std::function<Tensor()>& forward, Rng& coord_rng,
                      int64_t max_coords = 64, double h = 1e-5);

// The full suite. Deterministic for a fixed seed.
GradCheckReport run_gradient_checks(uint64_t seed = 20240811,
                                    double tolerance = 1e-4);

std::string format_report(const GradCheckReport& report);

}  // namespace qor
