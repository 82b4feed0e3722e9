// Copyright 2026 una-toolkit authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Test-only helpers: central finite-difference gradient verification against
// the analytic backward pass. Kept independent of the library internals it
// checks (it only drives the public graph API).
#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "una/autodiff.hpp"
#include "una/common.hpp"

namespace una::testutil {

struct FdReport {
  int64_t checked = 0;
  int64_t failures = 0;
  double worst_rel = 0.0;
};

inline void reset_grads(const std::vector<ad::Value>& params) {
  for (const auto& p : params) {
    p->grad_alloc = false;
    p->grad = Tensor();
  }
}

// Compares analytic gradients with central differences on up to
// `samples_per_tensor` randomly chosen elements of each parameter tensor
// (all elements when the tensor is smaller). Relative error is measured
// against max(|fd|, |analytic|, floor).
inline FdReport fd_check_sampled(const std::vector<ad::Value>& params,
                                 const std::function<ad::Value()>& make_loss, Rng& rng,
                                 int64_t samples_per_tensor, double h = 1e-5,
                                 double rel_tol = 1e-3, double floor = 1e-6) {
  reset_grads(params);
  auto loss = make_loss();
  ad::backward(loss);

  FdReport report;
  for (const auto& p : params) {
    const int64_t n = p->val.numel();
    std::vector<int64_t> picks;
    if (n <= samples_per_tensor) {
      picks.resize(static_cast<size_t>(n));
      for (int64_t i = 0; i < n; ++i) picks[static_cast<size_t>(i)] = i;
    } else {
      for (int64_t s = 0; s < samples_per_tensor; ++s)
        picks.push_back(static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(n))));
    }
    for (int64_t i : picks) {
      const double saved = p->val[i];
      p->val[i] = saved + h;
      const double lp = ad::item(make_loss());
      p->val[i] = saved - h;
      const double lm = ad::item(make_loss());
      p->val[i] = saved;
      const double fd = (lp - lm) / (2.0 * h);
      const double an = p->grad_alloc ? p->grad[i] : 0.0;
      const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), floor});
      report.worst_rel = std::max(report.worst_rel, rel);
      ++report.checked;
      if (!(rel < rel_tol)) ++report.failures;
    }
  }
  return report;
}

}  // namespace una::testutil
