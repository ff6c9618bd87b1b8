#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "fairac/autodiff.hpp"

namespace fairac {

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;

  bool passed() const {
    return std::all_of(entries.begin(), entries.end(),
                       [](const GradCheckEntry& e) { return e.passed; });
  }
  double max_rel_error() const {
    double m = 0.0;
    for (const auto& e : entries) m = std::max(m, e.max_rel_error);
    return m;
  }
};

struct GradCheckOptions {
  double rtol = 1e-4;
  double eps = 1e-5;
  // Magnitudes below this floor are compared absolutely; central differences
  // cannot resolve gradients much smaller than eps^2.
  double denom_floor = 1e-6;
};

// Compares analytic gradients of `loss` against central differences for
// every element of every parameter. `loss` must build a fresh scalar on the
// supplied tape each call and must bind the parameters with Tape::param.
inline GradCheckReport grad_check(const std::function<Var(Tape&)>& loss,
                                  const std::vector<Parameter*>& params,
                                  GradCheckOptions opts = {}) {
  for (auto* p : params) p->zero_grad();
  {
    Tape t;
    t.backward(loss(t));
  }
  const auto eval = [&] {
    Tape t;
    return t.scalar(loss(t));
  };
  GradCheckReport report;
  for (auto* p : params) {
    GradCheckEntry entry{p->name};
    auto w = p->value.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double saved = w[i];
      w[i] = saved + opts.eps;
      const double up = eval();
      w[i] = saved - opts.eps;
      const double down = eval();
      w[i] = saved;
      const double numeric = (up - down) / (2.0 * opts.eps);
      const double analytic = p->grad[i];
      const double abs_err = std::abs(analytic - numeric);
      const double denom =
          std::max({std::abs(analytic), std::abs(numeric), opts.denom_floor});
      entry.max_abs_error = std::max(entry.max_abs_error, abs_err);
      entry.max_rel_error = std::max(entry.max_rel_error, abs_err / denom);
    }
    entry.passed = entry.max_rel_error <= opts.rtol;
    p->zero_grad();
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace fairac
