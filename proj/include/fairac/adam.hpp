#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "fairac/autodiff.hpp"
#include "fairac/error.hpp"

namespace fairac {

struct AdamOptions {
  double learning_rate = 1e-3;
  double weight_decay = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam over a fixed group of parameters. Weight decay is decoupled: the
// parameter is shrunk by lr * wd before the adaptive step.
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Parameter*> params, AdamOptions opts = {})
      : params_(std::move(params)), opts_(opts) {
    first_.reserve(params_.size());
    second_.reserve(params_.size());
    for (const auto* p : params_) {
      first_.emplace_back(p->value.rows(), p->value.cols());
      second_.emplace_back(p->value.rows(), p->value.cols());
    }
  }

  void step() {
    ++step_;
    const double t = static_cast<double>(step_);
    const double bc1 = 1.0 - std::pow(opts_.beta1, t);
    const double bc2 = 1.0 - std::pow(opts_.beta2, t);
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Parameter& p = *params_[k];
      if (p.value.shape() != first_[k].shape() || p.grad.shape() != p.value.shape()) {
        throw ShapeError("adam state does not match parameter " + p.name);
      }
      auto w = p.value.data();
      auto g = p.grad.data();
      auto m = first_[k].data();
      auto v = second_[k].data();
      for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] -= opts_.learning_rate * opts_.weight_decay * w[i];
        m[i] = opts_.beta1 * m[i] + (1.0 - opts_.beta1) * g[i];
        v[i] = opts_.beta2 * v[i] + (1.0 - opts_.beta2) * g[i] * g[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        w[i] -= opts_.learning_rate * mhat / (std::sqrt(vhat) + opts_.epsilon);
      }
      p.zero_grad();
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  std::uint64_t steps() const noexcept { return step_; }
  const AdamOptions& options() const noexcept { return opts_; }
  const std::vector<Parameter*>& parameters() const noexcept { return params_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<Matrix> first_;
  std::vector<Matrix> second_;
  AdamOptions opts_;
  std::uint64_t step_ = 0;
};

}  // namespace fairac
