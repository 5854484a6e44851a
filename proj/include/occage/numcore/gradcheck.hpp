#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "occage/core/rng.hpp"
#include "occage/numcore/tensor.hpp"

namespace occage::nc {

struct GradcheckOptions {
  double step = 1e-5;
  double rel_tol = 1e-4;
  // Entries whose analytic and numeric values differ by less than this
  // pass regardless of relative error.
  double abs_tol = 1e-6;
  // 0 checks every element; otherwise a seeded sample of this many per input.
  std::size_t max_per_input = 0;
  std::uint64_t sample_seed = 1;
};

struct GradcheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
  std::size_t failures = 0;
  bool passed() const { return failures == 0; }
};

// Compares reverse-mode gradients of the scalar f() with respect to each
// input against central differences. f must be deterministic.
inline GradcheckReport gradcheck(const std::function<Tensor()>& f, const std::vector<Tensor>& inputs,
                                 const GradcheckOptions& opt = {}) {
  for (const auto& x : inputs) x.zero_grad();
  f().backward();
  std::vector<std::vector<double>> analytic;
  for (const auto& x : inputs) analytic.emplace_back(x.grad().begin(), x.grad().end());

  GradcheckReport rep;
  Rng rng(opt.sample_seed);
  NoGradGuard guard;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto w = inputs[k].mutable_data();
    std::vector<std::size_t> idx(w.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (opt.max_per_input && idx.size() > opt.max_per_input) {
      rng.shuffle(idx);
      idx.resize(opt.max_per_input);
    }
    for (auto i : idx) {
      const double orig = w[i];
      w[i] = orig + opt.step;
      const double fp = f().item();
      w[i] = orig - opt.step;
      const double fm = f().item();
      w[i] = orig;
      const double num = (fp - fm) / (2.0 * opt.step);
      const double a = analytic[k][i];
      const double abs_err = std::abs(a - num);
      rep.max_abs_error = std::max(rep.max_abs_error, abs_err);
      ++rep.checked;
      if (abs_err <= opt.abs_tol) continue;
      const double rel = abs_err / std::max(std::abs(a), std::abs(num));
      rep.max_rel_error = std::max(rep.max_rel_error, rel);
      if (rel > opt.rel_tol) ++rep.failures;
    }
  }
  return rep;
}

}  // namespace occage::nc
