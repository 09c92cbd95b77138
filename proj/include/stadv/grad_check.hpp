#pragma once

#include "stadv/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

namespace stadv::ad {

struct GradCheckOptions {
  double step = 1e-5;
  // A coordinate whose one-sided difference quotients disagree by more than
  // this (relative to max(1, |analytic|)) sits within `step` of a kink and is
  // skipped. Any kink left unflagged contributes at most half this to the error.
  double kink_threshold = 1e-4;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  Index checked = 0;
  Index excluded = 0;
};

// fn returns the scalar value at a point; grad is the analytic gradient there.
template <typename Scalar>
GradCheckResult grad_check(const std::function<Scalar(const Tensor<Scalar>&)>& fn,
                           const Tensor<Scalar>& point, const Tensor<Scalar>& grad,
                           GradCheckOptions opts = {}) {
  if (!(opts.step > 0)) throw std::invalid_argument("grad_check: step must be positive");
  if (grad.size() != point.size()) throw std::invalid_argument("grad_check: gradient size mismatch");
  auto eval = [&](const Tensor<Scalar>& x) {
    const Scalar v = fn(x);
    if (!std::isfinite(static_cast<double>(v))) {
      throw std::domain_error("grad_check: non-finite function value");
    }
    return static_cast<double>(v);
  };
  GradCheckResult r;
  const double f0 = eval(point);
  Tensor<Scalar> x = point;
  for (Index i = 0; i < point.size(); ++i) {
    const Scalar orig = x[i];
    x[i] = orig + opts.step;
    const double fp = eval(x);
    x[i] = orig - opts.step;
    const double fm = eval(x);
    x[i] = orig;
    const double analytic = static_cast<double>(grad[i]);
    const double scale = std::max(1.0, std::abs(analytic));
    const double forward = (fp - f0) / opts.step;
    const double backward = (f0 - fm) / opts.step;
    if (std::abs(forward - backward) > opts.kink_threshold * scale) {
      ++r.excluded;
      continue;
    }
    const double central = (fp - fm) / (2.0 * opts.step);
    r.max_relative_error = std::max(r.max_relative_error, std::abs(analytic - central) / scale);
    ++r.checked;
  }
  return r;
}

// Variant for callables that return (value, gradient) together.
template <typename Scalar>
GradCheckResult grad_check(
    const std::function<std::pair<Scalar, Tensor<Scalar>>(const Tensor<Scalar>&)>& fn_with_grad,
    const Tensor<Scalar>& point, GradCheckOptions opts = {}) {
  const auto [value, grad] = fn_with_grad(point);
  (void)value;
  return grad_check<Scalar>(
      [&](const Tensor<Scalar>& x) { return fn_with_grad(x).first; }, point, grad, opts);
}

}  // namespace stadv::ad
