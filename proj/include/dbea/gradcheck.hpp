#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "dbea/errors.hpp"
#include "dbea/tensor.hpp"

namespace dbea {

// Scalar loss over a flat parameter vector. When `grad` is non-null the closure also writes the
// analytic gradient into it.
template <typename Scalar>
using FlatLossFn = std::function<Scalar(const Vector<Scalar>& x, Vector<Scalar>* grad)>;

// Max over coordinates of |analytic - central| / max(1, |central|), central differences with
// step h. Not meaningful at nonsmooth points (e.g. |w| at w = 0); callers sample away from them.
template <typename Scalar>
Scalar finite_diff_check(const FlatLossFn<Scalar>& loss_fn, const Vector<Scalar>& params, Scalar h = Scalar(1e-6)) {
  if (!(h > Scalar(0))) throw ConfigError("finite_diff_check: step must be > 0");
  Vector<Scalar> analytic = Vector<Scalar>::Zero(params.size());
  const Scalar f0 = loss_fn(params, &analytic);
  if (!std::isfinite(static_cast<double>(f0))) throw DivergenceError("finite_diff_check: loss is not finite");
  if (analytic.size() != params.size()) throw ShapeError("finite_diff_check: gradient length");

  Vector<Scalar> x = params;
  Scalar worst = Scalar(0);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const Scalar orig = x[i];
    x[i] = orig + h;
    const Scalar fp = loss_fn(x, nullptr);
    x[i] = orig - h;
    const Scalar fm = loss_fn(x, nullptr);
    x[i] = orig;
    if (!std::isfinite(static_cast<double>(fp)) || !std::isfinite(static_cast<double>(fm))) {
      throw DivergenceError("finite_diff_check: loss is not finite at a perturbed point");
    }
    const Scalar central = (fp - fm) / (Scalar(2) * h);
    const Scalar err = std::abs(analytic[i] - central) / std::max(Scalar(1), std::abs(central));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace dbea
