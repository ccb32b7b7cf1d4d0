#pragma once

#include <functional>

#include "exact/tape.hpp"

namespace exact {

// Central finite-difference check of a scalar-valued function of one tensor.
// Returns max over coordinates of |analytic - central| / max(1, |central|).
template <typename T>
double grad_check(const std::function<Var<T>(Tape<T>&, Var<T>)>& fn, const Tensor<T>& point,
                  double eps) {
  Tensor<T> x = point.clone();
  x.set_requires_grad(true);
  x.zero_grad();

  Tape<T> tape;
  Var<T> y = fn(tape, tape.leaf(x));
  if (y.value().size() != 1) fail(ErrCode::shape_mismatch, "grad_check: fn must be scalar-valued");
  if (!std::isfinite(static_cast<double>(y.value().item())))
    fail(ErrCode::numeric, "grad_check: non-finite function value at the given point");
  tape.backward(y);
  std::vector<double> analytic(x.grad().begin(), x.grad().end());

  auto eval = [&](const Tensor<T>& at) -> double {
    Tape<T> t;
    Var<T> out = fn(t, t.constant(at));
    double v = static_cast<double>(out.value().item());
    if (!std::isfinite(v)) fail(ErrCode::numeric, "grad_check: non-finite value in eps-neighborhood");
    return v;
  };

  Tensor<T> probe = point.clone();
  auto pd = probe.mutable_data();
  double max_err = 0.0;
  for (std::int64_t i = 0; i < probe.size(); ++i) {
    const T saved = pd[i];
    pd[i] = saved + static_cast<T>(eps);
    const double fp = eval(probe);
    pd[i] = saved - static_cast<T>(eps);
    const double fm = eval(probe);
    pd[i] = saved;
    const double central = (fp - fm) / (2.0 * eps);
    const double err = std::abs(analytic[static_cast<std::size_t>(i)] - central) /
                       std::max(1.0, std::abs(central));
    max_err = std::max(max_err, err);
  }
  return max_err;
}

}  // namespace exact
