#pragma once

#include <functional>
#include <string>
#include <vector>

#include "invdec/autodiff.hpp"

namespace invdec {

/// Central-difference gradient of `f` with respect to every element of `p`.
/// `f` must be deterministic; `p.value` is restored afterwards.
Tensor finite_diff_grad(const std::function<double()>& f, Parameter& p, double h = 1e-5);

/// |a - b| / max(|a|, |b|, abs_floor / rel_tol): an element passes at
/// rel_tol when its relative error is below rel_tol or its absolute error is
/// below abs_floor.
double grad_rel_error(double analytic, double numeric, double abs_floor = 1e-8,
                      double rel_tol = 1e-4);

/// Largest grad_rel_error over all elements; shapes must match.
double max_grad_rel_error(const Tensor& analytic, const Tensor& numeric,
                          double abs_floor = 1e-8, double rel_tol = 1e-4);

}  // namespace invdec
