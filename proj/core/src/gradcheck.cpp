#include "invdec/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "invdec/error.hpp"

namespace invdec {

Tensor finite_diff_grad(const std::function<double()>& f, Parameter& p, double h) {
  if (!(h > 0.0)) throw ConfigError("finite_diff_grad: step must be positive");
  Tensor out(p.value.shape());
  for (std::size_t i = 0; i < p.value.numel(); ++i) {
    const double orig = p.value[i];
    p.value[i] = orig + h;
    const double plus = f();
    p.value[i] = orig - h;
    const double minus = f();
    p.value[i] = orig;
    out[i] = (plus - minus) / (2.0 * h);
  }
  return out;
}

double grad_rel_error(double analytic, double numeric, double abs_floor, double rel_tol) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), abs_floor / rel_tol});
  return std::abs(analytic - numeric) / denom;
}

double max_grad_rel_error(const Tensor& analytic, const Tensor& numeric, double abs_floor,
                          double rel_tol) {
  if (analytic.shape() != numeric.shape()) {
    throw DimensionError("gradient shapes differ: " + shape_str(analytic.shape()) + " vs " +
                         shape_str(numeric.shape()));
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.numel(); ++i) {
    worst = std::max(worst, grad_rel_error(analytic[i], numeric[i], abs_floor, rel_tol));
  }
  return worst;
}

}  // namespace invdec
