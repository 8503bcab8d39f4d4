#include "invdec/tensor_ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "invdec/error.hpp"

namespace invdec::ops {

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out({m, n});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = po + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double s = pa[i * k + p];
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += s * brow[j];
    }
  }
  return out;
}

Tensor softmax_rows(const Tensor& a) {
  Tensor out = a;
  const std::size_t n = a.shape().back();
  const std::size_t rows = a.numel() / n;
  double* p = out.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = p + r * n;
    const double mx = *std::max_element(row, row + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      row[j] = std::exp(row[j] - mx);
      total += row[j];
    }
    const double inv = 1.0 / total;
    for (std::size_t j = 0; j < n; ++j) row[j] *= inv;
  }
  return out;
}

Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t d = a.shape().back();
  if (gain.numel() != d || bias.numel() != d) {
    throw DimensionError("layer_norm: last axis of " + shape_str(a.shape()) +
                         " does not match gain " + shape_str(gain.shape()) + " / bias " +
                         shape_str(bias.shape()));
  }
  Tensor out(a.shape());
  const std::size_t rows = a.numel() / d;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = a.data().data() + r * d;
    double* y = out.data().data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += x[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (x[j] - mu) * (x[j] - mu);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) y[j] = gain[j] * ((x[j] - mu) * inv) + bias[j];
  }
  return out;
}

Tensor dropout(const Tensor& a, double rate, bool training, RngStreams::Engine& rng) {
  if (!(rate >= 0.0) || rate >= 1.0) {
    throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) return a;
  Tensor out = a;
  std::bernoulli_distribution keep(1.0 - rate);
  const double scale = 1.0 / (1.0 - rate);
  for (double& v : out.data()) v = keep(rng) ? v * scale : 0.0;
  return out;
}

Tensor gelu(const Tensor& a) {
  Tensor out = a;
  for (double& v : out.data()) v = 0.5 * v * (1.0 + std::erf(v * M_SQRT1_2));
  return out;
}

}  // namespace invdec::ops
