#pragma once

#include "invdec/rng.hpp"
#include "invdec/tensor.hpp"

namespace invdec::ops {

inline constexpr double kLayerNormEps = 1e-5;

/// [m×k]·[k×n] → [m×n].
Tensor matmul(const Tensor& a, const Tensor& b);

/// Softmax over the last axis with row-max subtraction.
Tensor softmax_rows(const Tensor& a);

/// Normalizes over the last axis (population variance), then gain⊙x+bias.
Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias,
                  double eps = kLayerNormEps);

/// Inverted dropout. Identity when `training` is false or `rate` is 0.
Tensor dropout(const Tensor& a, double rate, bool training, RngStreams::Engine& rng);

/// Exact (erf-based) GELU.
Tensor gelu(const Tensor& a);

}  // namespace invdec::ops
