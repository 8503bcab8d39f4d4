#pragma once

#include <cstddef>

#include "invdec/autodiff.hpp"
#include "invdec/rng.hpp"
#include "invdec/tensor_ops.hpp"

// Differentiable operations recorded on a Tape. Every binary op requires
// both operands to live on the same tape.
namespace invdec::ad {

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
/// Element-wise product of equal shapes.
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
/// a * s where s holds a single element.
Var mul_scalar(const Var& a, const Var& s);

Var sum(const Var& a);
Var mean(const Var& a);
/// mean((a - b)^2) over all elements.
Var mse(const Var& a, const Var& b);

/// a + b where b's shape equals the trailing dims of a (bias, table, ...).
Var add_trailing(const Var& a, const Var& b);

/// [m×k]·[k×n].
Var matmul(const Var& a, const Var& b);
/// x[..., k]·W[k×n] → [..., n].
Var linear(const Var& x, const Var& w);
/// x[..., k]·W[n×k]ᵀ → [..., n].
Var linear_t(const Var& x, const Var& w);

Var softmax_rows(const Var& a);
Var layer_norm(const Var& a, const Var& gain, const Var& bias,
               double eps = ops::kLayerNormEps);
Var gelu(const Var& a);
Var sigmoid(const Var& a);
Var dropout(const Var& a, double rate, bool training, RngStreams::Engine& rng);

/// Same data, new shape.
Var reshape(const Var& a, Shape shape);
/// Swaps the last two axes.
Var transpose_last2(const Var& a);
/// Mean over the second-to-last axis: [..., P, D] → [..., D].
Var mean_over_tokens(const Var& a);
/// Replicates [..., D] along a new second-to-last axis: → [..., count, D].
Var repeat_tokens(const Var& a, std::size_t count);

struct AttentionResult {
  Var output;
  /// Row-stochastic weights, shape [G, heads, T, T].
  Tensor weights;
};

/// Multi-head scaled dot-product attention over groups of tokens.
/// q, k, v: [G, T, D] with D divisible by heads; scores scaled by 1/√(D/heads).
AttentionResult attention(const Var& q, const Var& k, const Var& v, std::size_t heads);

}  // namespace invdec::ad
