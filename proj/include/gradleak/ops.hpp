#pragma once

#include "gradleak/tensor.hpp"

namespace gradleak {

// Composite differentiable operations, built from the tensor primitives so
// that first- and second-order backward passes fall out of the same rules.

// Softmax along `axis`. Rank-1 tensors use axis 0; rank-2 tensors support
// axis 0 (down columns) and axis 1 (along rows). Max-subtraction keeps the
// exponentials in range.
Tensor softmax(const Tensor& x, int axis);

// log(softmax(x)) along rows of a rank-2 tensor, same stabilization.
Tensor log_softmax_rows(const Tensor& x);

// Exact-CDF GELU: x * Phi(x) with Phi the standard normal CDF via erf.
Tensor gelu(const Tensor& x);

// Normalizes each row of x to zero mean and unit variance (population
// variance, epsilon inside the square root), then applies the per-feature
// affine transform. gain and bias are (1,m).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double epsilon = 1e-5);

// Soft-label cross entropy: -sum(softmax(target_scores) * log_softmax(logits)).
// Both arguments share one shape, rank 1 or (1,k). The target side stays
// differentiable, which is what lets the attack optimize its label scores.
Tensor cross_entropy(const Tensor& logits, const Tensor& target_scores);

}  // namespace gradleak
