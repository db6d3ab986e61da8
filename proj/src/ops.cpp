#include "gradleak/ops.hpp"

#include <cmath>

namespace gradleak {

namespace {

Tensor softmax_rows(const Tensor& x) {
  const std::size_t m = x.shape()[1];
  Tensor shifted = sub(x, bcast_rows(row_max_values(x), m));
  Tensor e = exp(shifted);
  return div(e, bcast_rows(row_sum(e), m));
}

}  // namespace

Tensor softmax(const Tensor& x, int axis) {
  if (x.rank() == 1) {
    if (axis != 0) throw std::invalid_argument("softmax: axis " + std::to_string(axis) + " invalid for rank-1 tensor");
    return reshape(softmax_rows(reshape(x, {1, x.shape()[0]})), x.shape());
  }
  if (x.rank() == 2) {
    if (axis == 1) return softmax_rows(x);
    if (axis == 0) return transpose(softmax_rows(transpose(x)));
    throw std::invalid_argument("softmax: axis " + std::to_string(axis) + " invalid for rank-2 tensor");
  }
  throw std::invalid_argument("softmax: unsupported rank " + std::to_string(x.rank()));
}

Tensor log_softmax_rows(const Tensor& x) {
  const std::size_t m = x.shape()[1];
  Tensor shifted = sub(x, bcast_rows(row_max_values(x), m));
  Tensor z = row_sum(exp(shifted));
  return sub(shifted, bcast_rows(log(z), m));
}

Tensor gelu(const Tensor& x) {
  const double inv_sqrt2 = 0.7071067811865476;
  Tensor phi = mul_scalar(add_scalar(erf(mul_scalar(x, inv_sqrt2)), 1.0), 0.5);
  return mul(x, phi);
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double epsilon) {
  if (x.rank() != 2) throw std::invalid_argument("layer_norm: expected rank-2 input");
  const std::size_t n = x.shape()[0], m = x.shape()[1];
  if (gain.numel() != m || bias.numel() != m) {
    throw std::invalid_argument("layer_norm: gain/bias must match the normalized extent " + std::to_string(m));
  }
  Tensor g2 = gain.rank() == 2 ? gain : reshape(gain, {1, m});
  Tensor b2 = bias.rank() == 2 ? bias : reshape(bias, {1, m});
  Tensor mean = mul_scalar(row_sum(x), 1.0 / static_cast<double>(m));
  Tensor centered = sub(x, bcast_rows(mean, m));
  Tensor variance = mul_scalar(row_sum(mul(centered, centered)), 1.0 / static_cast<double>(m));
  Tensor inv_std = div(Tensor(Shape{n, 1}, 1.0), sqrt(add_scalar(variance, epsilon)));
  Tensor normalized = mul(centered, bcast_rows(inv_std, m));
  return add(mul(normalized, bcast_cols(g2, n)), bcast_cols(b2, n));
}

Tensor cross_entropy(const Tensor& logits, const Tensor& target_scores) {
  if (!logits.same_shape(target_scores)) {
    throw std::invalid_argument("cross_entropy: logits " + shape_str(logits.shape()) +
                                " vs target " + shape_str(target_scores.shape()));
  }
  const std::size_t k = logits.numel();
  Tensor l2 = reshape(logits, {1, k});
  Tensor t2 = reshape(target_scores, {1, k});
  Tensor target_prob = softmax(t2, 1);
  Tensor logp = log_softmax_rows(l2);
  return neg(sum_all(mul(target_prob, logp)));
}

}  // namespace gradleak
