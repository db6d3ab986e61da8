#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "gradleak/ops.hpp"
#include "test_util.hpp"

using namespace gradleak;
using namespace gradleak::testutil;

TEST_CASE("softmax of a constant vector is uniform") {
  Tensor x(Shape{3}, std::vector<double>{0, 0, 0});
  Tensor s = softmax(x, 0);
  for (double v : s.values()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("softmax survives large inputs via max subtraction") {
  Tensor x(Shape{2}, std::vector<double>{1000, 1000});
  Tensor s = softmax(x, 0);
  CHECK(s.values()[0] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(s.values()[1] == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("softmax matches the direct exp-normalize oracle") {
  Tensor x(Shape{3}, std::vector<double>{1, 2, 3});
  Tensor s = softmax(x, 0);
  double z = 0.0;
  for (double v : x.values()) z += std::exp(v);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(std::abs(s.values()[i] - std::exp(x.values()[i]) / z) <= 1e-12);
  }
}

TEST_CASE("softmax rows sum to one within 1e-12") {
  std::mt19937 rng(3);
  Tensor x = random_tensor({5, 7}, rng, 3.0);
  Tensor s = softmax(x, 1);
  for (std::size_t i = 0; i < 5; ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < 7; ++j) {
      CHECK(s.at(i, j) >= 0.0);
      total += s.at(i, j);
    }
    CHECK(std::abs(total - 1.0) <= 1e-12);
  }
}

TEST_CASE("softmax axis 0 normalizes down columns") {
  std::mt19937 rng(4);
  Tensor x = random_tensor({4, 3}, rng);
  Tensor s0 = softmax(x, 0);
  for (std::size_t j = 0; j < 3; ++j) {
    double total = 0.0;
    for (std::size_t i = 0; i < 4; ++i) total += s0.at(i, j);
    CHECK(std::abs(total - 1.0) <= 1e-12);
  }
  CHECK_THROWS_AS(softmax(x, 2), std::invalid_argument);
}

TEST_CASE("gelu at zero is zero and large inputs pass through") {
  Tensor x(Shape{3}, std::vector<double>{0.0, 8.0, -8.0});
  Tensor y = gelu(x);
  CHECK(y.values()[0] == 0.0);
  CHECK(y.values()[1] == doctest::Approx(8.0).epsilon(1e-12));
  CHECK(std::abs(y.values()[2]) < 1e-12);
}

namespace {

// Simpson quadrature of the standard normal pdf on [-8, x]; an oracle for
// the Gaussian CDF that does not touch erf.
double normal_cdf_quadrature(double x) {
  const double lo = -8.0;
  const int steps = 20000;  // even
  const double h = (x - lo) / steps;
  auto pdf = [](double t) { return std::exp(-0.5 * t * t) / std::sqrt(2.0 * 3.141592653589793); };
  double acc = pdf(lo) + pdf(x);
  for (int i = 1; i < steps; ++i) acc += pdf(lo + h * i) * (i % 2 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

}  // namespace

TEST_CASE("gelu(1) matches the quadrature oracle for x * Phi(x)") {
  Tensor one(Shape{1}, std::vector<double>{1.0});
  const double want = 1.0 * normal_cdf_quadrature(1.0);
  CHECK(std::abs(gelu(one).item() - want) <= 1e-9);
}

TEST_CASE("layer_norm of a constant row is zero before the affine map") {
  Tensor x(Shape{1, 4}, std::vector<double>{5, 5, 5, 5});
  Tensor gain(Shape{1, 4}, 1.0);
  Tensor bias(Shape{1, 4}, 0.0);
  Tensor y = layer_norm(x, gain, bias);
  for (double v : y.values()) CHECK(v == 0.0);
}

TEST_CASE("layer_norm of [1,3] is [-1,1] up to the epsilon correction") {
  Tensor x(Shape{1, 2}, std::vector<double>{1, 3});
  Tensor gain(Shape{1, 2}, 1.0);
  Tensor bias(Shape{1, 2}, 0.0);
  Tensor y = layer_norm(x, gain, bias, 1e-5);
  CHECK(y.at(0, 0) == doctest::Approx(-1.0).epsilon(1e-4));
  CHECK(y.at(0, 1) == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("layer_norm output has zero mean and near-unit variance") {
  std::mt19937 rng(17);
  const double eps = 1e-5;
  Tensor x = random_tensor({3, 16}, rng, 2.0);
  Tensor gain(Shape{1, 16}, 1.0);
  Tensor bias(Shape{1, 16}, 0.0);
  Tensor y = layer_norm(x, gain, bias, eps);
  for (std::size_t i = 0; i < 3; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < 16; ++j) mean += y.at(i, j);
    mean /= 16.0;
    CHECK(std::abs(mean) <= 1e-10);
    double var = 0.0;
    for (std::size_t j = 0; j < 16; ++j) var += y.at(i, j) * y.at(i, j);
    var /= 16.0;
    // normalized variance is v/(v+eps), slightly below 1
    CHECK(var <= 1.0 + 1e-12);
    CHECK(var >= 1.0 - 16.0 * eps);
  }
}

TEST_CASE("layer_norm rejects mismatched gain extent") {
  Tensor x(Shape{2, 4}, 1.0);
  Tensor bad(Shape{1, 3}, 1.0);
  Tensor bias(Shape{1, 4}, 0.0);
  CHECK_THROWS_AS(layer_norm(x, bad, bias), std::invalid_argument);
}

TEST_CASE("cross entropy of matching one-hot-like scores approaches the target entropy") {
  Tensor scores(Shape{3}, std::vector<double>{12.0, 0.0, 0.0});
  const double loss = cross_entropy(scores, scores).item();
  // oracle: entropy of softmax(scores)
  double z = 0.0;
  for (double v : scores.values()) z += std::exp(v - 12.0);
  double entropy = 0.0;
  for (double v : scores.values()) {
    const double p = std::exp(v - 12.0) / z;
    entropy -= p * std::log(p);
  }
  CHECK(std::abs(loss - entropy) <= 1e-12);
  CHECK(loss < 1e-3);  // approaches zero for a hard target distribution
}

TEST_CASE("uniform logits against a hard target cost log K") {
  for (std::size_t k : {2, 3, 7}) {
    Tensor logits(Shape{k}, 0.25);
    Tensor target(Shape{k}, 0.0);
    target.mutable_values()[0] = 30.0;  // effectively one-hot
    CHECK(cross_entropy(logits, target).item() ==
          doctest::Approx(std::log(static_cast<double>(k))).epsilon(1e-12));
  }
}

TEST_CASE("cross entropy matches the direct formula oracle") {
  std::mt19937 rng(23);
  Tensor logits = random_tensor({3}, rng);
  Tensor target = random_tensor({3}, rng);

  auto softmax_plain = [](const std::vector<double>& v) {
    double mx = v[0];
    for (double x : v) mx = std::max(mx, x);
    double z = 0.0;
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      out[i] = std::exp(v[i] - mx);
      z += out[i];
    }
    for (double& x : out) x /= z;
    return out;
  };
  const auto p = softmax_plain(target.values());
  const auto q = softmax_plain(logits.values());
  double want = 0.0;
  for (std::size_t i = 0; i < 3; ++i) want -= p[i] * std::log(q[i]);
  CHECK(std::abs(cross_entropy(logits, target).item() - want) <= 1e-12);
}

TEST_CASE("cross entropy rejects shape mismatch") {
  CHECK_THROWS_AS(cross_entropy(Tensor(Shape{3}, 0.0), Tensor(Shape{2}, 0.0)),
                  std::invalid_argument);
}

namespace {

void check_composite_gradient(const std::function<Tensor(const Tensor&)>& op, const Tensor& x0,
                              std::mt19937& rng, double tol = 1e-4) {
  Tensor shape_probe;
  {
    Graph g;
    shape_probe = op(g.variable(x0));
  }
  Tensor weights = random_tensor(shape_probe.shape(), rng);
  auto scalar_fn = [&](const Tensor& x) {
    Graph g;
    return sum_all(mul(op(g.variable(x)), weights)).item();
  };
  Graph graph;
  Tensor xv = graph.variable(x0);
  auto grads = graph.backward(sum_all(mul(op(xv), weights)), {xv});
  for (std::size_t i = 0; i < x0.numel(); ++i) {
    CHECK(rel_error(grads[0].values()[i], central_difference(scalar_fn, x0, i)) < tol);
  }
}

}  // namespace

TEST_CASE("composite op gradients agree with finite differences") {
  std::mt19937 rng(31);
  Tensor mat = random_tensor({3, 5}, rng);
  check_composite_gradient([](const Tensor& t) { return softmax(t, 1); }, mat, rng);
  check_composite_gradient([](const Tensor& t) { return gelu(t); }, mat, rng);
  check_composite_gradient([](const Tensor& t) { return log_softmax_rows(t); }, mat, rng);

  Tensor gain = random_tensor({1, 5}, rng);
  Tensor bias = random_tensor({1, 5}, rng);
  check_composite_gradient([&](const Tensor& t) { return layer_norm(t, gain, bias); }, mat, rng);

  Tensor target = random_tensor({4}, rng);
  Tensor logits = random_tensor({4}, rng);
  check_composite_gradient([&](const Tensor& t) { return cross_entropy(t, target); }, logits, rng);
  check_composite_gradient([&](const Tensor& t) { return cross_entropy(logits, t); }, target, rng);
}

TEST_CASE("layer_norm parameter gradients agree with finite differences") {
  std::mt19937 rng(37);
  Tensor x = random_tensor({2, 4}, rng);
  Tensor gain0 = random_tensor({1, 4}, rng);
  Tensor bias0 = random_tensor({1, 4}, rng);
  Tensor weights = random_tensor({2, 4}, rng);

  auto loss_of_gain = [&](const Tensor& gain) {
    Graph g;
    return sum_all(mul(layer_norm(x, g.variable(gain), bias0), weights)).item();
  };
  Graph graph;
  Tensor gv = graph.variable(gain0);
  auto grads = graph.backward(sum_all(mul(layer_norm(x, gv, bias0), weights)), {gv});
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(rel_error(grads[0].values()[i], central_difference(loss_of_gain, gain0, i)) < 1e-4);
  }
}
