#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "gradleak/init.hpp"
#include "gradleak/model.hpp"
#include "gradleak/ops.hpp"
#include "test_util.hpp"

using namespace gradleak;
using namespace gradleak::testutil;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.num_layers = 1;
  c.hidden_units = 4;
  c.num_heads = 1;
  c.filter_size = 8;
  c.vocab_size = 11;
  c.max_sequence_length = 6;
  c.num_classes = 2;
  return c;
}

TransformerClassifier make_model(const ModelConfig& c, std::uint64_t seed) {
  return TransformerClassifier(c, init_weights(c, InitSpec::normal(0.0, 0.2, seed)));
}

}  // namespace

TEST_CASE("model config validates head divisibility") {
  ModelConfig c = tiny_config();
  c.num_heads = 3;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("parameter store rejects duplicates and decreasing layers") {
  ParameterStore store;
  store.add("a", 0, Tensor(Shape{1}, 0.0));
  CHECK_THROWS_AS(store.add("a", 0, Tensor(Shape{1}, 0.0)), std::invalid_argument);
  store.add("b", 2, Tensor(Shape{1}, 0.0));
  CHECK_THROWS_AS(store.add("c", 1, Tensor(Shape{1}, 0.0)), std::invalid_argument);
}

TEST_CASE("attention with a single position returns v") {
  Tensor q(Shape{1, 3}, std::vector<double>{2.0, -1.0, 0.5});
  Tensor k(Shape{1, 3}, std::vector<double>{-0.3, 0.9, 4.0});
  Tensor v(Shape{1, 3}, std::vector<double>{7.0, 8.0, 9.0});
  Tensor out = sdps_attention(q, k, v);
  for (std::size_t j = 0; j < 3; ++j) CHECK(out.at(0, j) == doctest::Approx(v.at(0, j)).epsilon(1e-15));
}

TEST_CASE("attention with orthogonal queries and identical values returns that value") {
  Tensor q(Shape{1, 2}, std::vector<double>{1.0, 0.0});
  Tensor k(Shape{2, 2}, std::vector<double>{0.0, 1.0, 0.0, -2.0});  // both orthogonal to q
  Tensor v(Shape{2, 2}, std::vector<double>{3.0, 4.0, 3.0, 4.0});
  Tensor out = sdps_attention(q, k, v);
  CHECK(out.at(0, 0) == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(out.at(0, 1) == doctest::Approx(4.0).epsilon(1e-15));
}

TEST_CASE("attention matches a direct loop oracle") {
  std::mt19937 rng(41);
  Tensor q = random_tensor({3, 4}, rng);
  Tensor k = random_tensor({3, 4}, rng);
  Tensor v = random_tensor({3, 4}, rng);
  Tensor out = sdps_attention(q, k, v);

  const double scale = 1.0 / std::sqrt(4.0);
  for (std::size_t i = 0; i < 3; ++i) {
    std::vector<double> scores(3);
    double mx = -1e300;
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0.0;
      for (std::size_t d = 0; d < 4; ++d) s += q.at(i, d) * k.at(j, d);
      scores[j] = s * scale;
      mx = std::max(mx, scores[j]);
    }
    double z = 0.0;
    for (double& s : scores) {
      s = std::exp(s - mx);
      z += s;
    }
    for (std::size_t d = 0; d < 4; ++d) {
      double want = 0.0;
      for (std::size_t j = 0; j < 3; ++j) want += scores[j] / z * v.at(j, d);
      CHECK(std::abs(out.at(i, d) - want) <= 1e-12);
    }
  }
}

TEST_CASE("attention rejects dimension mismatch") {
  CHECK_THROWS_AS(sdps_attention(Tensor(Shape{2, 3}, 0.0), Tensor(Shape{2, 4}, 0.0),
                                 Tensor(Shape{2, 3}, 0.0)),
                  std::invalid_argument);
}

namespace {

AttentionParams random_attention(std::size_t hidden, std::size_t heads, std::mt19937& rng) {
  AttentionParams p;
  p.q_weight = random_tensor({hidden, hidden}, rng);
  p.q_bias = random_tensor({1, hidden}, rng);
  p.k_weight = random_tensor({hidden, hidden}, rng);
  p.k_bias = random_tensor({1, hidden}, rng);
  p.v_weight = random_tensor({hidden, hidden}, rng);
  p.v_bias = random_tensor({1, hidden}, rng);
  p.out_weight = random_tensor({hidden, hidden}, rng);
  p.out_bias = random_tensor({1, hidden}, rng);
  p.num_heads = heads;
  return p;
}

}  // namespace

TEST_CASE("one-head attention equals full-width single-head attention") {
  std::mt19937 rng(43);
  AttentionParams p = random_attention(4, 1, rng);
  Tensor x = random_tensor({3, 4}, rng);
  Tensor got = multi_head_attention(x, p);

  Tensor q = add(matmul(x, p.q_weight), bcast_cols(p.q_bias, 3));
  Tensor k = add(matmul(x, p.k_weight), bcast_cols(p.k_bias, 3));
  Tensor v = add(matmul(x, p.v_weight), bcast_cols(p.v_bias, 3));
  Tensor want = add(matmul(sdps_attention(q, k, v), p.out_weight), bcast_cols(p.out_bias, 3));
  for (std::size_t i = 0; i < got.numel(); ++i) {
    CHECK(got.values()[i] == doctest::Approx(want.values()[i]).epsilon(1e-14));
  }
}

TEST_CASE("zero projections give zero attention output") {
  AttentionParams p;
  p.q_weight = Tensor(Shape{4, 4}, 0.0);
  p.q_bias = Tensor(Shape{1, 4}, 0.0);
  p.k_weight = Tensor(Shape{4, 4}, 0.0);
  p.k_bias = Tensor(Shape{1, 4}, 0.0);
  p.v_weight = Tensor(Shape{4, 4}, 0.0);
  p.v_bias = Tensor(Shape{1, 4}, 0.0);
  p.out_weight = Tensor(Shape{4, 4}, 0.0);
  p.out_bias = Tensor(Shape{1, 4}, 0.0);
  p.num_heads = 2;
  std::mt19937 rng(47);
  Tensor x = random_tensor({2, 4}, rng);
  Tensor out = multi_head_attention(x, p);
  for (double v : out.values()) CHECK(v == 0.0);
}

TEST_CASE("two-head attention matches the head-by-head oracle") {
  std::mt19937 rng(53);
  AttentionParams p = random_attention(4, 2, rng);
  Tensor x = random_tensor({2, 4}, rng);
  Tensor got = multi_head_attention(x, p);

  Tensor q = add(matmul(x, p.q_weight), bcast_cols(p.q_bias, 2));
  Tensor k = add(matmul(x, p.k_weight), bcast_cols(p.k_bias, 2));
  Tensor v = add(matmul(x, p.v_weight), bcast_cols(p.v_bias, 2));
  Tensor h0 = sdps_attention(slice_cols(q, 0, 2), slice_cols(k, 0, 2), slice_cols(v, 0, 2));
  Tensor h1 = sdps_attention(slice_cols(q, 2, 2), slice_cols(k, 2, 2), slice_cols(v, 2, 2));
  Tensor cat(Shape{2, 4}, 0.0);
  auto& cv = cat.mutable_values();
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      cv[i * 4 + j] = h0.at(i, j);
      cv[i * 4 + 2 + j] = h1.at(i, j);
    }
  }
  Tensor want = add(matmul(cat, p.out_weight), bcast_cols(p.out_bias, 2));
  for (std::size_t i = 0; i < got.numel(); ++i) {
    CHECK(std::abs(got.values()[i] - want.values()[i]) <= 1e-12);
  }
}

namespace {

EncoderParams random_encoder(std::size_t hidden, std::size_t filter, std::size_t heads,
                             std::mt19937& rng) {
  EncoderParams p;
  p.attention = random_attention(hidden, heads, rng);
  p.ln1_gain = random_tensor({1, hidden}, rng, 0.3);
  for (double& v : p.ln1_gain.mutable_values()) v += 1.0;
  p.ln1_bias = random_tensor({1, hidden}, rng, 0.3);
  p.ffn1_weight = random_tensor({hidden, filter}, rng);
  p.ffn1_bias = random_tensor({1, filter}, rng);
  p.ffn2_weight = random_tensor({filter, hidden}, rng);
  p.ffn2_bias = random_tensor({1, hidden}, rng);
  p.ln2_gain = random_tensor({1, hidden}, rng, 0.3);
  for (double& v : p.ln2_gain.mutable_values()) v += 1.0;
  p.ln2_bias = random_tensor({1, hidden}, rng, 0.3);
  return p;
}

}  // namespace

TEST_CASE("encoder layer composes the public sub-operations") {
  std::mt19937 rng(59);
  EncoderParams p = random_encoder(4, 8, 2, rng);
  Tensor x = random_tensor({3, 4}, rng);
  Tensor got = encoder_layer(x, p);

  Tensor a = layer_norm(add(x, multi_head_attention(x, p.attention)), p.ln1_gain, p.ln1_bias,
                        p.epsilon);
  Tensor f = add(matmul(gelu(add(matmul(a, p.ffn1_weight), bcast_cols(p.ffn1_bias, 3))),
                        p.ffn2_weight),
                 bcast_cols(p.ffn2_bias, 3));
  Tensor want = layer_norm(add(a, f), p.ln2_gain, p.ln2_bias, p.epsilon);
  for (std::size_t i = 0; i < got.numel(); ++i) {
    CHECK(got.values()[i] == doctest::Approx(want.values()[i]).epsilon(1e-14));
  }
}

TEST_CASE("encoder layer with all-zero weights reduces to stacked layer norms") {
  EncoderParams p;
  const std::size_t h = 4, f = 8;
  p.attention.q_weight = Tensor(Shape{h, h}, 0.0);
  p.attention.q_bias = Tensor(Shape{1, h}, 0.0);
  p.attention.k_weight = Tensor(Shape{h, h}, 0.0);
  p.attention.k_bias = Tensor(Shape{1, h}, 0.0);
  p.attention.v_weight = Tensor(Shape{h, h}, 0.0);
  p.attention.v_bias = Tensor(Shape{1, h}, 0.0);
  p.attention.out_weight = Tensor(Shape{h, h}, 0.0);
  p.attention.out_bias = Tensor(Shape{1, h}, 0.0);
  p.attention.num_heads = 1;
  p.ln1_gain = Tensor(Shape{1, h}, 1.0);
  p.ln1_bias = Tensor(Shape{1, h}, 0.0);
  p.ffn1_weight = Tensor(Shape{h, f}, 0.0);
  p.ffn1_bias = Tensor(Shape{1, f}, 0.0);
  p.ffn2_weight = Tensor(Shape{f, h}, 0.0);
  p.ffn2_bias = Tensor(Shape{1, h}, 0.0);
  p.ln2_gain = Tensor(Shape{1, h}, 1.0);
  p.ln2_bias = Tensor(Shape{1, h}, 0.0);

  std::mt19937 rng(61);
  Tensor x = random_tensor({2, h}, rng);
  Tensor got = encoder_layer(x, p);
  Tensor gain(Shape{1, h}, 1.0);
  Tensor bias(Shape{1, h}, 0.0);
  Tensor inner = layer_norm(x, gain, bias, p.epsilon);
  Tensor want = layer_norm(inner, gain, bias, p.epsilon);
  for (std::size_t i = 0; i < got.numel(); ++i) {
    CHECK(got.values()[i] == doctest::Approx(want.values()[i]).epsilon(1e-14));
  }
}

TEST_CASE("encoder layer keeps the (1, hidden) shape for one position") {
  std::mt19937 rng(67);
  EncoderParams p = random_encoder(4, 8, 1, rng);
  Tensor x = random_tensor({1, 4}, rng);
  Tensor out = encoder_layer(x, p);
  CHECK(out.shape() == Shape{1, 4});
}

TEST_CASE("gradient through one encoder layer matches finite differences") {
  std::mt19937 rng(71);
  EncoderParams p = random_encoder(4, 8, 2, rng);
  Tensor x0 = random_tensor({2, 4}, rng);
  Tensor weights = random_tensor({2, 4}, rng);

  auto scalar_fn = [&](const Tensor& x) {
    Graph g;
    return sum_all(mul(encoder_layer(g.variable(x), p), weights)).item();
  };
  Graph graph;
  Tensor xv = graph.variable(x0);
  auto grads = graph.backward(sum_all(mul(encoder_layer(xv, p), weights)), {xv});
  for (std::size_t i = 0; i < x0.numel(); ++i) {
    CHECK(rel_error(grads[0].values()[i], central_difference(scalar_fn, x0, i)) < 1e-4);
  }
}

TEST_CASE("token-id and embedding forward paths are bit-identical") {
  const ModelConfig c = tiny_config();
  TransformerClassifier model = make_model(c, 5);
  std::vector<int> tokens{1, 7, 3};
  Tensor from_ids = model.forward(tokens);
  Tensor from_embeddings = model.forward(model.embed(tokens));
  REQUIRE(from_ids.shape() == Shape{c.num_classes});
  for (std::size_t i = 0; i < c.num_classes; ++i) {
    CHECK(from_ids.values()[i] == from_embeddings.values()[i]);  // exact
  }
}

TEST_CASE("forward output has num_classes entries") {
  const ModelConfig c = tiny_config();
  TransformerClassifier model = make_model(c, 6);
  CHECK(model.forward({0, 1}).shape() == Shape{2});
}

TEST_CASE("forward rejects out-of-range ids and over-long sequences") {
  const ModelConfig c = tiny_config();
  TransformerClassifier model = make_model(c, 7);
  CHECK_THROWS_AS(model.forward({11}), std::out_of_range);
  CHECK_THROWS_AS(model.forward(std::vector<int>(7, 1)), std::invalid_argument);
}

TEST_CASE("tiny-config logits match a hand-assembled composition") {
  const ModelConfig c = tiny_config();
  TransformerClassifier model = make_model(c, 8);
  const std::vector<int> tokens{2, 5, 9};
  Tensor got = model.forward(tokens);

  const ParameterStore& store = model.store();
  Tensor x = gather_rows(store.tensor("embeddings.token"), tokens);
  x = add(x, slice_rows(store.tensor("embeddings.position"), 0, 3));
  EncoderParams p;
  p.attention.q_weight = store.tensor("encoder0.q_weight");
  p.attention.q_bias = store.tensor("encoder0.q_bias");
  p.attention.k_weight = store.tensor("encoder0.k_weight");
  p.attention.k_bias = store.tensor("encoder0.k_bias");
  p.attention.v_weight = store.tensor("encoder0.v_weight");
  p.attention.v_bias = store.tensor("encoder0.v_bias");
  p.attention.out_weight = store.tensor("encoder0.out_weight");
  p.attention.out_bias = store.tensor("encoder0.out_bias");
  p.attention.num_heads = 1;
  p.ln1_gain = store.tensor("encoder0.ln1_gain");
  p.ln1_bias = store.tensor("encoder0.ln1_bias");
  p.ffn1_weight = store.tensor("encoder0.ffn1_weight");
  p.ffn1_bias = store.tensor("encoder0.ffn1_bias");
  p.ffn2_weight = store.tensor("encoder0.ffn2_weight");
  p.ffn2_bias = store.tensor("encoder0.ffn2_bias");
  p.ln2_gain = store.tensor("encoder0.ln2_gain");
  p.ln2_bias = store.tensor("encoder0.ln2_bias");
  Tensor h = encoder_layer(x, p);
  Tensor pooled = slice_rows(h, 0, 1);
  Tensor want = add(matmul(pooled, store.tensor("classifier.weight")),
                    bcast_cols(store.tensor("classifier.bias"), 1));
  for (std::size_t i = 0; i < c.num_classes; ++i) {
    CHECK(got.values()[i] == doctest::Approx(want.values()[i]).epsilon(1e-14));
  }
}

TEST_CASE("forward is deterministic") {
  const ModelConfig c = tiny_config();
  TransformerClassifier model = make_model(c, 9);
  Tensor a = model.forward({1, 2, 3});
  Tensor b = model.forward({1, 2, 3});
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.values()[i] == b.values()[i]);
}

TEST_CASE("jointly permuting two heads leaves the logits unchanged") {
  ModelConfig c = tiny_config();
  c.num_heads = 2;
  TransformerClassifier model = make_model(c, 10);
  const std::vector<int> tokens{1, 4, 6};
  Tensor before = model.forward(tokens);

  // swap head 0 and head 1: columns of q/k/v projections (and bias entries),
  // plus the matching rows of the output projection
  const std::size_t h = c.hidden_units, d = c.head_dim();
  ParameterStore permuted;
  for (const auto& e : model.store()) {
    Tensor t(e.tensor.shape(), e.tensor.values());
    const bool qkv_w = e.name.ends_with("q_weight") || e.name.ends_with("k_weight") ||
                       e.name.ends_with("v_weight");
    const bool qkv_b = e.name.ends_with("q_bias") || e.name.ends_with("k_bias") ||
                       e.name.ends_with("v_bias");
    if (qkv_w) {
      auto& v = t.mutable_values();
      for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t j = 0; j < d; ++j) std::swap(v[r * h + j], v[r * h + d + j]);
      }
    } else if (qkv_b) {
      auto& v = t.mutable_values();
      for (std::size_t j = 0; j < d; ++j) std::swap(v[j], v[d + j]);
    } else if (e.name.ends_with("out_weight")) {
      auto& v = t.mutable_values();
      for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t col = 0; col < h; ++col) std::swap(v[j * h + col], v[(d + j) * h + col]);
      }
    }
    permuted.add(e.name, e.layer_index, std::move(t));
  }
  TransformerClassifier swapped(c, std::move(permuted));
  Tensor after = swapped.forward(tokens);
  for (std::size_t i = 0; i < before.numel(); ++i) {
    CHECK(before.values()[i] == doctest::Approx(after.values()[i]).epsilon(1e-12));
  }
}

TEST_CASE("model gradient is structurally parallel to the store") {
  const ModelConfig c = tiny_config();
  TransformerClassifier model = make_model(c, 11);
  GradientSet g = model.gradient({1, 2, 3}, one_hot(2, 1));
  CHECK(g.structure_matches(model.store()));
}

TEST_CASE("doubling the loss doubles every gradient entry") {
  const ModelConfig c = tiny_config();
  TransformerClassifier model = make_model(c, 12);
  const std::vector<int> tokens{3, 4};
  Tensor target = one_hot(2, 0);

  Graph graph;
  BoundModel bound = BoundModel::bind(model, graph);
  Tensor loss = cross_entropy(bound.forward_tokens(tokens), graph.variable(target, false));
  auto g1 = graph.backward(loss, bound.params, true);
  auto g2 = graph.backward(mul_scalar(loss, 2.0), bound.params, true);
  for (std::size_t p = 0; p < g1.size(); ++p) {
    for (std::size_t i = 0; i < g1[p].numel(); ++i) {
      CHECK(rel_error(g2[p].values()[i], 2.0 * g1[p].values()[i]) < 1e-12);
    }
  }
}

TEST_CASE("identical sentences give identical gradients, different ones differ") {
  const ModelConfig c = tiny_config();
  TransformerClassifier model = make_model(c, 13);
  GradientSet a = model.gradient({1, 2, 3}, one_hot(2, 1));
  GradientSet b = model.gradient({1, 2, 3}, one_hot(2, 1));
  GradientSet other = model.gradient({4, 5, 6}, one_hot(2, 1));

  bool any_differs = false;
  for (std::size_t p = 0; p < a.size(); ++p) {
    for (std::size_t i = 0; i < a.entries[p].tensor.numel(); ++i) {
      CHECK(a.entries[p].tensor.values()[i] == b.entries[p].tensor.values()[i]);
      if (a.entries[p].tensor.values()[i] != other.entries[p].tensor.values()[i]) any_differs = true;
    }
  }
  CHECK(any_differs);
}

TEST_CASE("model parameter gradients agree with finite differences") {
  const ModelConfig c = tiny_config();
  TransformerClassifier model = make_model(c, 14);
  const std::vector<int> tokens{2, 8, 1};
  Tensor target = one_hot(2, 1);
  GradientSet grads = model.gradient(tokens, target);

  std::mt19937 rng(77);
  std::uniform_int_distribution<std::size_t> pick_param(0, model.store().size() - 1);
  for (int probe = 0; probe < 60; ++probe) {
    const std::size_t p = pick_param(rng);
    const Tensor& base = model.store().entry(p).tensor;
    std::uniform_int_distribution<std::size_t> pick_coord(0, base.numel() - 1);
    const std::size_t i = pick_coord(rng);

    auto loss_at = [&](double value) {
      ParameterStore store;
      for (const auto& e : model.store()) {
        Tensor t(e.tensor.shape(), e.tensor.values());
        if (&e.tensor == &base) t.mutable_values()[i] = value;
        store.add(e.name, e.layer_index, std::move(t));
      }
      TransformerClassifier perturbed(c, std::move(store));
      return cross_entropy(perturbed.forward(tokens), target).item();
    };
    const double x0 = base.values()[i];
    const double step = 1e-5;
    const double fd = (loss_at(x0 + step) - loss_at(x0 - step)) / (2.0 * step);
    CHECK(rel_error(grads.entries[p].tensor.values()[i], fd) < 1e-4);
  }
}
