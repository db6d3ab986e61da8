#include "gradleak/model.hpp"

#include <cmath>
#include <unordered_map>

#include "gradleak/ops.hpp"

namespace gradleak {

void ModelConfig::validate() const {
  if (num_layers == 0 || hidden_units == 0 || num_heads == 0 || filter_size == 0 ||
      vocab_size == 0 || max_sequence_length == 0 || num_classes == 0) {
    throw std::invalid_argument("model config: all extents must be positive");
  }
  if (hidden_units % num_heads != 0) {
    throw std::invalid_argument("model config: hidden_units " + std::to_string(hidden_units) +
                                " not divisible by num_heads " + std::to_string(num_heads));
  }
}

void ParameterStore::add(std::string name, std::size_t layer_index, Tensor tensor) {
  if (find(name) != nullptr) throw std::invalid_argument("parameter store: duplicate name '" + name + "'");
  if (!entries_.empty() && layer_index < entries_.back().layer_index) {
    throw std::invalid_argument("parameter store: layer index must be nondecreasing, '" + name +
                                "' breaks the order");
  }
  entries_.push_back({std::move(name), layer_index, std::move(tensor)});
}

const ParamEntry* ParameterStore::find(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

const Tensor& ParameterStore::tensor(const std::string& name) const {
  const ParamEntry* e = find(name);
  if (!e) throw std::out_of_range("parameter store: no parameter named '" + name + "'");
  return e->tensor;
}

bool GradientSet::structure_matches(const ParameterStore& store) const {
  if (entries.size() != store.size()) return false;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& a = entries[i];
    const auto& b = store.entry(i);
    if (a.name != b.name || a.layer_index != b.layer_index ||
        a.tensor.shape() != b.tensor.shape()) {
      return false;
    }
  }
  return true;
}

bool GradientSet::structure_matches(const GradientSet& other) const {
  if (entries.size() != other.entries.size()) return false;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& a = entries[i];
    const auto& b = other.entries[i];
    if (a.name != b.name || a.layer_index != b.layer_index ||
        a.tensor.shape() != b.tensor.shape()) {
      return false;
    }
  }
  return true;
}

Tensor sdps_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2) {
    throw std::invalid_argument("sdps_attention: q, k, v must be rank-2");
  }
  if (q.shape()[1] != k.shape()[1] || k.shape()[0] != v.shape()[0]) {
    throw std::invalid_argument("sdps_attention: dimension mismatch q" + shape_str(q.shape()) +
                                " k" + shape_str(k.shape()) + " v" + shape_str(v.shape()));
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.shape()[1]));
  Tensor scores = mul_scalar(matmul(q, transpose(k)), scale);
  return matmul(softmax(scores, 1), v);
}

Tensor multi_head_attention(const Tensor& x, const AttentionParams& params) {
  const std::size_t hidden = x.shape()[1];
  if (params.num_heads == 0 || hidden % params.num_heads != 0) {
    throw std::invalid_argument("multi_head_attention: hidden width " + std::to_string(hidden) +
                                " not divisible by " + std::to_string(params.num_heads) + " heads");
  }
  const std::size_t seq = x.shape()[0];
  const std::size_t head_dim = hidden / params.num_heads;

  Tensor q = add(matmul(x, params.q_weight), bcast_cols(params.q_bias, seq));
  Tensor k = add(matmul(x, params.k_weight), bcast_cols(params.k_bias, seq));
  Tensor v = add(matmul(x, params.v_weight), bcast_cols(params.v_bias, seq));

  Tensor concat;
  for (std::size_t h = 0; h < params.num_heads; ++h) {
    const std::size_t begin = h * head_dim;
    Tensor head = sdps_attention(slice_cols(q, begin, head_dim), slice_cols(k, begin, head_dim),
                                 slice_cols(v, begin, head_dim));
    Tensor placed = embed_cols(head, begin, hidden);
    concat = concat.defined() ? add(concat, placed) : placed;
  }
  return add(matmul(concat, params.out_weight), bcast_cols(params.out_bias, seq));
}

Tensor encoder_layer(const Tensor& x, const EncoderParams& params) {
  const std::size_t seq = x.shape()[0];
  Tensor attended = layer_norm(add(x, multi_head_attention(x, params.attention)), params.ln1_gain,
                               params.ln1_bias, params.epsilon);
  Tensor hidden = gelu(add(matmul(attended, params.ffn1_weight), bcast_cols(params.ffn1_bias, seq)));
  Tensor projected = add(matmul(hidden, params.ffn2_weight), bcast_cols(params.ffn2_bias, seq));
  return layer_norm(add(attended, projected), params.ln2_gain, params.ln2_bias, params.epsilon);
}

std::vector<ParamSpec> parameter_layout(const ModelConfig& c) {
  std::vector<ParamSpec> layout;
  layout.push_back({"embeddings.token", 0, {c.vocab_size, c.hidden_units}, false});
  layout.push_back({"embeddings.position", 0, {c.max_sequence_length, c.hidden_units}, false});
  for (std::size_t i = 0; i < c.num_layers; ++i) {
    const std::string prefix = "encoder" + std::to_string(i) + ".";
    const std::size_t layer = i + 1;
    const std::size_t h = c.hidden_units, f = c.filter_size;
    layout.push_back({prefix + "q_weight", layer, {h, h}, false});
    layout.push_back({prefix + "q_bias", layer, {1, h}, false});
    layout.push_back({prefix + "k_weight", layer, {h, h}, false});
    layout.push_back({prefix + "k_bias", layer, {1, h}, false});
    layout.push_back({prefix + "v_weight", layer, {h, h}, false});
    layout.push_back({prefix + "v_bias", layer, {1, h}, false});
    layout.push_back({prefix + "out_weight", layer, {h, h}, false});
    layout.push_back({prefix + "out_bias", layer, {1, h}, false});
    layout.push_back({prefix + "ln1_gain", layer, {1, h}, true});
    layout.push_back({prefix + "ln1_bias", layer, {1, h}, true});
    layout.push_back({prefix + "ffn1_weight", layer, {h, f}, false});
    layout.push_back({prefix + "ffn1_bias", layer, {1, f}, false});
    layout.push_back({prefix + "ffn2_weight", layer, {f, h}, false});
    layout.push_back({prefix + "ffn2_bias", layer, {1, h}, false});
    layout.push_back({prefix + "ln2_gain", layer, {1, h}, true});
    layout.push_back({prefix + "ln2_bias", layer, {1, h}, true});
  }
  layout.push_back({"classifier.weight", c.num_layers + 1, {c.hidden_units, c.num_classes}, false});
  layout.push_back({"classifier.bias", c.num_layers + 1, {1, c.num_classes}, false});
  return layout;
}

TransformerClassifier::TransformerClassifier(ModelConfig config, ParameterStore store)
    : config_(config), store_(std::move(store)) {
  config_.validate();
  validate_store();
}

void TransformerClassifier::validate_store() const {
  const auto layout = parameter_layout(config_);
  if (store_.size() != layout.size()) {
    throw std::invalid_argument("model: parameter store has " + std::to_string(store_.size()) +
                                " entries, config requires " + std::to_string(layout.size()));
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& have = store_.entry(i);
    const auto& want = layout[i];
    if (have.name != want.name) {
      throw std::invalid_argument("model: parameter " + std::to_string(i) + " is '" + have.name +
                                  "', expected '" + want.name + "'");
    }
    if (have.tensor.shape() != want.shape) {
      throw std::invalid_argument("model: parameter '" + have.name + "' has shape " +
                                  shape_str(have.tensor.shape()) + ", expected " + shape_str(want.shape));
    }
    if (have.layer_index != want.layer_index) {
      throw std::invalid_argument("model: parameter '" + have.name + "' has layer index " +
                                  std::to_string(have.layer_index));
    }
  }
}

Tensor TransformerClassifier::embed(const std::vector<int>& token_ids) const {
  if (token_ids.empty()) throw std::invalid_argument("embed: empty token sequence");
  for (int id : token_ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= config_.vocab_size) {
      throw std::out_of_range("embed: token id " + std::to_string(id) + " out of range for vocab " +
                              std::to_string(config_.vocab_size));
    }
  }
  return gather_rows(token_embeddings(), token_ids);
}

Tensor TransformerClassifier::forward(const std::vector<int>& token_ids) const {
  return forward(embed(token_ids));
}

Tensor TransformerClassifier::forward(const Tensor& embeddings) const {
  Graph graph;
  BoundModel bound = BoundModel::bind(*this, graph);
  return bound.forward_embeddings(embeddings).detached();
}

namespace {

GradientSet collect_gradients(const ParameterStore& store, Graph& graph, const Tensor& loss,
                              const std::vector<Tensor>& params) {
  std::vector<Tensor> grads = graph.backward(loss, params, /*create_graph=*/false);
  GradientSet set;
  set.entries.reserve(grads.size());
  for (std::size_t i = 0; i < grads.size(); ++i) {
    const auto& e = store.entry(i);
    set.entries.push_back({e.name, e.layer_index, grads[i].detached()});
  }
  return set;
}

}  // namespace

GradientSet TransformerClassifier::gradient(const std::vector<int>& token_ids,
                                            const Tensor& target_scores) const {
  // The lookup happens on the tracked table, so the token-embedding rows
  // receive their share of the gradient.
  Graph graph;
  BoundModel bound = BoundModel::bind(*this, graph);
  Tensor loss = cross_entropy(bound.forward_tokens(token_ids), target_scores);
  return collect_gradients(store_, graph, loss, bound.params);
}

GradientSet TransformerClassifier::gradient(const Tensor& embeddings,
                                            const Tensor& target_scores) const {
  Graph graph;
  BoundModel bound = BoundModel::bind(*this, graph);
  Tensor loss = cross_entropy(bound.forward_embeddings(embeddings), target_scores);
  return collect_gradients(store_, graph, loss, bound.params);
}

BoundModel BoundModel::bind(const TransformerClassifier& model, Graph& graph) {
  BoundModel bound;
  bound.model = &model;
  bound.params.reserve(model.store().size());
  for (const auto& e : model.store()) {
    bound.params.push_back(graph.variable(e.tensor, /*requires_grad=*/true));
  }
  return bound;
}

const Tensor& BoundModel::param(const std::string& name) const {
  for (std::size_t i = 0; i < model->store().size(); ++i) {
    if (model->store().entry(i).name == name) return params[i];
  }
  throw std::out_of_range("bound model: no parameter named '" + name + "'");
}

EncoderParams BoundModel::encoder_params(std::size_t block) const {
  const std::string prefix = "encoder" + std::to_string(block) + ".";
  EncoderParams p;
  p.attention.q_weight = param(prefix + "q_weight");
  p.attention.q_bias = param(prefix + "q_bias");
  p.attention.k_weight = param(prefix + "k_weight");
  p.attention.k_bias = param(prefix + "k_bias");
  p.attention.v_weight = param(prefix + "v_weight");
  p.attention.v_bias = param(prefix + "v_bias");
  p.attention.out_weight = param(prefix + "out_weight");
  p.attention.out_bias = param(prefix + "out_bias");
  p.attention.num_heads = model->config().num_heads;
  p.ln1_gain = param(prefix + "ln1_gain");
  p.ln1_bias = param(prefix + "ln1_bias");
  p.ffn1_weight = param(prefix + "ffn1_weight");
  p.ffn1_bias = param(prefix + "ffn1_bias");
  p.ffn2_weight = param(prefix + "ffn2_weight");
  p.ffn2_bias = param(prefix + "ffn2_bias");
  p.ln2_gain = param(prefix + "ln2_gain");
  p.ln2_bias = param(prefix + "ln2_bias");
  return p;
}

Tensor BoundModel::forward_tokens(const std::vector<int>& token_ids) const {
  for (int id : token_ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= model->config().vocab_size) {
      throw std::out_of_range("forward: token id out of range");
    }
  }
  return forward_embeddings(gather_rows(param("embeddings.token"), token_ids));
}

Tensor BoundModel::forward_embeddings(const Tensor& embeddings) const {
  const ModelConfig& c = model->config();
  if (embeddings.rank() != 2 || embeddings.shape()[1] != c.hidden_units) {
    throw std::invalid_argument("forward: embeddings must be (sequence, hidden), got " +
                                shape_str(embeddings.shape()));
  }
  const std::size_t seq = embeddings.shape()[0];
  if (seq > c.max_sequence_length) {
    throw std::invalid_argument("forward: sequence length " + std::to_string(seq) +
                                " exceeds maximum " + std::to_string(c.max_sequence_length));
  }
  Tensor h = add(embeddings, slice_rows(param("embeddings.position"), 0, seq));
  for (std::size_t i = 0; i < c.num_layers; ++i) {
    h = encoder_layer(h, encoder_params(i));
  }
  Tensor pooled = slice_rows(h, 0, 1);  // position-0 pooling
  Tensor logits = add(matmul(pooled, param("classifier.weight")),
                      bcast_cols(param("classifier.bias"), 1));
  return reshape(logits, {c.num_classes});
}

Tensor one_hot(std::size_t num_classes, std::size_t class_id) {
  if (class_id >= num_classes) throw std::out_of_range("one_hot: class id out of range");
  Tensor t(Shape{num_classes}, 0.0);
  t.mutable_values()[class_id] = 1.0;
  return t;
}

}  // namespace gradleak
