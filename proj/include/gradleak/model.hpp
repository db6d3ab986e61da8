#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gradleak/tensor.hpp"

namespace gradleak {

struct ModelConfig {
  std::size_t num_layers = 1;
  std::size_t hidden_units = 8;
  std::size_t num_heads = 1;
  std::size_t filter_size = 16;
  std::size_t vocab_size = 16;
  std::size_t max_sequence_length = 8;
  std::size_t num_classes = 2;

  void validate() const;
  std::size_t head_dim() const { return hidden_units / num_heads; }
  // Layer indices run 0 (embeddings) .. num_layers (blocks) .. num_layers+1
  // (classifier head); this ordering drives the alpha schedule.
  std::size_t num_layer_indices() const { return num_layers + 2; }
};

struct ParamEntry {
  std::string name;
  std::size_t layer_index = 0;
  Tensor tensor;
};

// Ordered, named model weights. Iteration order is insertion order and the
// layer index is nondecreasing along it.
class ParameterStore {
 public:
  void add(std::string name, std::size_t layer_index, Tensor tensor);
  const ParamEntry& entry(std::size_t i) const { return entries_.at(i); }
  const ParamEntry* find(const std::string& name) const;
  const Tensor& tensor(const std::string& name) const;
  std::size_t size() const { return entries_.size(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  std::vector<ParamEntry> entries_;
};

// Per-parameter gradients, structurally parallel to a ParameterStore.
struct GradientSet {
  std::vector<ParamEntry> entries;

  std::size_t size() const { return entries.size(); }
  bool structure_matches(const ParameterStore& store) const;
  bool structure_matches(const GradientSet& other) const;
};

// The parameter layout of one encoder block, as tracked or plain tensors.
struct AttentionParams {
  Tensor q_weight, q_bias;
  Tensor k_weight, k_bias;
  Tensor v_weight, v_bias;
  Tensor out_weight, out_bias;
  std::size_t num_heads = 1;
};

struct EncoderParams {
  AttentionParams attention;
  Tensor ln1_gain, ln1_bias;
  Tensor ffn1_weight, ffn1_bias;
  Tensor ffn2_weight, ffn2_bias;
  Tensor ln2_gain, ln2_bias;
  double epsilon = 1e-5;
};

// Scaled dot-product self-attention for one head:
// softmax(q k^T / sqrt(d_k)) v with q,k,v shaped (sequence, head_dim).
Tensor sdps_attention(const Tensor& q, const Tensor& k, const Tensor& v);

// Full-width q/k/v projections, per-head attention in the embedding
// subspaces, concatenation, output projection.
Tensor multi_head_attention(const Tensor& x, const AttentionParams& params);

// Post-norm encoder: layer_norm(x + MHA(x)) then layer_norm(. + FFN(.)),
// FFN = linear -> GELU -> linear.
Tensor encoder_layer(const Tensor& x, const EncoderParams& params);

// Encoder-only classifier over a ParameterStore with the canonical
// parameter naming produced by init_weights.
class TransformerClassifier {
 public:
  TransformerClassifier(ModelConfig config, ParameterStore store);

  const ModelConfig& config() const { return config_; }
  const ParameterStore& store() const { return store_; }
  const Tensor& token_embeddings() const { return store_.tensor("embeddings.token"); }

  // Embedding lookup only (no positions): rows of the token table.
  Tensor embed(const std::vector<int>& token_ids) const;

  // Logits, shape (num_classes,). The token-id path embeds and then runs
  // the embeddings path, so the two are bit-identical by construction.
  Tensor forward(const std::vector<int>& token_ids) const;
  Tensor forward(const Tensor& embeddings) const;

  // Gradient of cross_entropy(forward(X), target_scores) for every
  // parameter, ordered as the store.
  GradientSet gradient(const std::vector<int>& token_ids, const Tensor& target_scores) const;
  GradientSet gradient(const Tensor& embeddings, const Tensor& target_scores) const;

 private:
  friend struct BoundModel;
  void validate_store() const;

  ModelConfig config_;
  ParameterStore store_;
};

// Canonical parameter names and shapes for a config, in store order.
struct ParamSpec {
  std::string name;
  std::size_t layer_index;
  Shape shape;
  bool layer_norm_param;  // init to 1/0 instead of sampling
};
std::vector<ParamSpec> parameter_layout(const ModelConfig& config);

// A model whose parameters are registered as leaves of one graph, so that
// backward passes can reach them. Bind once per graph generation.
struct BoundModel {
  const TransformerClassifier* model = nullptr;
  std::vector<Tensor> params;  // tracked, store order

  static BoundModel bind(const TransformerClassifier& model, Graph& graph);

  const Tensor& param(const std::string& name) const;
  Tensor forward_embeddings(const Tensor& embeddings) const;
  Tensor forward_tokens(const std::vector<int>& token_ids) const;

 private:
  EncoderParams encoder_params(std::size_t block) const;
  std::vector<std::size_t> index_;  // store order -> params
};

// One-hot target scores for a class id.
Tensor one_hot(std::size_t num_classes, std::size_t class_id);

}  // namespace gradleak
