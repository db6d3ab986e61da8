#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gradleak/model.hpp"

namespace gradleak {

enum class DistanceMode { Tag, Dlg };
enum class StoppingRule { FixedBudget, OraclePlateau };

// Step-size schedule for the Adam updates. The norm-based distance keeps a
// non-vanishing gradient magnitude near its minimum, so a constant step
// dithers at a radius proportional to the learning rate; the linear decay
// anneals the iterates into the basin instead.
enum class LearningRateSchedule { Constant, LinearDecay };

struct AttackConfig {
  double learning_rate = 0.05;
  std::size_t max_iterations = 1000;
  DistanceMode mode = DistanceMode::Tag;
  // Defaults concentrate the L1 weight on the layers nearest the input,
  // where the per-position gradient signal lives; validated on the bundled
  // desk-scale experiments.
  double alpha_base = 1.0;   // alpha_0; ignored (0) in dlg mode
  double alpha_decay = 0.2;  // gamma, per layer index
  LearningRateSchedule schedule = LearningRateSchedule::LinearDecay;
  StoppingRule stopping = StoppingRule::FixedBudget;
  std::size_t plateau_patience = 200;
  std::uint64_t seed = 0;
  std::size_t sequence_length = 0;  // rows of X'
  std::size_t num_classes = 0;      // entries of Y'
  int unk_token_id = 0;             // target of zero-norm rows in projection

  void validate() const;
  // dlg mode forces the L1 coefficient to zero
  double effective_alpha_base() const { return mode == DistanceMode::Dlg ? 0.0 : alpha_base; }
  double learning_rate_at(std::size_t iteration) const;  // 0-based iteration
};

// The attack's optimization variables and their Adam moments.
struct DummyState {
  Tensor embeddings;  // X', (sequence, hidden), optimized
  Tensor label_scores;  // Y', (num_classes,), optimized
  Tensor m_embeddings, v_embeddings;
  Tensor m_labels, v_labels;
};

struct TraceRecord {
  std::size_t iteration = 0;
  double loss = 0.0;                 // distance D at this iteration
  std::vector<int> tokens;           // projection of X' after the update
  double recover_rate = -1.0;        // running best; -1 when no oracle
  double wall_seconds = 0.0;         // monotonic, excluded from golden output
};

struct AttackTrace {
  std::vector<TraceRecord> records;
  Tensor final_embeddings;   // X*
  Tensor final_label_scores; // Y*
  std::vector<int> recovered_tokens;
  int recovered_label = 0;
  bool diverged = false;
  std::string divergence_note;
  std::size_t iterations_run = 0;
};

// alpha(layer) = alpha_0 * gamma^layer_index: nonincreasing in depth so the
// layers nearest the input weigh most.
double alpha_schedule(std::size_t layer_index, std::size_t num_layers, double alpha_base,
                      double alpha_decay);

// Combined gradient-matching distance: per parameter p,
//   ||gA_p - gB_p||_2 + alpha(layer(p)) * ||gA_p - gB_p||_1,
// summed over parameters. Differentiable through whatever produced gA.
// `alphas` carries one coefficient per parameter, in store order.
Tensor gradient_distance(const std::vector<Tensor>& grads_a, const std::vector<Tensor>& grads_b,
                         const std::vector<double>& alphas);
Tensor gradient_distance(const GradientSet& a, const GradientSet& b,
                         const std::vector<double>& alphas);

// Per-parameter alpha coefficients for a model under a config.
std::vector<double> alpha_coefficients(const ParameterStore& store, std::size_t num_layer_indices,
                                       double alpha_base, double alpha_decay);

// One Adam step (beta1=0.9, beta2=0.999, eps=1e-8, bias correction, no decay)
// on both dummies; `iteration` is 1-based. Pure: returns the updated state.
DummyState adam_update(const DummyState& state, const Tensor& grad_embeddings,
                       const Tensor& grad_labels, double learning_rate, std::size_t iteration);

// Maps each X' row to the vocabulary id whose embedding row has the highest
// cosine similarity; ties break toward the lowest id; zero-norm X' rows map
// to unk_id.
std::vector<int> project_to_tokens(const Tensor& embeddings, const Tensor& embedding_matrix,
                                   int unk_id = 0);

// argmax of Y', ties toward the lowest id.
int recover_label(const Tensor& label_scores);

// The full gradient-matching loop: initialize X', Y' from N(0,1), then
// iterate dummy gradient -> distance -> Adam step on (X', Y'). The trace has
// one record per completed iteration. With oracle tokens and the plateau
// rule, stops once the matched-token count has not improved for
// plateau_patience iterations. A non-finite distance or update stops the
// attack and flags divergence, keeping the last finite state.
AttackTrace run_attack(const TransformerClassifier& model, const GradientSet& target_gradients,
                       const AttackConfig& config,
                       const std::optional<std::vector<int>>& oracle_tokens = std::nullopt);

}  // namespace gradleak
