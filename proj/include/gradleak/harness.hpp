#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gradleak/attack.hpp"
#include "gradleak/init.hpp"
#include "gradleak/metrics.hpp"
#include "gradleak/model.hpp"
#include "gradleak/text.hpp"

namespace gradleak {

struct DataConfig {
  std::string vocab_path;
  std::string corpus_path;
  std::size_t num_sentences = 1;
  std::size_t truncate_length = 0;  // 0 = use full tokenized sentences
};

// Everything a run needs; the serialized form alone reproduces the outputs
// bit-for-bit apart from wall-time fields.
struct ExperimentConfig {
  int version = 1;
  std::string model_name = "tiny";
  std::string dataset_name = "short";
  ModelConfig model;
  InitSpec init;
  AttackConfig attack;  // per-pair fields (seed, sequence length, classes) filled at run time
  DataConfig data;
  std::vector<std::uint64_t> seeds;
  std::string out_dir;
  std::size_t workers = 0;  // 0 = one per hardware thread

  static ExperimentConfig from_json_file(const std::string& path);
  static ExperimentConfig from_json(const std::string& text);
  std::string to_json() const;
  void save_json(const std::string& path) const;
};

struct SentenceReport {
  std::size_t sentence_index = 0;
  std::uint64_t seed = 0;
  std::string sentence;
  int true_label = 0;
  int recovered_label = 0;
  std::vector<int> truth_tokens;
  std::vector<int> recovered_tokens;
  EvalReport eval;
  bool diverged = false;
  std::size_t iterations = 0;
};

struct ExperimentResult {
  std::vector<SentenceReport> reports;  // ordered by (sentence index, seed)
  EvalReport aggregate;                 // arithmetic mean of the reports
};

// Ground-truth gradient of the single-sentence loss; the stand-in for the
// gradient share a sync-SGD participant would publish.
GradientSet simulate_participant(const TransformerClassifier& model,
                                 const std::vector<int>& token_ids, int label);
GradientSet simulate_participant(const TransformerClassifier& model, const Vocab& vocab,
                                 const std::string& sentence, int label);

// Full pipeline: tokenize, simulate the participant, attack, evaluate.
// Writes per-pair traces (JSONL), loss curves (CSV), summary.csv and
// report.json under config.out_dir when it is non-empty.
ExperimentResult run_experiment(const ExperimentConfig& config);

enum class SweepAxis { WeightDistribution, VocabSize, SentenceLength, ModelSize, DistanceMode };

SweepAxis sweep_axis_from_string(const std::string& name);
std::string sweep_axis_name(SweepAxis axis);

struct SweepRow {
  std::string value;
  EvalReport aggregate;
};

struct SweepResult {
  SweepAxis axis = SweepAxis::DistanceMode;
  std::vector<SweepRow> rows;
};

// One experiment per axis value, merged into a single table. Sub-run
// outputs land under out_dir/<axis>=<value>/ and the merged table in
// out_dir/sweep.csv.
SweepResult sweep(const ExperimentConfig& config, SweepAxis axis,
                  const std::vector<std::string>& values);

// Applies one axis value to a config (exposed for tests).
ExperimentConfig apply_axis(const ExperimentConfig& config, SweepAxis axis,
                            const std::string& value);

std::string csv_summary_header();
std::string csv_summary_row(const std::string& model_name, const std::string& dataset_name,
                            const EvalReport& report);

}  // namespace gradleak
