// Command-line driver: single-sentence attacks, config-file experiments,
// ablation sweeps, and metric scoring of token files.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "gradleak/harness.hpp"

using namespace gradleak;

namespace {

#ifndef GRADLEAK_DATA_DIR
#define GRADLEAK_DATA_DIR "data"
#endif

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::string mode;
  std::optional<std::size_t> max_iters;
  std::optional<double> alpha0;
  std::optional<double> gamma;
  std::string data_dir = GRADLEAK_DATA_DIR;
};

void add_common_flags(CLI::App* cmd, CommonFlags* flags) {
  cmd->add_option("--config", flags->config_path, "experiment config file (json)");
  cmd->add_option("--seed", flags->seed, "attack seed (replaces the config's seed list)");
  cmd->add_option("--out", flags->out_dir, "output directory");
  cmd->add_option("--mode", flags->mode, "distance mode: tag | dlg")
      ->check(CLI::IsMember({"tag", "dlg"}));
  cmd->add_option("--max-iters", flags->max_iters, "iteration budget");
  cmd->add_option("--alpha0", flags->alpha0, "base L1 coefficient alpha_0");
  cmd->add_option("--gamma", flags->gamma, "per-layer alpha decay");
  cmd->add_option("--data-dir", flags->data_dir, "bundled data directory");
}

ExperimentConfig default_config(const std::string& data_dir) {
  ExperimentConfig c;
  c.model_name = "nano";
  c.dataset_name = "short";
  c.model.num_layers = 1;
  c.model.hidden_units = 8;
  c.model.num_heads = 1;
  c.model.filter_size = 16;
  c.model.vocab_size = 200;
  c.model.max_sequence_length = 24;
  c.model.num_classes = 2;
  c.init = InitSpec::normal(0.0, 0.02, 1);
  c.data.vocab_path = data_dir + "/vocab200.txt";
  c.data.corpus_path = data_dir + "/corpus_short.tsv";
  c.data.num_sentences = 3;
  c.seeds = {1, 2, 3};
  return c;
}

ExperimentConfig resolve_config(const CommonFlags& flags) {
  ExperimentConfig c = flags.config_path.empty() ? default_config(flags.data_dir)
                                                 : ExperimentConfig::from_json_file(flags.config_path);
  if (flags.seed) c.seeds = {*flags.seed};
  if (!flags.out_dir.empty()) c.out_dir = flags.out_dir;
  if (!flags.mode.empty()) {
    c.attack.mode = flags.mode == "dlg" ? DistanceMode::Dlg : DistanceMode::Tag;
  }
  if (flags.max_iters) c.attack.max_iterations = *flags.max_iters;
  if (flags.alpha0) c.attack.alpha_base = *flags.alpha0;
  if (flags.gamma) c.attack.alpha_decay = *flags.gamma;
  return c;
}

void print_report_line(const SentenceReport& r, const Vocab& vocab) {
  std::cout << "sentence " << r.sentence_index << " seed " << r.seed << ": recover_rate "
            << r.eval.recover_rate << "% rouge1 " << r.eval.rouge1 << " rouge2 " << r.eval.rouge2
            << " rougeL " << r.eval.rouge_l << " cosine " << r.eval.embedding_cosine << " ("
            << r.iterations << " iterations";
  if (r.diverged) std::cout << ", diverged";
  std::cout << ")\n";
  std::cout << "  truth:     " << detokenize(r.truth_tokens, vocab) << "\n";
  std::cout << "  recovered: " << detokenize(r.recovered_tokens, vocab) << "\n";
}

int run_attack_command(const CommonFlags& flags, const std::string& sentence, int label) {
  ExperimentConfig c = resolve_config(flags);
  Vocab vocab = load_vocab(c.data.vocab_path);
  if (vocab.size() != c.model.vocab_size) {
    throw std::runtime_error("model vocab_size does not match the vocab file");
  }
  TransformerClassifier model(c.model, init_weights(c.model, c.init));
  const std::vector<int> tokens = tokenize(sentence, vocab);
  GradientSet target = simulate_participant(model, tokens, label);

  AttackConfig attack = c.attack;
  attack.seed = c.seeds.empty() ? 1 : c.seeds.front();
  attack.sequence_length = tokens.size();
  attack.num_classes = c.model.num_classes;
  attack.unk_token_id = vocab.unk_id();
  AttackTrace trace = run_attack(model, target, attack, tokens);

  const double rr = trace.records.empty() ? 0.0 : trace.records.back().recover_rate;
  std::cout << "tokens:        " << detokenize(tokens, vocab) << "\n";
  std::cout << "recovered:     " << detokenize(trace.recovered_tokens, vocab) << "\n";
  std::cout << "recover rate:  " << rr << "%\n";
  std::cout << "rouge-1/2/L:   " << rouge_n(trace.recovered_tokens, tokens, 1).percent << " / "
            << rouge_n(trace.recovered_tokens, tokens, 2).percent << " / "
            << rouge_l(trace.recovered_tokens, tokens).percent << "\n";
  std::cout << "label:         true " << label << ", recovered " << trace.recovered_label << "\n";
  std::cout << "iterations:    " << trace.iterations_run;
  if (trace.diverged) std::cout << " (diverged: " << trace.divergence_note << ")";
  std::cout << "\n";

  if (!c.out_dir.empty()) {
    namespace fs = std::filesystem;
    fs::create_directories(c.out_dir);
    std::ofstream jsonl(fs::path(c.out_dir) / "trace.jsonl", std::ios::trunc);
    for (const TraceRecord& r : trace.records) {
      nlohmann::ordered_json line;
      line["iter"] = r.iteration;
      line["loss"] = r.loss;
      line["tokens"] = r.tokens;
      if (r.recover_rate >= 0) {
        line["recover_rate"] = r.recover_rate;
      } else {
        line["recover_rate"] = nullptr;
      }
      jsonl << line.dump() << "\n";
    }
    std::cout << "trace written to " << (fs::path(c.out_dir) / "trace.jsonl").string() << "\n";
  }
  return 0;
}

int run_experiment_command(const CommonFlags& flags) {
  ExperimentConfig c = resolve_config(flags);
  Vocab vocab = load_vocab(c.data.vocab_path);
  ExperimentResult result = run_experiment(c);
  for (const auto& r : result.reports) print_report_line(r, vocab);
  std::cout << csv_summary_header() << "\n"
            << csv_summary_row(c.model_name, c.dataset_name, result.aggregate) << "\n";
  if (!c.out_dir.empty()) std::cout << "outputs written to " << c.out_dir << "\n";
  return 0;
}

int run_sweep_command(const CommonFlags& flags, const std::string& axis_name,
                      const std::vector<std::string>& values) {
  ExperimentConfig c = resolve_config(flags);
  const SweepAxis axis = sweep_axis_from_string(axis_name);
  SweepResult result = sweep(c, axis, values);
  std::cout << "axis,value," << csv_summary_header() << "\n";
  for (const auto& row : result.rows) {
    std::cout << sweep_axis_name(axis) << "," << row.value << ","
              << csv_summary_row(c.model_name, c.dataset_name, row.aggregate) << "\n";
  }
  if (!c.out_dir.empty()) std::cout << "outputs written to " << c.out_dir << "\n";
  return 0;
}

// Token files are whitespace-separated strings; equality is all the metrics
// need, so tokens are interned to dense ids.
std::vector<int> read_token_file(const std::string& path, std::map<std::string, int>* intern) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open token file '" + path + "'");
  std::vector<int> ids;
  std::string token;
  while (in >> token) {
    auto [it, inserted] = intern->emplace(token, static_cast<int>(intern->size()));
    ids.push_back(it->second);
  }
  return ids;
}

int run_metrics_command(const std::string& recovered_path, const std::string& truth_path) {
  std::map<std::string, int> intern;
  const std::vector<int> recovered = read_token_file(recovered_path, &intern);
  const std::vector<int> truth = read_token_file(truth_path, &intern);
  std::cout << "recover_rate," << recover_rate(recovered, truth) << "\n";
  const MetricValue r1 = rouge_n(recovered, truth, 1);
  const MetricValue r2 = rouge_n(recovered, truth, 2);
  const MetricValue rl = rouge_l(recovered, truth);
  std::cout << "rouge1," << r1.percent << (r1.degenerate ? ",degenerate" : "") << "\n";
  std::cout << "rouge2," << r2.percent << (r2.degenerate ? ",degenerate" : "") << "\n";
  std::cout << "rougeL," << rl.percent << (rl.degenerate ? ",degenerate" : "") << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gradient-leakage laboratory for transformer text classifiers"};
  app.require_subcommand(1);

  CommonFlags attack_flags;
  std::string sentence;
  int label = 0;
  CLI::App* attack_cmd = app.add_subcommand("attack", "attack a single sentence's gradients");
  add_common_flags(attack_cmd, &attack_flags);
  attack_cmd->add_option("--sentence", sentence, "the private sentence to reconstruct")->required();
  attack_cmd->add_option("--label", label, "the sentence's class label");

  CommonFlags exp_flags;
  CLI::App* exp_cmd = app.add_subcommand("experiment", "run a config-file experiment");
  add_common_flags(exp_cmd, &exp_flags);

  CommonFlags sweep_flags;
  std::string axis;
  std::vector<std::string> values;
  CLI::App* sweep_cmd = app.add_subcommand("sweep", "sweep one experiment axis");
  add_common_flags(sweep_cmd, &sweep_flags);
  sweep_cmd->add_option("--axis", axis,
                        "weight-distribution | vocab-size | sentence-length | model-size | "
                        "distance-mode")
      ->required();
  sweep_cmd->add_option("--values", values, "axis values")->required()->delimiter(',');

  std::string recovered_path, truth_path;
  CLI::App* metrics_cmd = app.add_subcommand("metrics", "score two token files");
  metrics_cmd->add_option("recovered", recovered_path, "recovered token file")->required();
  metrics_cmd->add_option("truth", truth_path, "ground-truth token file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*attack_cmd) return run_attack_command(attack_flags, sentence, label);
    if (*exp_cmd) return run_experiment_command(exp_flags);
    if (*sweep_cmd) return run_sweep_command(sweep_flags, axis, values);
    if (*metrics_cmd) return run_metrics_command(recovered_path, truth_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
