#include "gradleak/harness.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace gradleak {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string init_kind_name(InitKind kind) {
  switch (kind) {
    case InitKind::Normal: return "normal";
    case InitKind::Uniform: return "uniform";
    case InitKind::FromFile: return "from-file";
  }
  return "normal";
}

InitKind init_kind_from(const std::string& name) {
  if (name == "normal") return InitKind::Normal;
  if (name == "uniform") return InitKind::Uniform;
  if (name == "from-file") return InitKind::FromFile;
  throw std::invalid_argument("config: unknown init kind '" + name + "'");
}

std::string mode_name(DistanceMode mode) { return mode == DistanceMode::Tag ? "tag" : "dlg"; }

DistanceMode mode_from(const std::string& name) {
  if (name == "tag") return DistanceMode::Tag;
  if (name == "dlg") return DistanceMode::Dlg;
  throw std::invalid_argument("config: unknown distance mode '" + name + "'");
}

std::string stopping_name(StoppingRule rule) {
  return rule == StoppingRule::FixedBudget ? "fixed-budget" : "oracle-plateau";
}

StoppingRule stopping_from(const std::string& name) {
  if (name == "fixed-budget") return StoppingRule::FixedBudget;
  if (name == "oracle-plateau") return StoppingRule::OraclePlateau;
  throw std::invalid_argument("config: unknown stopping rule '" + name + "'");
}

std::string schedule_name(LearningRateSchedule s) {
  return s == LearningRateSchedule::Constant ? "constant" : "linear-decay";
}

LearningRateSchedule schedule_from(const std::string& name) {
  if (name == "constant") return LearningRateSchedule::Constant;
  if (name == "linear-decay") return LearningRateSchedule::LinearDecay;
  throw std::invalid_argument("config: unknown learning-rate schedule '" + name + "'");
}

// Doubles print with enough digits to round-trip, so golden files are stable.
std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return from_json(buffer.str());
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  ordered_json j = ordered_json::parse(text);
  ExperimentConfig c;
  c.version = j.at("version").get<int>();
  if (c.version != 1) throw std::runtime_error("config: unsupported version " + std::to_string(c.version));
  c.model_name = j.value("model_name", std::string("model"));
  c.dataset_name = j.value("dataset_name", std::string("dataset"));

  const auto& jm = j.at("model");
  c.model.num_layers = jm.at("num_layers").get<std::size_t>();
  c.model.hidden_units = jm.at("hidden_units").get<std::size_t>();
  c.model.num_heads = jm.at("num_heads").get<std::size_t>();
  c.model.filter_size = jm.at("filter_size").get<std::size_t>();
  c.model.vocab_size = jm.at("vocab_size").get<std::size_t>();
  c.model.max_sequence_length = jm.at("max_sequence_length").get<std::size_t>();
  c.model.num_classes = jm.at("num_classes").get<std::size_t>();

  const auto& ji = j.at("init");
  c.init.kind = init_kind_from(ji.at("kind").get<std::string>());
  c.init.mean = ji.value("mean", 0.0);
  c.init.stddev = ji.value("stddev", 0.02);
  c.init.range = ji.value("range", 0.02);
  c.init.file_path = ji.value("path", std::string());
  c.init.seed = ji.value("seed", std::uint64_t{0});

  const auto& ja = j.at("attack");
  c.attack.learning_rate = ja.value("learning_rate", 0.05);
  c.attack.max_iterations = ja.value("max_iterations", std::size_t{1000});
  c.attack.mode = mode_from(ja.value("mode", std::string("tag")));
  c.attack.alpha_base = ja.value("alpha_base", 0.01);
  c.attack.alpha_decay = ja.value("alpha_decay", 0.85);
  c.attack.stopping = stopping_from(ja.value("stopping", std::string("fixed-budget")));
  c.attack.schedule = schedule_from(ja.value("schedule", std::string("linear-decay")));
  c.attack.plateau_patience = ja.value("plateau_patience", std::size_t{200});

  const auto& jd = j.at("data");
  c.data.vocab_path = jd.at("vocab").get<std::string>();
  c.data.corpus_path = jd.at("corpus").get<std::string>();
  c.data.num_sentences = jd.value("num_sentences", std::size_t{1});
  c.data.truncate_length = jd.value("truncate_length", std::size_t{0});

  c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  c.out_dir = j.value("out_dir", std::string());
  c.workers = j.value("workers", std::size_t{0});
  return c;
}

std::string ExperimentConfig::to_json() const {
  ordered_json j;
  j["version"] = version;
  j["model_name"] = model_name;
  j["dataset_name"] = dataset_name;
  j["model"] = {{"num_layers", model.num_layers},
                {"hidden_units", model.hidden_units},
                {"num_heads", model.num_heads},
                {"filter_size", model.filter_size},
                {"vocab_size", model.vocab_size},
                {"max_sequence_length", model.max_sequence_length},
                {"num_classes", model.num_classes}};
  ordered_json ji;
  ji["kind"] = init_kind_name(init.kind);
  if (init.kind == InitKind::Normal) {
    ji["mean"] = init.mean;
    ji["stddev"] = init.stddev;
  } else if (init.kind == InitKind::Uniform) {
    ji["range"] = init.range;
  } else {
    ji["path"] = init.file_path;
  }
  ji["seed"] = init.seed;
  j["init"] = ji;
  j["attack"] = {{"learning_rate", attack.learning_rate},
                 {"max_iterations", attack.max_iterations},
                 {"mode", mode_name(attack.mode)},
                 {"alpha_base", attack.alpha_base},
                 {"alpha_decay", attack.alpha_decay},
                 {"schedule", schedule_name(attack.schedule)},
                 {"stopping", stopping_name(attack.stopping)},
                 {"plateau_patience", attack.plateau_patience}};
  j["data"] = {{"vocab", data.vocab_path},
               {"corpus", data.corpus_path},
               {"num_sentences", data.num_sentences},
               {"truncate_length", data.truncate_length}};
  j["seeds"] = seeds;
  j["out_dir"] = out_dir;
  j["workers"] = workers;
  return j.dump(2) + "\n";
}

void ExperimentConfig::save_json(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write config file '" + path + "'");
  out << to_json();
}

GradientSet simulate_participant(const TransformerClassifier& model,
                                 const std::vector<int>& token_ids, int label) {
  if (token_ids.size() > model.config().max_sequence_length) {
    throw std::invalid_argument("simulate_participant: sentence of " +
                                std::to_string(token_ids.size()) +
                                " tokens exceeds the model maximum " +
                                std::to_string(model.config().max_sequence_length));
  }
  if (label < 0 || static_cast<std::size_t>(label) >= model.config().num_classes) {
    throw std::out_of_range("simulate_participant: label out of range");
  }
  return model.gradient(token_ids, one_hot(model.config().num_classes, static_cast<std::size_t>(label)));
}

GradientSet simulate_participant(const TransformerClassifier& model, const Vocab& vocab,
                                 const std::string& sentence, int label) {
  return simulate_participant(model, tokenize(sentence, vocab), label);
}

namespace {

struct PairTask {
  std::size_t sentence_index;
  std::uint64_t seed;
  std::vector<int> tokens;
  std::string sentence;
  int label;
};

struct PairOutcome {
  SentenceReport report;
  AttackTrace trace;
};

PairOutcome run_pair_inner(const TransformerClassifier& model, const ExperimentConfig& config,
                           const Vocab& vocab, const PairTask& task);

PairOutcome run_pair(const TransformerClassifier& model, const ExperimentConfig& config,
                     const Vocab& vocab, const PairTask& task) {
  try {
    return run_pair_inner(model, config, vocab, task);
  } catch (const std::exception& e) {
    throw std::runtime_error("sentence " + std::to_string(task.sentence_index) + " seed " +
                             std::to_string(task.seed) + ": " + e.what());
  }
}

PairOutcome run_pair_inner(const TransformerClassifier& model, const ExperimentConfig& config,
                           const Vocab& vocab, const PairTask& task) {
  GradientSet target = simulate_participant(model, task.tokens, task.label);

  AttackConfig attack = config.attack;
  attack.seed = task.seed;
  attack.sequence_length = task.tokens.size();
  attack.num_classes = model.config().num_classes;
  attack.unk_token_id = vocab.unk_id();

  AttackTrace trace = run_attack(model, target, attack, task.tokens);

  SentenceReport report;
  report.sentence_index = task.sentence_index;
  report.seed = task.seed;
  report.sentence = task.sentence;
  report.true_label = task.label;
  report.recovered_label = trace.recovered_label;
  report.truth_tokens = task.tokens;
  report.recovered_tokens = trace.recovered_tokens;
  report.diverged = trace.diverged;
  report.iterations = trace.iterations_run;

  report.eval.recover_rate =
      trace.records.empty() ? 0.0 : std::max(0.0, trace.records.back().recover_rate);
  report.eval.rouge1 = rouge_n(trace.recovered_tokens, task.tokens, 1).percent;
  report.eval.rouge2 = rouge_n(trace.recovered_tokens, task.tokens, 2).percent;
  report.eval.rouge_l = rouge_l(trace.recovered_tokens, task.tokens).percent;
  report.eval.runtime_seconds = trace.records.empty() ? 0.0 : trace.records.back().wall_seconds;

  Tensor truth_embeddings = model.embed(task.tokens);
  report.eval.embedding_cosine =
      embedding_similarity(trace.final_embeddings, truth_embeddings).value;
  return {std::move(report), std::move(trace)};
}

void write_trace_files(const std::string& out_dir, const PairTask& task, const AttackTrace& trace) {
  namespace fs = std::filesystem;
  const std::string stem = "s" + std::to_string(task.sentence_index) + "_seed" + std::to_string(task.seed);

  std::ofstream jsonl(fs::path(out_dir) / ("trace_" + stem + ".jsonl"), std::ios::trunc);
  for (const TraceRecord& r : trace.records) {
    ordered_json line;
    line["iter"] = r.iteration;
    line["loss"] = r.loss;
    line["tokens"] = r.tokens;
    if (r.recover_rate >= 0.0) {
      line["recover_rate"] = r.recover_rate;
    } else {
      line["recover_rate"] = nullptr;
    }
    jsonl << line.dump() << "\n";
  }

  std::ofstream curve(fs::path(out_dir) / ("loss_" + stem + ".csv"), std::ios::trunc);
  curve << "iteration,loss\n";
  for (const TraceRecord& r : trace.records) {
    curve << r.iteration << "," << format_double(r.loss) << "\n";
  }
}

EvalReport mean_report(const std::vector<SentenceReport>& reports) {
  EvalReport mean;
  if (reports.empty()) return mean;
  for (const auto& r : reports) {
    mean.recover_rate += r.eval.recover_rate;
    mean.rouge1 += r.eval.rouge1;
    mean.rouge2 += r.eval.rouge2;
    mean.rouge_l += r.eval.rouge_l;
    mean.embedding_cosine += r.eval.embedding_cosine;
    mean.runtime_seconds += r.eval.runtime_seconds;
  }
  const double n = static_cast<double>(reports.size());
  mean.recover_rate /= n;
  mean.rouge1 /= n;
  mean.rouge2 /= n;
  mean.rouge_l /= n;
  mean.embedding_cosine /= n;
  mean.runtime_seconds /= n;
  return mean;
}

ordered_json report_json(const SentenceReport& r) {
  ordered_json j;
  j["sentence_index"] = r.sentence_index;
  j["seed"] = r.seed;
  j["sentence"] = r.sentence;
  j["true_label"] = r.true_label;
  j["recovered_label"] = r.recovered_label;
  j["truth_tokens"] = r.truth_tokens;
  j["recovered_tokens"] = r.recovered_tokens;
  j["recover_rate"] = r.eval.recover_rate;
  j["rouge1"] = r.eval.rouge1;
  j["rouge2"] = r.eval.rouge2;
  j["rougeL"] = r.eval.rouge_l;
  j["embedding_cosine"] = r.eval.embedding_cosine;
  j["diverged"] = r.diverged;
  j["iterations"] = r.iterations;
  return j;
}

}  // namespace

std::string csv_summary_header() {
  return "model,dataset,recover_rate,rouge1,rouge2,rougeL,runtime_s";
}

std::string csv_summary_row(const std::string& model_name, const std::string& dataset_name,
                            const EvalReport& report) {
  std::ostringstream os;
  os << model_name << "," << dataset_name << "," << format_double(report.recover_rate) << ","
     << format_double(report.rouge1) << "," << format_double(report.rouge2) << ","
     << format_double(report.rouge_l) << "," << format_double(report.runtime_seconds);
  return os.str();
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.model.validate();
  config.init.validate();
  if (config.seeds.empty()) throw std::invalid_argument("experiment: at least one seed required");

  const Vocab vocab = load_vocab(config.data.vocab_path);
  if (vocab.size() != config.model.vocab_size) {
    throw std::invalid_argument("experiment: model vocab_size " +
                                std::to_string(config.model.vocab_size) + " != vocab file size " +
                                std::to_string(vocab.size()));
  }
  const Corpus corpus = load_corpus(config.data.corpus_path);
  if (corpus.entries.size() < config.data.num_sentences) {
    throw std::invalid_argument("experiment: corpus has " + std::to_string(corpus.entries.size()) +
                                " sentences, config wants " + std::to_string(config.data.num_sentences));
  }

  const TransformerClassifier model(config.model, init_weights(config.model, config.init));

  std::vector<PairTask> tasks;
  for (std::size_t s = 0; s < config.data.num_sentences; ++s) {
    const CorpusEntry& entry = corpus.entries[s];
    PairTask base;
    base.sentence_index = s;
    base.sentence = entry.text;
    base.label = entry.label;
    base.tokens = tokenize(entry.text, vocab);
    if (config.data.truncate_length > 0 && base.tokens.size() > config.data.truncate_length) {
      base.tokens.resize(config.data.truncate_length);
    }
    for (std::uint64_t seed : config.seeds) {
      PairTask t = base;
      t.seed = seed;
      tasks.push_back(std::move(t));
    }
  }

  // Fan out over (sentence, seed) pairs; each worker owns its attack
  // instance and results land in their slot, so merge order is fixed.
  std::vector<PairOutcome> outcomes(tasks.size());
  std::size_t worker_count = config.workers > 0
                                 ? config.workers
                                 : std::max<std::size_t>(1, std::thread::hardware_concurrency());
  worker_count = std::min(worker_count, tasks.size());
  std::atomic<std::size_t> cursor{0};
  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> worker_errors(worker_count);
  for (std::size_t w = 0; w < worker_count; ++w) {
    workers.emplace_back([&, w]() {
      try {
        while (true) {
          const std::size_t i = cursor.fetch_add(1);
          if (i >= tasks.size()) break;
          outcomes[i] = run_pair(model, config, vocab, tasks[i]);
        }
      } catch (...) {
        worker_errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : workers) t.join();
  for (const auto& err : worker_errors) {
    if (err) std::rethrow_exception(err);
  }

  ExperimentResult result;
  result.reports.reserve(outcomes.size());
  for (const auto& o : outcomes) result.reports.push_back(o.report);
  result.aggregate = mean_report(result.reports);

  if (!config.out_dir.empty()) {
    namespace fs = std::filesystem;
    fs::create_directories(config.out_dir);
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      write_trace_files(config.out_dir, tasks[i], outcomes[i].trace);
    }
    std::ofstream summary(fs::path(config.out_dir) / "summary.csv", std::ios::trunc);
    summary << csv_summary_header() << "\n"
            << csv_summary_row(config.model_name, config.dataset_name, result.aggregate) << "\n";

    ordered_json j;
    j["model"] = config.model_name;
    j["dataset"] = config.dataset_name;
    j["sentences"] = ordered_json::array();
    for (const auto& r : result.reports) j["sentences"].push_back(report_json(r));
    j["aggregate"] = {{"recover_rate", result.aggregate.recover_rate},
                      {"rouge1", result.aggregate.rouge1},
                      {"rouge2", result.aggregate.rouge2},
                      {"rougeL", result.aggregate.rouge_l},
                      {"embedding_cosine", result.aggregate.embedding_cosine}};
    std::ofstream report(fs::path(config.out_dir) / "report.json", std::ios::trunc);
    report << j.dump(2) << "\n";
  }
  return result;
}

SweepAxis sweep_axis_from_string(const std::string& name) {
  if (name == "weight-distribution") return SweepAxis::WeightDistribution;
  if (name == "vocab-size") return SweepAxis::VocabSize;
  if (name == "sentence-length") return SweepAxis::SentenceLength;
  if (name == "model-size") return SweepAxis::ModelSize;
  if (name == "distance-mode") return SweepAxis::DistanceMode;
  throw std::invalid_argument("sweep: unknown axis '" + name + "'");
}

std::string sweep_axis_name(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::WeightDistribution: return "weight-distribution";
    case SweepAxis::VocabSize: return "vocab-size";
    case SweepAxis::SentenceLength: return "sentence-length";
    case SweepAxis::ModelSize: return "model-size";
    case SweepAxis::DistanceMode: return "distance-mode";
  }
  return "distance-mode";
}

namespace {

// Named desk-scale model presets for the model-size axis; data-dependent
// extents (vocab, sequence, classes) stay as configured.
ModelConfig model_preset(const std::string& name, const ModelConfig& base) {
  ModelConfig m = base;
  if (name == "nano") {
    m.num_layers = 1; m.hidden_units = 8; m.num_heads = 1; m.filter_size = 16;
  } else if (name == "micro") {
    m.num_layers = 1; m.hidden_units = 16; m.num_heads = 2; m.filter_size = 32;
  } else if (name == "tiny") {
    m.num_layers = 2; m.hidden_units = 16; m.num_heads = 2; m.filter_size = 32;
  } else if (name == "small") {
    m.num_layers = 2; m.hidden_units = 32; m.num_heads = 4; m.filter_size = 64;
  } else {
    throw std::invalid_argument("sweep: unknown model preset '" + name + "'");
  }
  return m;
}

InitSpec parse_distribution(const std::string& value, std::uint64_t seed) {
  const auto colon = value.find(':');
  if (colon == std::string::npos) throw std::invalid_argument("sweep: expected 'normal:<stddev>' or 'uniform:<range>'");
  const std::string kind = value.substr(0, colon);
  const double param = std::stod(value.substr(colon + 1));
  if (kind == "normal") return InitSpec::normal(0.0, param, seed);
  if (kind == "uniform") return InitSpec::uniform(param, seed);
  throw std::invalid_argument("sweep: unknown distribution '" + kind + "'");
}

}  // namespace

ExperimentConfig apply_axis(const ExperimentConfig& config, SweepAxis axis,
                            const std::string& value) {
  ExperimentConfig next = config;
  switch (axis) {
    case SweepAxis::WeightDistribution:
      next.init = parse_distribution(value, config.init.seed);
      break;
    case SweepAxis::VocabSize: {
      const std::size_t size = std::stoul(value);
      namespace fs = std::filesystem;
      const fs::path dir = fs::path(config.data.vocab_path).parent_path();
      next.data.vocab_path = (dir / ("vocab" + std::to_string(size) + ".txt")).string();
      next.model.vocab_size = size;
      break;
    }
    case SweepAxis::SentenceLength:
      next.data.truncate_length = std::stoul(value);
      break;
    case SweepAxis::ModelSize:
      next.model = model_preset(value, config.model);
      next.model_name = value;
      break;
    case SweepAxis::DistanceMode:
      next.attack.mode = mode_from(value);
      break;
  }
  return next;
}

SweepResult sweep(const ExperimentConfig& config, SweepAxis axis,
                  const std::vector<std::string>& values) {
  if (values.empty()) throw std::invalid_argument("sweep: no axis values");
  SweepResult result;
  result.axis = axis;
  for (const std::string& value : values) {
    ExperimentConfig run_config = apply_axis(config, axis, value);
    if (!config.out_dir.empty()) {
      namespace fs = std::filesystem;
      run_config.out_dir =
          (fs::path(config.out_dir) / (sweep_axis_name(axis) + "=" + value)).string();
    }
    ExperimentResult r = run_experiment(run_config);
    result.rows.push_back({value, r.aggregate});
  }
  if (!config.out_dir.empty()) {
    namespace fs = std::filesystem;
    fs::create_directories(config.out_dir);
    std::ofstream table(fs::path(config.out_dir) / "sweep.csv", std::ios::trunc);
    table << "axis,value," << csv_summary_header() << "\n";
    for (const SweepRow& row : result.rows) {
      table << sweep_axis_name(axis) << "," << row.value << ","
            << csv_summary_row(config.model_name, config.dataset_name, row.aggregate) << "\n";
    }
  }
  return result;
}

}  // namespace gradleak
