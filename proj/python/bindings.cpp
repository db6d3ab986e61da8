// Python bindings for the main operations: weight init and persistence,
// tokenization, the transformer classifier, the gradient-matching attack,
// and the evaluation metrics.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include "gradleak/harness.hpp"

namespace py = pybind11;
using namespace gradleak;

namespace {

Tensor matrix_from_rows(const std::vector<std::vector<double>>& rows, const char* what) {
  if (rows.empty() || rows[0].empty()) throw std::invalid_argument(std::string(what) + ": empty matrix");
  const std::size_t n = rows.size(), m = rows[0].size();
  std::vector<double> flat;
  flat.reserve(n * m);
  for (const auto& row : rows) {
    if (row.size() != m) throw std::invalid_argument(std::string(what) + ": ragged rows");
    flat.insert(flat.end(), row.begin(), row.end());
  }
  return Tensor(Shape{n, m}, std::move(flat));
}

std::vector<std::vector<double>> rows_of(const Tensor& t) {
  std::vector<std::vector<double>> rows(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i) {
    for (std::size_t j = 0; j < t.cols(); ++j) rows[i][j] = t.at(i, j);
  }
  return rows;
}

py::dict trace_record_dict(const TraceRecord& r) {
  py::dict d;
  d["iter"] = r.iteration;
  d["loss"] = r.loss;
  d["tokens"] = r.tokens;
  if (r.recover_rate >= 0.0) {
    d["recover_rate"] = r.recover_rate;
  } else {
    d["recover_rate"] = py::none();
  }
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "gradient-leakage laboratory: reconstruct training text from transformer gradients";

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init([](std::size_t num_layers, std::size_t hidden_units, std::size_t num_heads,
                       std::size_t filter_size, std::size_t vocab_size,
                       std::size_t max_sequence_length, std::size_t num_classes) {
             ModelConfig c{num_layers, hidden_units, num_heads, filter_size,
                           vocab_size, max_sequence_length, num_classes};
             c.validate();
             return c;
           }),
           py::arg("num_layers") = 1, py::arg("hidden_units") = 8, py::arg("num_heads") = 1,
           py::arg("filter_size") = 16, py::arg("vocab_size") = 16,
           py::arg("max_sequence_length") = 8, py::arg("num_classes") = 2)
      .def_readwrite("num_layers", &ModelConfig::num_layers)
      .def_readwrite("hidden_units", &ModelConfig::hidden_units)
      .def_readwrite("num_heads", &ModelConfig::num_heads)
      .def_readwrite("filter_size", &ModelConfig::filter_size)
      .def_readwrite("vocab_size", &ModelConfig::vocab_size)
      .def_readwrite("max_sequence_length", &ModelConfig::max_sequence_length)
      .def_readwrite("num_classes", &ModelConfig::num_classes);

  py::class_<InitSpec>(m, "InitSpec")
      .def_static("normal", &InitSpec::normal, py::arg("mean"), py::arg("stddev"), py::arg("seed"))
      .def_static("uniform", &InitSpec::uniform, py::arg("range"), py::arg("seed"))
      .def_static("from_file", &InitSpec::from_file, py::arg("path"));

  py::class_<ParameterStore>(m, "ParameterStore")
      .def("__len__", &ParameterStore::size)
      .def("names",
           [](const ParameterStore& s) {
             std::vector<std::string> names;
             for (const auto& e : s) names.push_back(e.name);
             return names;
           })
      .def("tensor", [](const ParameterStore& s, const std::string& name) {
        return rows_of(s.tensor(name));
      });

  py::class_<GradientSet>(m, "GradientSet")
      .def("__len__", &GradientSet::size)
      .def("tensor", [](const GradientSet& g, const std::string& name) {
        for (const auto& e : g.entries) {
          if (e.name == name) return rows_of(e.tensor);
        }
        throw std::out_of_range("no gradient named '" + name + "'");
      });

  m.def("init_weights", &init_weights, py::arg("config"), py::arg("spec"));
  m.def("save_weights", &save_weights, py::arg("store"), py::arg("path"));
  m.def("load_weights", &load_weights, py::arg("path"));

  py::class_<Vocab>(m, "Vocab")
      .def("__len__", &Vocab::size)
      .def("token", [](const Vocab& v, std::size_t id) { return v.token(id); })
      .def("id_of", &Vocab::id_of)
      .def_property_readonly("unk_id", &Vocab::unk_id)
      .def("tokenize", [](const Vocab& v, const std::string& text) { return tokenize(text, v); })
      .def("detokenize",
           [](const Vocab& v, const std::vector<int>& ids) { return detokenize(ids, v); });
  m.def("load_vocab", &load_vocab, py::arg("path"));

  py::class_<TransformerClassifier>(m, "Model")
      .def(py::init<ModelConfig, ParameterStore>(), py::arg("config"), py::arg("store"))
      .def("forward",
           [](const TransformerClassifier& model, const std::vector<int>& ids) {
             return model.forward(ids).values();
           })
      .def("embed",
           [](const TransformerClassifier& model, const std::vector<int>& ids) {
             return rows_of(model.embed(ids));
           })
      .def("gradient",
           [](const TransformerClassifier& model, const std::vector<int>& ids, int label) {
             return model.gradient(ids, one_hot(model.config().num_classes,
                                                static_cast<std::size_t>(label)));
           })
      .def_property_readonly("store", &TransformerClassifier::store);

  m.def(
      "simulate_participant",
      [](const TransformerClassifier& model, const std::vector<int>& tokens, int label) {
        return simulate_participant(model, tokens, label);
      },
      py::arg("model"), py::arg("tokens"), py::arg("label"));

  py::enum_<DistanceMode>(m, "DistanceMode")
      .value("TAG", DistanceMode::Tag)
      .value("DLG", DistanceMode::Dlg);

  py::class_<AttackConfig>(m, "AttackConfig")
      .def(py::init<>())
      .def_readwrite("learning_rate", &AttackConfig::learning_rate)
      .def_readwrite("max_iterations", &AttackConfig::max_iterations)
      .def_readwrite("mode", &AttackConfig::mode)
      .def_readwrite("alpha_base", &AttackConfig::alpha_base)
      .def_readwrite("alpha_decay", &AttackConfig::alpha_decay)
      .def_readwrite("seed", &AttackConfig::seed)
      .def_readwrite("sequence_length", &AttackConfig::sequence_length)
      .def_readwrite("num_classes", &AttackConfig::num_classes)
      .def_readwrite("unk_token_id", &AttackConfig::unk_token_id);

  py::class_<AttackTrace>(m, "AttackTrace")
      .def_property_readonly("records",
                             [](const AttackTrace& t) {
                               py::list out;
                               for (const auto& r : t.records) out.append(trace_record_dict(r));
                               return out;
                             })
      .def_property_readonly("recovered_tokens",
                             [](const AttackTrace& t) { return t.recovered_tokens; })
      .def_property_readonly("recovered_label",
                             [](const AttackTrace& t) { return t.recovered_label; })
      .def_property_readonly("final_embeddings",
                             [](const AttackTrace& t) { return rows_of(t.final_embeddings); })
      .def_property_readonly("diverged", [](const AttackTrace& t) { return t.diverged; })
      .def_property_readonly("iterations", [](const AttackTrace& t) { return t.iterations_run; });

  m.def(
      "run_attack",
      [](const TransformerClassifier& model, const GradientSet& target, const AttackConfig& config,
         const std::optional<std::vector<int>>& oracle_tokens) {
        return run_attack(model, target, config, oracle_tokens);
      },
      py::arg("model"), py::arg("target"), py::arg("config"),
      py::arg("oracle_tokens") = py::none());

  m.def("recover_rate", &recover_rate, py::arg("recovered"), py::arg("truth"));
  m.def(
      "rouge_n",
      [](const std::vector<int>& recovered, const std::vector<int>& truth, std::size_t n) {
        const MetricValue v = rouge_n(recovered, truth, n);
        return py::make_tuple(v.percent, v.degenerate);
      },
      py::arg("recovered"), py::arg("truth"), py::arg("n"));
  m.def(
      "rouge_l",
      [](const std::vector<int>& recovered, const std::vector<int>& truth) {
        const MetricValue v = rouge_l(recovered, truth);
        return py::make_tuple(v.percent, v.degenerate);
      },
      py::arg("recovered"), py::arg("truth"));
  m.def(
      "embedding_similarity",
      [](const std::vector<std::vector<double>>& dummy,
         const std::vector<std::vector<double>>& truth) {
        const EmbeddingSimilarity s = embedding_similarity(matrix_from_rows(dummy, "dummy"),
                                                           matrix_from_rows(truth, "truth"));
        return py::make_tuple(s.value, s.degenerate);
      },
      py::arg("dummy"), py::arg("truth"));

  m.def(
      "run_experiment",
      [](const std::string& config_path) {
        const ExperimentResult r = run_experiment(ExperimentConfig::from_json_file(config_path));
        py::dict out;
        out["recover_rate"] = r.aggregate.recover_rate;
        out["rouge1"] = r.aggregate.rouge1;
        out["rouge2"] = r.aggregate.rouge2;
        out["rougeL"] = r.aggregate.rouge_l;
        out["embedding_cosine"] = r.aggregate.embedding_cosine;
        out["runtime_s"] = r.aggregate.runtime_seconds;
        out["reports"] = r.reports.size();
        return out;
      },
      py::arg("config_path"));
}
