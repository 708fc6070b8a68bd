// Python bindings: dataset loading/synthesis, configuration, training,
// evaluation, scoring, and attention explanations, mirroring the CLI.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <filesystem>
#include <memory>
#include <stdexcept>
#include <unordered_map>

#include "kcan/eval.hpp"
#include "kcan/explain.hpp"
#include "kcan/synth.hpp"
#include "kcan/trainer.hpp"

namespace py = pybind11;
using namespace kcan;
namespace fs = std::filesystem;

namespace {

struct PyDataset {
  InteractionGraph inter;
  DataSplit split;
  std::shared_ptr<const UnifiedGraph> graph;
  std::unordered_map<std::string, int> user_index;
  std::unordered_map<std::string, int> item_index;

  static PyDataset load(const std::string& dir, uint64_t seed) {
    const fs::path base(dir);
    PyDataset d;
    d.inter = load_interactions((base / "interactions.tsv").string());
    const RawKg kg = load_triples((base / "triples.tsv").string());
    const Alignment align = load_alignment((base / "alignment.tsv").string());
    d.split = split_leave_one_out(d.inter, seed);
    d.graph = std::make_shared<UnifiedGraph>(unify(train_only(d.inter, d.split), kg, align));
    for (size_t u = 0; u < d.graph->user_names.size(); ++u)
      d.user_index.emplace(d.graph->user_names[u], static_cast<int>(u));
    for (size_t i = 0; i < d.graph->item_names.size(); ++i)
      d.item_index.emplace(d.graph->item_names[i], static_cast<int>(i));
    return d;
  }

  static PyDataset synthesize(const TrainConfig& cfg, const std::string& dir) {
    write_synth(cfg, dir);
    return load(dir, cfg.seed);
  }

  EntityId user_entity(const std::string& raw) const {
    const auto it = user_index.find(raw);
    if (it == user_index.end()) throw std::invalid_argument("unknown user '" + raw + "'");
    return graph->user_entity[it->second];
  }
  EntityId item_entity(const std::string& raw) const {
    const auto it = item_index.find(raw);
    if (it == item_index.end()) throw std::invalid_argument("unknown item '" + raw + "'");
    return graph->item_entity[it->second];
  }
};

struct PyModel {
  Model model;
  DataSplit split;
  // keeps name lookups alive for score()/explain()
  std::unordered_map<std::string, int> user_index, item_index;

  static PyModel create(const PyDataset& d, const TrainConfig& cfg) {
    PyModel m{make_model(d.graph, cfg), d.split, d.user_index, d.item_index};
    return m;
  }

  std::vector<std::tuple<int, int, double>> train_epochs() {
    TrainResult result;
    {
      py::gil_scoped_release release;
      result = train(model, split);
    }
    std::vector<std::tuple<int, int, double>> trace;
    trace.reserve(result.trace.size());
    for (const PhaseLoss& row : result.trace) trace.emplace_back(row.epoch, row.phase, row.loss);
    return trace;
  }

  EvalReport evaluate_split() const {
    py::gil_scoped_release release;
    return evaluate(model, split);
  }

  EntityId user_entity(const std::string& raw) const {
    const auto it = user_index.find(raw);
    if (it == user_index.end()) throw std::invalid_argument("unknown user '" + raw + "'");
    return model.graph->user_entity[it->second];
  }
  EntityId item_entity(const std::string& raw) const {
    const auto it = item_index.find(raw);
    if (it == item_index.end()) throw std::invalid_argument("unknown item '" + raw + "'");
    return model.graph->item_entity[it->second];
  }

  double score(const std::string& user, const std::string& item) const {
    return model.score(user_entity(user), item_entity(item));
  }

  std::vector<ExplainRecord> explain(const std::string& user, const std::string& item) const {
    return explain_target(model, user_entity(user), item_entity(item));
  }

  void save(const std::string& path) const {
    save_snapshot(model.store, model.cfg.hash(), id_map_hash(*model.graph), path);
  }

  static PyModel load(const PyDataset& d, const TrainConfig& cfg, const std::string& path) {
    PyModel m = create(d, cfg);
    const SnapshotInfo info = load_snapshot(m.model.store, path);
    if (info.config_hash != cfg.hash())
      throw std::invalid_argument("snapshot config fingerprint does not match this config");
    if (info.idmap_hash != id_map_hash(*d.graph))
      throw std::invalid_argument("snapshot id map does not match this dataset/split");
    m.model.refresh();
    return m;
  }
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() =
      "Knowledge-graph-aware recommender: attention-weighted propagation, "
      "target-conditioned subgraph refinement, pairwise ranking training.";

  py::enum_<Norm>(m, "Norm")
      .value("L1_SQUARED", Norm::kL1Squared)
      .value("L2_SQUARED", Norm::kL2Squared);

  py::enum_<Ablation>(m, "Ablation")
      .value("FULL", Ablation::kFull)
      .value("NO_LC", Ablation::kNoLc)
      .value("NO_GK", Ablation::kNoGk)
      .value("NO_BOTH", Ablation::kNoBoth);

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("embedding_dim", &TrainConfig::embedding_dim)
      .def_readwrite("tower", &TrainConfig::tower)
      .def_readwrite("output_dim", &TrainConfig::output_dim)
      .def_readwrite("hops", &TrainConfig::hops)
      .def_readwrite("neighbor_samples", &TrainConfig::neighbor_samples)
      .def_readwrite("learning_rate", &TrainConfig::learning_rate)
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("lambda_", &TrainConfig::lambda)
      .def_readwrite("dropout", &TrainConfig::dropout)
      .def_readwrite("kg_batch", &TrainConfig::kg_batch)
      .def_readwrite("target_batch", &TrainConfig::target_batch)
      .def_readwrite("norm", &TrainConfig::norm)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("ablation", &TrainConfig::ablation)
      .def_readwrite("threads", &TrainConfig::threads)
      .def_readwrite("synth_users", &TrainConfig::synth_users)
      .def_readwrite("synth_items", &TrainConfig::synth_items)
      .def_readwrite("synth_attributes", &TrainConfig::synth_attributes)
      .def_readwrite("synth_noise", &TrainConfig::synth_noise)
      .def_readwrite("dump_dir", &TrainConfig::dump_dir)
      .def("validate", &TrainConfig::validate)
      .def("serialize", &TrainConfig::serialize)
      .def("hash", &TrainConfig::hash)
      .def_static("from_file", &load_config, py::arg("path"))
      .def("__repr__", [](const TrainConfig& c) {
        return "<TrainConfig hash=" + std::to_string(c.hash()) + ">";
      });

  py::class_<EvalReport>(m, "EvalReport")
      .def_readonly("hit10", &EvalReport::hit10)
      .def_readonly("ndcg10", &EvalReport::ndcg10)
      .def_readonly("auc", &EvalReport::auc_value)
      .def_readonly("users_evaluated", &EvalReport::users_evaluated)
      .def_readonly("negative_shortfalls", &EvalReport::negative_shortfalls)
      .def_readonly("seed", &EvalReport::seed)
      .def_readonly("config_hash", &EvalReport::config_hash)
      .def("to_text", &EvalReport::to_text)
      .def("__repr__", [](const EvalReport& r) {
        return "<EvalReport hit10=" + std::to_string(r.hit10) +
               " ndcg10=" + std::to_string(r.ndcg10) + " auc=" + std::to_string(r.auc_value) + ">";
      });

  py::class_<ExplainRecord>(m, "ExplainRecord")
      .def_readonly("head", &ExplainRecord::head)
      .def_readonly("relation", &ExplainRecord::relation)
      .def_readonly("tail", &ExplainRecord::tail)
      .def_readonly("hop", &ExplainRecord::hop)
      .def_readonly("pi", &ExplainRecord::pi)
      .def_readonly("alpha", &ExplainRecord::alpha)
      .def_readonly("user", &ExplainRecord::user)
      .def_readonly("item", &ExplainRecord::item)
      .def("__repr__", [](const ExplainRecord& r) {
        return "<ExplainRecord " + r.head + " -[" + r.relation + "]-> " + r.tail +
               " alpha=" + std::to_string(r.alpha) + ">";
      });

  py::class_<PyDataset>(m, "Dataset")
      .def_static("load", &PyDataset::load, py::arg("directory"), py::arg("seed"),
                  "Load interactions.tsv / triples.tsv / alignment.tsv, split "
                  "leave-one-out, and unify the graphs (train edges only).")
      .def_static("synthesize", &PyDataset::synthesize, py::arg("config"), py::arg("directory"),
                  "Generate the planted-preference dataset, write it, and load it back.")
      .def_property_readonly("user_count",
                             [](const PyDataset& d) { return d.inter.user_count; })
      .def_property_readonly("item_count",
                             [](const PyDataset& d) { return d.inter.item_count; })
      .def_property_readonly("entity_count",
                             [](const PyDataset& d) { return d.graph->entity_count; })
      .def_property_readonly("relation_count",
                             [](const PyDataset& d) { return d.graph->relation_count; })
      .def_property_readonly("train_edge_count",
                             [](const PyDataset& d) { return d.split.train_edges.size(); })
      .def_property_readonly("test_edge_count",
                             [](const PyDataset& d) { return d.split.test_edges.size(); });

  py::class_<PyModel>(m, "Model")
      .def_static("create", &PyModel::create, py::arg("dataset"), py::arg("config"),
                  "Initialize a model on a dataset (parameters randomized from the seed).")
      .def_static("load", &PyModel::load, py::arg("dataset"), py::arg("config"), py::arg("path"),
                  "Restore a trained snapshot; the config and dataset fingerprints must match.")
      .def("train", &PyModel::train_epochs,
           "Run the configured number of alternating-phase epochs; returns the "
           "loss trace as (epoch, phase, loss) tuples.")
      .def("evaluate", &PyModel::evaluate_split,
           "Leave-one-out ranking metrics on the held-out interactions.")
      .def("score", &PyModel::score, py::arg("user"), py::arg("item"),
           "Deterministic relevance score for a raw user id and item id.")
      .def("explain", &PyModel::explain, py::arg("user"), py::arg("item"),
           "Edge-level attention records for one target pair.")
      .def("save", &PyModel::save, py::arg("path"))
      .def_property_readonly("config", [](const PyModel& m) { return m.model.cfg; });

  py::register_exception<DataError>(m, "DataError");
  py::register_exception<TrainDiverged>(m, "TrainDiverged");
}
