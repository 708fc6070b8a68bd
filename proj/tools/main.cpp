// Command-line front end: dataset synthesis, training, evaluation, ablation
// and sensitivity sweeps, gradient checking, and attention explanations.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data error
// (unreadable/ill-formed files, fingerprint mismatch), 3 failed check or
// diverged training.

#include <unistd.h>

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kcan/eval.hpp"
#include "kcan/explain.hpp"
#include "kcan/gradcheck.hpp"
#include "kcan/synth.hpp"
#include "kcan/trainer.hpp"
#include "kcan/transh.hpp"

namespace fs = std::filesystem;
using namespace kcan;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitCheck = 3;

struct CommonOpts {
  std::string config_path;
  std::string data_dir;
  std::string out_path;
  std::string snapshot_path;
  uint64_t seed = 0;
  bool seed_set = false;
  std::string ablation;
};

void add_config_flags(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "key = value configuration file");
  auto* seed = cmd->add_option("--seed", opts.seed, "override the configured seed");
  seed->each([&opts](const std::string&) { opts.seed_set = true; });
}

TrainConfig resolve_config(const CommonOpts& opts) {
  TrainConfig cfg = opts.config_path.empty() ? TrainConfig{} : load_config(opts.config_path);
  if (opts.seed_set) cfg.seed = opts.seed;
  if (!opts.ablation.empty()) cfg.ablation = ablation_from_string(opts.ablation);
  cfg.validate();
  return cfg;
}

struct LoadedData {
  InteractionGraph inter;
  DataSplit split;
  std::shared_ptr<const UnifiedGraph> graph;
};

LoadedData load_dataset(const std::string& dir, uint64_t seed) {
  const fs::path base(dir);
  LoadedData d;
  d.inter = load_interactions((base / "interactions.tsv").string());
  const RawKg kg = load_triples((base / "triples.tsv").string());
  const Alignment align = load_alignment((base / "alignment.tsv").string());
  d.split = split_leave_one_out(d.inter, seed);
  d.graph = std::make_shared<UnifiedGraph>(unify(train_only(d.inter, d.split), kg, align));
  return d;
}

std::string hex_hash(uint64_t h) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

void write_file(const fs::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << body;
}

Model restore_model(const LoadedData& d, const TrainConfig& cfg, const std::string& snapshot) {
  Model model = make_model(d.graph, cfg);
  SnapshotInfo info;
  try {
    info = load_snapshot(model.store, snapshot);
  } catch (const DataError&) {
    throw;
  } catch (const std::runtime_error& e) {
    // unreadable or wrong-shape snapshot files are data problems, not crashes
    throw DataError(e.what());
  }
  if (info.config_hash != cfg.hash())
    throw DataError("snapshot was trained under config " + hex_hash(info.config_hash) +
                    " but the current config hashes to " + hex_hash(cfg.hash()));
  if (info.idmap_hash != id_map_hash(*d.graph))
    throw DataError("snapshot id map does not match this dataset/split");
  model.refresh();
  return model;
}

int cmd_synth(const CommonOpts& opts) {
  const TrainConfig cfg = resolve_config(opts);
  write_synth(cfg, opts.out_path);
  std::cout << "wrote " << opts.out_path << "/{interactions,triples,alignment}.tsv ("
            << cfg.synth_users << " users, " << cfg.synth_items << " items, "
            << cfg.synth_attributes << " attributes, noise " << cfg.synth_noise << ", seed "
            << cfg.seed << ")\n";
  return kExitOk;
}

int cmd_train(const CommonOpts& opts) {
  const TrainConfig cfg = resolve_config(opts);
  const LoadedData d = load_dataset(opts.data_dir, cfg.seed);

  Model model = make_model(d.graph, cfg);
  const TrainResult result = train(model, d.split);
  const EvalReport report = evaluate(model, d.split);

  const fs::path out(opts.out_path);
  fs::create_directories(out);
  write_file(out / "trace.csv", trace_to_csv(result.trace));
  write_file(out / "config.txt",
             cfg.serialize() + "# hash = " + hex_hash(cfg.hash()) + "\n");
  write_id_map(*d.graph, (out / "id_map.tsv").string());
  save_snapshot(model.store, cfg.hash(), id_map_hash(*d.graph), (out / "snapshot.bin").string());
  write_file(out / "report.txt", report.to_text());

  std::cout << report.to_text();
  std::cout << "artifacts written to " << out.string() << "\n";
  return kExitOk;
}

int cmd_eval(const CommonOpts& opts) {
  const TrainConfig cfg = resolve_config(opts);
  const LoadedData d = load_dataset(opts.data_dir, cfg.seed);
  const Model model = restore_model(d, cfg, opts.snapshot_path);
  const EvalReport report = evaluate(model, d.split);
  if (!opts.out_path.empty()) write_file(opts.out_path, report.to_text());
  std::cout << report.to_text();
  return kExitOk;
}

int cmd_ablate(const CommonOpts& opts, const std::vector<std::string>& variant_names) {
  const TrainConfig cfg = resolve_config(opts);
  const LoadedData d = load_dataset(opts.data_dir, cfg.seed);

  std::vector<Ablation> variants;
  if (variant_names.empty()) {
    variants = {Ablation::kFull, Ablation::kNoLc, Ablation::kNoGk, Ablation::kNoBoth};
  } else {
    for (const std::string& name : variant_names) variants.push_back(ablation_from_string(name));
  }
  const auto outcomes = run_ablation(d.graph, d.split, cfg, variants);

  std::string csv = "variant,hit10,ndcg10,auc,users,shortfalls,config_hash\n";
  for (const AblationOutcome& o : outcomes) {
    char row[256];
    std::snprintf(row, sizeof row, "%s,%.17g,%.17g,%.17g,%d,%d,", to_string(o.variant),
                  o.report.hit10, o.report.ndcg10, o.report.auc_value, o.report.users_evaluated,
                  o.report.negative_shortfalls);
    csv += row;
    csv += hex_hash(o.report.config_hash);
    csv += '\n';
  }
  if (!opts.out_path.empty()) write_file(opts.out_path, csv);
  std::cout << csv;
  return kExitOk;
}

int cmd_sweep(const CommonOpts& opts, const std::string& param) {
  const TrainConfig base = resolve_config(opts);

  struct Setting {
    double value;
    TrainConfig cfg;
  };
  std::vector<Setting> settings;
  if (param == "lambda") {
    for (const double v : {1e-1, 1e-2, 1e-3, 1e-4, 1e-5}) {
      TrainConfig c = base;
      c.lambda = v;
      settings.push_back({v, c});
    }
  } else if (param == "neighbor-samples") {
    for (const int v : {5, 10, 20, 30}) {
      TrainConfig c = base;
      c.neighbor_samples = v;
      settings.push_back({static_cast<double>(v), c});
    }
  } else {
    throw CLI::ValidationError("--param must be 'lambda' or 'neighbor-samples'");
  }

  const LoadedData d = load_dataset(opts.data_dir, base.seed);
  std::string csv = "param,value,hit10,ndcg10,auc,config_hash\n";
  for (const Setting& s : settings) {
    s.cfg.validate();
    Model model = make_model(d.graph, s.cfg);
    train(model, d.split);
    const EvalReport report = evaluate(model, d.split);
    char row[256];
    std::snprintf(row, sizeof row, "%s,%.17g,%.17g,%.17g,%.17g,", param.c_str(), s.value,
                  report.hit10, report.ndcg10, report.auc_value);
    csv += row;
    csv += hex_hash(report.config_hash);
    csv += '\n';
    std::cerr << param << " = " << s.value << " done\n";
  }
  if (!opts.out_path.empty()) write_file(opts.out_path, csv);
  std::cout << csv;
  return kExitOk;
}

// Composed-objective finite-difference check on a small generated instance:
// knowledge loss over every unified triple plus ranking loss over a pair
// batch plus the weight penalty, differentiated together.
int cmd_gradcheck(uint64_t seed, int probes, double tolerance) {
  TrainConfig cfg;
  cfg.seed = seed;
  cfg.synth_users = 6;
  cfg.synth_items = 6;
  cfg.synth_attributes = 2;
  cfg.synth_noise = 0.25;
  cfg.embedding_dim = 5;
  cfg.tower = {4, 3, 3};
  cfg.output_dim = 3;
  cfg.neighbor_samples = 3;
  cfg.dropout = 0.1;
  cfg.lambda = 1e-3;

  const fs::path dir =
      fs::temp_directory_path() / ("kcan_gradcheck_" + std::to_string(::getpid()));
  write_synth(cfg, dir.string());
  LoadedData d;
  try {
    d = load_dataset(dir.string(), cfg.seed);
  } catch (...) {
    fs::remove_all(dir);
    throw;
  }
  fs::remove_all(dir);
  const UnifiedGraph& g = *d.graph;

  ParameterStore store = init_params(cfg, g.entity_count, g.relation_count);
  const AttentionCache cache = build_attention_cache(g, store);

  // frozen corrupt tails, one per unified triple
  std::vector<KgExample> kg_batch;
  for (size_t i = 0; i < g.triples.size(); ++i) {
    const Triple& t = g.triples[i];
    Rng rng = make_stream(cfg.seed, StreamTag::kCorruptTail, 0, i);
    kg_batch.push_back({t.head, t.rel, t.tail, sample_corrupt_tail(g, t.head, t.rel, rng)});
  }
  // a handful of (user, held-out?, negative) ranking examples
  std::vector<TargetBatchItem> pairs;
  for (size_t i = 0; i < d.split.train_edges.size() && pairs.size() < 6; ++i) {
    const auto [u, item] = d.split.train_edges[i];
    Rng rng = make_stream(cfg.seed, StreamTag::kNegativeItem, 0, i);
    pairs.push_back(
        {g.user_entity[u], g.item_entity[item], sample_negative_item(g, g.user_entity[u], rng)});
  }
  const BatchStreams streams{cfg.seed, 0, 0, true};
  const DropoutSpec gspec{1.0 - cfg.dropout,
                          stream_seed(cfg.seed, StreamTag::kDropoutGlobal, 0, 0)};

  const LossEvaluator eval = [&](const ParameterStore& s, GradientSet* grads) {
    GradientSet local(s);
    GradientSet& sink = grads ? *grads : local;
    const double kg_part = kg_loss_batch(s, kg_batch, cfg.norm, sink);
    GlobalPropagation prop;
    kagcn_forward_all(g, cache, s, gspec, prop);
    SparseRowGrad d_inputs;
    d_inputs.resize_like(prop.out);
    PhaseTwoPool pool;
    const double target_part =
        target_loss_batch(g, cache, s, cfg, prop.out, pairs, streams, sink, d_inputs, pool);
    kagcn_backward_all(g, cache, s, prop, d_inputs, sink);
    add_l2_gradient(s, cfg.lambda, sink);
    return total_loss(kg_part, target_part, s, cfg.lambda);
  };

  const GradCheckReport report = grad_check(eval, store, probes, 1e-4, cfg.seed + 1);
  std::printf("max relative error %.3e over %d probes (tolerance %.0e)\n", report.max_rel_err,
              probes, tolerance);
  if (report.max_rel_err > tolerance) {
    std::printf("worst: %s[%d,%d] analytic %.10e numeric %.10e\n", report.worst_tensor.c_str(),
                report.worst_row, report.worst_col, report.worst_analytic, report.worst_numeric);
    return kExitCheck;
  }
  return kExitOk;
}

int cmd_explain(const CommonOpts& opts, const std::vector<std::string>& target) {
  const TrainConfig cfg = resolve_config(opts);
  const LoadedData d = load_dataset(opts.data_dir, cfg.seed);
  const Model model = restore_model(d, cfg, opts.snapshot_path);
  const UnifiedGraph& g = *d.graph;

  const auto find_id = [](const std::vector<std::string>& names, const std::string& raw,
                          const char* kind) {
    for (size_t k = 0; k < names.size(); ++k)
      if (names[k] == raw) return static_cast<int>(k);
    throw DataError(std::string("unknown ") + kind + " '" + raw + "'");
  };
  const EntityId user_ent = g.user_entity[find_id(g.user_names, target[0], "user")];
  const EntityId item_ent = g.item_entity[find_id(g.item_names, target[1], "item")];

  const auto records = explain_target(model, user_ent, item_ent);
  std::string body = "{\"config_hash\":\"" + hex_hash(cfg.hash()) + "\",\"user\":\"" + target[0] +
                     "\",\"item\":\"" + target[1] + "\",\"edges\":" +
                     std::to_string(records.size()) + "}\n";
  body += to_jsonl(records);
  if (!opts.out_path.empty()) write_file(opts.out_path, body);
  std::cout << body;
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Knowledge-graph-aware recommender: train and evaluate a two-tower "
      "ranking model with attention-weighted graph propagation and "
      "target-conditioned subgraph refinement."};
  app.require_subcommand(1);

  CommonOpts synth_opts, train_opts, eval_opts, ablate_opts, sweep_opts, explain_opts;
  std::vector<std::string> ablate_variants, explain_target_names;
  std::string sweep_param;
  uint64_t gradcheck_seed = 7;
  int gradcheck_probes = 400;
  double gradcheck_tol = 1e-4;

  CLI::App* synth = app.add_subcommand("synth", "generate a planted-preference dataset");
  add_config_flags(synth, synth_opts);
  synth->add_option("--out", synth_opts.out_path, "output directory")->required();

  CLI::App* train = app.add_subcommand("train", "train on a dataset directory");
  add_config_flags(train, train_opts);
  train->add_option("--data-dir", train_opts.data_dir, "directory with interactions.tsv, triples.tsv, alignment.tsv")
      ->required();
  train->add_option("--out", train_opts.out_path, "artifact directory (trace, snapshot, report)")
      ->required();
  train->add_option("--ablation", train_opts.ablation,
                    "variant: full | no_lc | no_gk | no_both");

  CLI::App* evalc = app.add_subcommand("eval", "evaluate a snapshot");
  add_config_flags(evalc, eval_opts);
  evalc->add_option("--data-dir", eval_opts.data_dir, "dataset directory")->required();
  evalc->add_option("--snapshot", eval_opts.snapshot_path, "snapshot.bin from train")->required();
  evalc->add_option("--out", eval_opts.out_path, "also write the report here");
  evalc->add_option("--ablation", eval_opts.ablation, "variant the snapshot was trained with");

  CLI::App* ablate = app.add_subcommand("ablate", "train and evaluate ablation variants");
  add_config_flags(ablate, ablate_opts);
  ablate->add_option("--data-dir", ablate_opts.data_dir, "dataset directory")->required();
  ablate->add_option("--out", ablate_opts.out_path, "CSV output path");
  ablate->add_option("--variants", ablate_variants,
                     "subset of: full no_lc no_gk no_both (default: all)");

  CLI::App* sweep = app.add_subcommand("sweep", "sensitivity sweep over one hyperparameter");
  add_config_flags(sweep, sweep_opts);
  sweep->add_option("--data-dir", sweep_opts.data_dir, "dataset directory")->required();
  sweep->add_option("--param", sweep_param, "lambda | neighbor-samples")->required();
  sweep->add_option("--out", sweep_opts.out_path, "CSV output path");

  CLI::App* gradcheck = app.add_subcommand(
      "gradcheck", "finite-difference check of the composed training objective");
  gradcheck->add_option("--seed", gradcheck_seed, "instance seed");
  gradcheck->add_option("--probes", gradcheck_probes, "parameters to probe");
  gradcheck->add_option("--tolerance", gradcheck_tol, "max relative error allowed");

  CLI::App* explain = app.add_subcommand("explain", "export attention weights for one pair");
  add_config_flags(explain, explain_opts);
  explain->add_option("--data-dir", explain_opts.data_dir, "dataset directory")->required();
  explain->add_option("--snapshot", explain_opts.snapshot_path, "snapshot.bin from train")
      ->required();
  explain->add_option("--target", explain_target_names, "raw user and item ids")
      ->expected(2)
      ->required();
  explain->add_option("--out", explain_opts.out_path, "JSONL output path");
  explain->add_option("--ablation", explain_opts.ablation, "variant the snapshot was trained with");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;  // 0 covers --help/--version
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_opts);
    if (train->parsed()) return cmd_train(train_opts);
    if (evalc->parsed()) return cmd_eval(eval_opts);
    if (ablate->parsed()) return cmd_ablate(ablate_opts, ablate_variants);
    if (sweep->parsed()) return cmd_sweep(sweep_opts, sweep_param);
    if (gradcheck->parsed())
      return cmd_gradcheck(gradcheck_seed, gradcheck_probes, gradcheck_tol);
    if (explain->parsed()) return cmd_explain(explain_opts, explain_target_names);
  } catch (const CLI::Error& e) {
    std::cerr << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const TrainDiverged& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return kExitCheck;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid configuration: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitCheck;
  }
  return kExitUsage;
}
