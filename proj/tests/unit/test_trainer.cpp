#include <doctest.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>

#include "helpers.hpp"
#include "kcan/synth.hpp"
#include "kcan/trainer.hpp"

using namespace kcan;
namespace fs = std::filesystem;

namespace {

struct Fixture {
  std::shared_ptr<const UnifiedGraph> graph;
  DataSplit split;
};

Fixture synth_fixture(const TrainConfig& cfg) {
  const fs::path dir = fs::temp_directory_path() / ("kcan_trainer_" + std::to_string(cfg.seed) +
                                                    "_" + std::to_string(cfg.synth_users));
  fs::remove_all(dir);
  write_synth(cfg, dir.string());
  const InteractionGraph inter = load_interactions((dir / "interactions.tsv").string());
  const RawKg kg = load_triples((dir / "triples.tsv").string());
  const Alignment align = load_alignment((dir / "alignment.tsv").string());
  fs::remove_all(dir);
  Fixture f;
  f.split = split_leave_one_out(inter, cfg.seed);
  f.graph = std::make_shared<UnifiedGraph>(unify(train_only(inter, f.split), kg, align));
  return f;
}

TrainConfig tiny_cfg() {
  TrainConfig cfg;
  cfg.seed = 33;
  cfg.synth_users = 14;
  cfg.synth_items = 10;
  cfg.synth_attributes = 2;
  cfg.synth_noise = 0.15;
  cfg.embedding_dim = 6;
  cfg.tower = {6, 4, 4};
  cfg.output_dim = 4;
  cfg.neighbor_samples = 5;
  cfg.epochs = 3;
  cfg.kg_batch = 16;
  cfg.target_batch = 8;
  cfg.learning_rate = 0.02;
  return cfg;
}

}  // namespace

TEST_CASE("zero epochs leave the initialization untouched") {
  const TrainConfig base = tiny_cfg();
  const Fixture f = synth_fixture(base);
  TrainConfig cfg = base;
  cfg.epochs = 0;
  Model model = make_model(f.graph, cfg);
  const std::vector<double> before = model.store.entity_emb.value.data;
  const TrainResult result = train(model, f.split);
  CHECK(result.trace.empty());
  CHECK(model.store.entity_emb.value.data == before);
  CHECK(model.store.step == 0);
}

TEST_CASE("trace covers both phases of every epoch and the loss drops") {
  TrainConfig cfg = tiny_cfg();
  cfg.epochs = 12;
  const Fixture f = synth_fixture(cfg);
  Model model = make_model(f.graph, cfg);
  const TrainResult result = train(model, f.split);

  REQUIRE(result.trace.size() == 2u * 12u);
  for (size_t i = 0; i < result.trace.size(); ++i) {
    const PhaseLoss& row = result.trace[i];
    CHECK(row.epoch == static_cast<int>(i / 2));
    CHECK(row.phase == (i % 2 == 0 ? 1 : 2));
    CHECK(std::isfinite(row.loss));
    CHECK(row.loss >= 0.0);
  }
  const auto phase_mean = [&](int phase, size_t from, size_t count) {
    double sum = 0.0;
    size_t seen = 0;
    for (const PhaseLoss& row : result.trace)
      if (row.phase == phase) {
        if (seen >= from && seen < from + count) sum += row.loss;
        ++seen;
      }
    return sum / static_cast<double>(count);
  };
  CHECK(phase_mean(1, 10, 2) < phase_mean(1, 0, 2));
  CHECK(phase_mean(2, 10, 2) < phase_mean(2, 0, 2));
}

TEST_CASE("training is bit-for-bit reproducible") {
  const TrainConfig cfg = tiny_cfg();
  const Fixture f = synth_fixture(cfg);

  const auto run = [&](int threads) {
    TrainConfig c = cfg;
    c.threads = threads;
    Model model = make_model(f.graph, c);
    const TrainResult result = train(model, f.split);
    return std::make_pair(trace_to_csv(result.trace), evaluate(model, f.split).to_text());
  };

  const auto [trace1, report1] = run(1);

  SUBCASE("same seed, same thread count") {
    const auto [trace2, report2] = run(1);
    CHECK(trace1 == trace2);
    CHECK(report1 == report2);
  }
  SUBCASE("same seed, different thread count") {
    const auto [trace2, report2] = run(2);
    CHECK(trace1 == trace2);
    CHECK(report1 == report2);
  }
  SUBCASE("a different seed actually changes the run") {
    TrainConfig other = cfg;
    other.seed = cfg.seed + 1;
    const Fixture f2 = synth_fixture(other);
    Model model = make_model(f2.graph, other);
    const TrainResult result = train(model, f2.split);
    CHECK(trace_to_csv(result.trace) != trace1);
  }
}

TEST_CASE("trace serialization round-trips through CSV") {
  const std::vector<PhaseLoss> trace = {{0, 1, 0.5}, {0, 2, 1.0 / 3.0}, {1, 1, 0.25}};
  const std::string csv = trace_to_csv(trace);
  std::istringstream in(csv);
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line == "epoch,phase,loss");
  size_t row = 0;
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    std::string epoch, phase, loss;
    std::getline(fields, epoch, ',');
    std::getline(fields, phase, ',');
    std::getline(fields, loss, ',');
    REQUIRE(row < trace.size());
    CHECK(std::stoi(epoch) == trace[row].epoch);
    CHECK(std::stoi(phase) == trace[row].phase);
    CHECK(std::stod(loss) == trace[row].loss);  // %.17g is lossless for doubles
    ++row;
  }
  CHECK(row == trace.size());
}

TEST_CASE("ablation variants share the data and differ only in the flag") {
  TrainConfig cfg = tiny_cfg();
  cfg.epochs = 2;
  const Fixture f = synth_fixture(cfg);
  const Ablation variants[] = {Ablation::kFull, Ablation::kNoLc, Ablation::kNoGk,
                               Ablation::kNoBoth};
  const auto outcomes = run_ablation(f.graph, f.split, cfg, variants);
  REQUIRE(outcomes.size() == 4);
  for (size_t i = 0; i < outcomes.size(); ++i) {
    CHECK(outcomes[i].variant == variants[i]);
    CHECK(outcomes[i].result.trace.size() == 4);
    for (const PhaseLoss& row : outcomes[i].result.trace) CHECK(std::isfinite(row.loss));
    CHECK(outcomes[i].report.users_evaluated > 0);
    CHECK(outcomes[i].report.auc_value >= 0.0);
    CHECK(outcomes[i].report.auc_value <= 1.0);
  }
  // the ablations genuinely change the function being trained
  CHECK(outcomes[0].report.to_text() != outcomes[3].report.to_text());
}

TEST_CASE("uniform-attention ablation skips the cache rebuild") {
  TrainConfig cfg = tiny_cfg();
  cfg.epochs = 1;
  cfg.ablation = Ablation::kNoGk;
  const Fixture f = synth_fixture(cfg);
  Model model = make_model(f.graph, cfg);
  train(model, f.split);
  CHECK(model.cache.uniform);

  cfg.ablation = Ablation::kFull;
  Model full = make_model(f.graph, cfg);
  train(full, f.split);
  CHECK_FALSE(full.cache.uniform);
}

TEST_CASE("non-finite parameters abort with a diagnostic dump") {
  TrainConfig cfg = tiny_cfg();
  cfg.epochs = 1;
  const fs::path dump = fs::temp_directory_path() / "kcan_dump_test";
  fs::remove_all(dump);
  cfg.dump_dir = dump.string();
  const Fixture f = synth_fixture(cfg);
  Model model = make_model(f.graph, cfg);
  model.store.entity_emb.value.at(0, 0) = std::numeric_limits<double>::infinity();
  model.refresh();

  CHECK_THROWS_AS(train(model, f.split), TrainDiverged);
  const fs::path report = dump / "divergence.txt";
  REQUIRE(fs::exists(report));
  std::ifstream in(report);
  std::stringstream body;
  body << in.rdbuf();
  CHECK(body.str().find("epoch") != std::string::npos);
  CHECK(body.str().find("entity_emb") != std::string::npos);
  fs::remove_all(dump);
}

TEST_CASE("epoch cost grows about linearly with the data") {
  // Compare one epoch on a base dataset against one with twice the users at
  // a fixed catalog, which doubles the interaction edges and training pairs.
  // A linear-time epoch doubles; the check allows slope up to 2x linear.
  const auto time_one = [](int users, int items) {
    TrainConfig cfg;
    cfg.seed = 91;
    cfg.synth_users = users;
    cfg.synth_items = items;
    cfg.synth_attributes = 4;
    cfg.synth_noise = 0.15;
    cfg.embedding_dim = 8;
    cfg.tower = {8, 8, 8};
    cfg.output_dim = 8;
    cfg.neighbor_samples = 4;
    cfg.epochs = 1;
    cfg.kg_batch = 64;
    cfg.target_batch = 32;
    const Fixture f = synth_fixture(cfg);
    Model model = make_model(f.graph, cfg);
    const auto t0 = std::chrono::steady_clock::now();
    train(model, f.split);
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double>(t1 - t0).count();
  };
  time_one(100, 60);  // warm up allocators and caches
  double best_ratio = std::numeric_limits<double>::infinity();
  for (int attempt = 0; attempt < 3; ++attempt) {
    const double base = time_one(100, 60);
    const double doubled = time_one(200, 60);
    best_ratio = std::min(best_ratio, doubled / base);
    if (best_ratio <= 4.0) break;  // take the least-noisy of up to three runs
  }
  INFO("doubling ratio ", best_ratio);
  CHECK(best_ratio <= 4.0);
}
