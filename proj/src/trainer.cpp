#include "kcan/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "kcan/parallel.hpp"
#include "kcan/transh.hpp"

namespace kcan {

namespace {

// Deterministic Fisher-Yates over an index vector.
void shuffle_order(std::vector<uint32_t>& order, Rng& rng) {
  for (size_t k = 0; k + 1 < order.size(); ++k) {
    const size_t j =
        k + static_cast<size_t>(uniform01(rng) * static_cast<double>(order.size() - k));
    std::swap(order[k], order[j]);
  }
}

void dump_divergence(const Model& model, int epoch, int phase, size_t batch,
                     const std::string& what) {
  if (model.cfg.dump_dir.empty()) return;
  std::error_code ec;
  std::filesystem::create_directories(model.cfg.dump_dir, ec);
  std::ofstream out(std::filesystem::path(model.cfg.dump_dir) / "divergence.txt");
  out << "error\t" << what << "\n"
      << "epoch\t" << epoch << "\nphase\t" << phase << "\nbatch\t" << batch << "\nstep\t"
      << model.store.step << "\n\n"
      << model.cfg.serialize();
  double worst = 0.0;
  std::string worst_name = "-";
  model.store.for_each_tensor([&](const Tensor& t) {
    for (const double x : t.value.data) {
      if (!std::isfinite(x)) {
        worst_name = t.name;
        return;
      }
      worst = std::max(worst, std::abs(x));
    }
  });
  out << "\nmax_abs_param\t" << worst << "\nfirst_nonfinite_tensor\t" << worst_name << "\n";
}

}  // namespace

TrainResult train(Model& model, const DataSplit& split) {
  const TrainConfig& cfg = model.cfg;
  cfg.validate();
  const UnifiedGraph& g = *model.graph;
  const uint64_t seed = cfg.seed;
  const int threads = resolve_threads(cfg.threads);

  TrainResult res;
  if (cfg.epochs == 0) {
    model.refresh();
    return res;
  }

  const bool attention = cfg.ablation == Ablation::kFull || cfg.ablation == Ablation::kNoLc;
  if (!attention) model.cache = build_uniform_cache(g);  // never changes

  GradientSet grads(model.store);
  SparseRowGrad d_inputs;
  PhaseTwoPool pool;
  GlobalPropagation prop;
  std::vector<KgExample> kg_batch;
  std::vector<TargetBatchItem> tgt_batch;

  std::vector<uint32_t> kg_order(g.triples.size());
  std::iota(kg_order.begin(), kg_order.end(), 0u);
  std::vector<uint32_t> pair_order(split.train_edges.size());
  std::iota(pair_order.begin(), pair_order.end(), 0u);

  int cur_epoch = 0, cur_phase = 1;
  size_t cur_batch = 0;
  try {
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      cur_epoch = epoch;

      // ---- phase 1: knowledge embedding over every unified triple
      cur_phase = 1;
      Rng kg_shuffle = make_stream(seed, StreamTag::kShuffleKg, epoch);
      shuffle_order(kg_order, kg_shuffle);
      double kg_sum = 0.0;
      for (size_t start = 0, bi = 0; start < kg_order.size(); start += cfg.kg_batch, ++bi) {
        cur_batch = bi;
        const size_t stop = std::min(kg_order.size(), start + cfg.kg_batch);
        kg_batch.clear();
        for (size_t idx = start; idx < stop; ++idx) {
          const Triple& t = g.triples[kg_order[idx]];
          Rng crng = make_stream(seed, StreamTag::kCorruptTail, epoch, idx);
          kg_batch.push_back({t.head, t.rel, t.tail,
                              sample_corrupt_tail(g, t.head, t.rel, crng)});
        }
        grads.clear();
        const double loss = kg_loss_batch(model.store, kg_batch, cfg.norm, grads);
        add_l2_gradient(model.store, cfg.lambda, grads);
        adam_step(model.store, grads, cfg.learning_rate);
        kg_sum += loss * static_cast<double>(kg_batch.size());
      }
      const double kg_mean = kg_sum / static_cast<double>(kg_order.size());
      if (!std::isfinite(kg_mean)) throw std::runtime_error("knowledge loss is not finite");
      res.trace.push_back({epoch, 1, kg_mean});

      // the sampling/attention distribution follows the fresh embeddings
      if (attention) model.cache = build_attention_cache(g, model.store, threads);

      // ---- phase 2: pairwise ranking over every training interaction
      cur_phase = 2;
      Rng tgt_shuffle = make_stream(seed, StreamTag::kShuffleTarget, epoch);
      shuffle_order(pair_order, tgt_shuffle);
      double tgt_sum = 0.0;
      for (size_t start = 0, bi = 0; start < pair_order.size(); start += cfg.target_batch, ++bi) {
        cur_batch = bi;
        const size_t stop = std::min(pair_order.size(), start + cfg.target_batch);
        tgt_batch.clear();
        for (size_t idx = start; idx < stop; ++idx) {
          const auto [u, i] = split.train_edges[pair_order[idx]];
          Rng nrng = make_stream(seed, StreamTag::kNegativeItem, epoch, idx);
          tgt_batch.push_back({g.user_entity[u], g.item_entity[i],
                               sample_negative_item(g, g.user_entity[u], nrng)});
        }

        grads.clear();
        const Matrix* inputs;
        if (attention) {
          const DropoutSpec gspec{1.0 - cfg.dropout,
                                  stream_seed(seed, StreamTag::kDropoutGlobal, epoch, bi)};
          kagcn_forward_all(g, model.cache, model.store, gspec, prop, threads);
          inputs = &prop.out;
        } else {
          inputs = &model.store.entity_emb.value;
        }
        if (d_inputs.buf.rows != inputs->rows || d_inputs.buf.cols != inputs->cols)
          d_inputs.resize_like(*inputs);
        else d_inputs.clear();

        const BatchStreams streams{seed, static_cast<uint64_t>(epoch), bi, true};
        const double loss = target_loss_batch(g, model.cache, model.store, cfg, *inputs,
                                              tgt_batch, streams, grads, d_inputs, pool);
        if (attention) {
          kagcn_backward_all(g, model.cache, model.store, prop, d_inputs, grads);
        } else {
          for (const int r : d_inputs.touched_rows)
            axpy(1.0, d_inputs.buf.row(r), grads.entity_emb.row_acc(r), inputs->cols);
        }
        add_l2_gradient(model.store, cfg.lambda, grads);
        adam_step(model.store, grads, cfg.learning_rate);
        tgt_sum += loss * static_cast<double>(stop - start);
      }
      const double tgt_mean =
          pair_order.empty() ? 0.0 : tgt_sum / static_cast<double>(pair_order.size());
      if (!std::isfinite(tgt_mean)) throw std::runtime_error("ranking loss is not finite");
      res.trace.push_back({epoch, 2, tgt_mean});
    }
  } catch (const std::runtime_error& e) {
    dump_divergence(model, cur_epoch, cur_phase, cur_batch, e.what());
    throw TrainDiverged(std::string(e.what()) + " (epoch " + std::to_string(cur_epoch) +
                        ", phase " + std::to_string(cur_phase) + ", batch " +
                        std::to_string(cur_batch) + ")");
  }

  model.refresh();
  return res;
}

std::string trace_to_csv(const std::vector<PhaseLoss>& trace) {
  std::string out = "epoch,phase,loss\n";
  char buf[96];
  for (const PhaseLoss& row : trace) {
    std::snprintf(buf, sizeof buf, "%d,%d,%.17g\n", row.epoch, row.phase, row.loss);
    out += buf;
  }
  return out;
}

std::vector<AblationOutcome> run_ablation(std::shared_ptr<const UnifiedGraph> graph,
                                          const DataSplit& split, const TrainConfig& base,
                                          std::span<const Ablation> variants) {
  std::vector<AblationOutcome> out;
  for (const Ablation v : variants) {
    TrainConfig cfg = base;
    cfg.ablation = v;
    Model model = make_model(graph, cfg);
    AblationOutcome o;
    o.variant = v;
    o.result = train(model, split);
    o.report = evaluate(model, split);
    out.push_back(std::move(o));
  }
  return out;
}

}  // namespace kcan
