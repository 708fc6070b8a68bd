#include "kcan/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "kcan/parallel.hpp"

namespace kcan {

void output_repr(const ParameterStore& store, const double* global_half, const double* local_half,
                 double* out) {
  const Matrix& w = store.out_w.value;
  const int f_glob = store.tower.front();
  const int f_loc = store.tower.back();
  for (int k = 0; k < w.rows; ++k) {
    const double* wr = w.row(k);
    double acc = store.out_b.value.row(0)[k];
    acc += dot(wr, global_half, f_glob);
    if (local_half != nullptr) acc += dot(wr + f_glob, local_half, f_loc);
    out[k] = acc;
  }
}

double total_loss(double kg_part, double target_part, const ParameterStore& store, double lambda) {
  return kg_part + target_part + l2_penalty(store, lambda);
}

double score_pair(const UnifiedGraph& g, const AttentionCache& cache, const ParameterStore& store,
                  const TrainConfig& cfg, const Matrix& inputs, EntityId user_ent,
                  EntityId item_ent, Rng& sub_rng, const DropoutSpec& dropout, PairState& state) {
  const int f_glob = store.tower.front();
  const int f_loc = store.tower.back();
  const int f_out = store.output_dim;
  state.user = user_ent;
  state.item = item_ent;
  state.refined = cfg.ablation == Ablation::kFull || cfg.ablation == Ablation::kNoGk;

  state.cat_user.assign(f_glob + f_loc, 0.0);
  state.cat_item.assign(f_glob + f_loc, 0.0);
  std::copy(inputs.row(user_ent), inputs.row(user_ent) + f_glob, state.cat_user.begin());
  std::copy(inputs.row(item_ent), inputs.row(item_ent) + f_glob, state.cat_item.begin());

  if (state.refined) {
    state.sub =
        target_subgraph(g, cache, user_ent, item_ent, cfg.hops, cfg.neighbor_samples, sub_rng);
    lcsan_forward(state.sub, inputs, store, dropout, false, state.work);
    const Matrix& top = state.work.layers[static_cast<size_t>(store.hops) - 1].out;
    const int item_local = state.sub.nodes.size() > 1 && state.sub.nodes[1] == item_ent ? 1 : 0;
    std::copy(top.row(0), top.row(0) + f_loc, state.cat_user.begin() + f_glob);
    std::copy(top.row(item_local), top.row(item_local) + f_loc, state.cat_item.begin() + f_glob);
  }

  state.out_user.assign(f_out, 0.0);
  state.out_item.assign(f_out, 0.0);
  const double* loc_u = state.refined ? state.cat_user.data() + f_glob : nullptr;
  const double* loc_i = state.refined ? state.cat_item.data() + f_glob : nullptr;
  output_repr(store, state.cat_user.data(), loc_u, state.out_user.data());
  output_repr(store, state.cat_item.data(), loc_i, state.out_item.data());
  state.score = pair_score(state.out_user.data(), state.out_item.data(), f_out);
  return state.score;
}

void score_pair_backward(const ParameterStore& store, PairState& state, double d_score,
                         GradientSet& grads, SparseRowGrad& d_inputs) {
  const int f_glob = store.tower.front();
  const int f_loc = store.tower.back();
  const int f_out = store.output_dim;
  const int cat_dim = f_glob + f_loc;

  // d(u.v) = v du + u dv
  std::vector<double> d_ou(f_out), d_oi(f_out);
  for (int k = 0; k < f_out; ++k) {
    d_ou[k] = d_score * state.out_item[k];
    d_oi[k] = d_score * state.out_user[k];
  }

  grads.dense_active = true;
  outer_acc(grads.out_w, d_ou.data(), state.cat_user.data());
  outer_acc(grads.out_w, d_oi.data(), state.cat_item.data());
  axpy(1.0, d_ou.data(), grads.out_b.row(0), f_out);
  axpy(1.0, d_oi.data(), grads.out_b.row(0), f_out);

  std::vector<double> d_cat_u(cat_dim, 0.0), d_cat_i(cat_dim, 0.0);
  matvec_t_acc(store.out_w.value, d_ou.data(), d_cat_u.data());
  matvec_t_acc(store.out_w.value, d_oi.data(), d_cat_i.data());

  axpy(1.0, d_cat_u.data(), d_inputs.row_acc(state.user), f_glob);
  axpy(1.0, d_cat_i.data(), d_inputs.row_acc(state.item), f_glob);
  if (state.refined) {
    lcsan_backward(state.sub, store, d_cat_u.data() + f_glob, d_cat_i.data() + f_glob, state.work,
                   grads, d_inputs);
  }
}

double target_loss_batch(const UnifiedGraph& g, const AttentionCache& cache,
                         const ParameterStore& store, const TrainConfig& cfg,
                         const Matrix& inputs, std::span<const TargetBatchItem> batch,
                         const BatchStreams& streams, GradientSet& grads,
                         SparseRowGrad& d_inputs, PhaseTwoPool& pool) {
  if (batch.empty()) return 0.0;
  const size_t chunk_count = (batch.size() + kChunkSize - 1) / kChunkSize;
  if (pool.slots.size() < chunk_count) pool.slots.resize(chunk_count);
  const double keep = streams.training ? 1.0 - cfg.dropout : 1.0;
  const double inv_batch = 1.0 / static_cast<double>(batch.size());

  run_chunks(chunk_count, resolve_threads(cfg.threads), [&](size_t ci) {
    PhaseTwoPool::Slot& slot = pool.slots[ci];
    if (!slot.grads) slot.grads.emplace(store);
    else slot.grads->clear();
    if (slot.d_inputs.buf.rows != inputs.rows || slot.d_inputs.buf.cols != inputs.cols)
      slot.d_inputs.resize_like(inputs);
    else slot.d_inputs.clear();
    slot.loss = 0.0;

    const size_t begin = ci * kChunkSize;
    const size_t end = std::min(batch.size(), begin + kChunkSize);
    for (size_t s = begin; s < end; ++s) {
      const TargetBatchItem& it = batch[s];
      Rng pos_rng =
          make_stream(streams.seed, StreamTag::kSubgraphPos, streams.epoch, streams.batch_index, s);
      Rng neg_rng =
          make_stream(streams.seed, StreamTag::kSubgraphNeg, streams.epoch, streams.batch_index, s);
      const DropoutSpec pos_drop{
          keep, stream_seed(streams.seed, StreamTag::kDropoutPos, streams.epoch,
                            streams.batch_index, s)};
      const DropoutSpec neg_drop{
          keep, stream_seed(streams.seed, StreamTag::kDropoutNeg, streams.epoch,
                            streams.batch_index, s)};

      const double pos =
          score_pair(g, cache, store, cfg, inputs, it.user, it.pos_item, pos_rng, pos_drop,
                     slot.pos);
      const double neg =
          score_pair(g, cache, store, cfg, inputs, it.user, it.neg_item, neg_rng, neg_drop,
                     slot.neg);
      const double margin = pos - neg;
      slot.loss += stable_softplus(-margin);
      const double coeff = -stable_sigmoid(-margin) * inv_batch;
      score_pair_backward(store, slot.pos, coeff, *slot.grads, slot.d_inputs);
      score_pair_backward(store, slot.neg, -coeff, *slot.grads, slot.d_inputs);
    }
  });

  double total = 0.0;
  for (size_t ci = 0; ci < chunk_count; ++ci) {
    total += pool.slots[ci].loss;
    grads.add(*pool.slots[ci].grads);
    d_inputs.add(pool.slots[ci].d_inputs);
  }
  const double loss = total * inv_batch;
  if (!std::isfinite(loss)) throw std::runtime_error("ranking loss is not finite");
  return loss;
}

}  // namespace kcan
