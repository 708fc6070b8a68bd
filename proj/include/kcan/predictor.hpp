#pragma once
// Fusion head: concatenates the global and target-conditioned embeddings of
// each endpoint, projects them to the output space, and scores a pair by
// inner product. Also owns the pairwise ranking loss over training triplets.

#include <optional>
#include <span>
#include <vector>

#include "kcan/lcsan.hpp"

namespace kcan {

// e^o = W^o (global_half || local_half) + b^o. A null local half stands for
// the zero vector (used when refinement is ablated away).
void output_repr(const ParameterStore& store, const double* global_half, const double* local_half,
                 double* out);

inline double pair_score(const double* out_user, const double* out_item, int dim) {
  return dot(out_user, out_item, dim);
}

// Reported composite objective; the two parts are optimized alternately.
double total_loss(double kg_part, double target_part, const ParameterStore& store, double lambda);

// Full forward state of one scored pair, kept for the backward pass.
struct PairState {
  EntityId user = -1, item = -1;
  bool refined = false;           // false when the local pathway is ablated
  TargetSubgraph sub;
  TargetWork work;
  std::vector<double> cat_user, cat_item;  // fusion inputs
  std::vector<double> out_user, out_item;  // e^o vectors
  double score = 0.0;
};

// Scores (user, item) under its own distilled subgraph. `inputs` is the
// global embedding matrix (layer-1 output, or the raw table under the no-gk
// ablations); `sub_rng` drives the subgraph draws.
double score_pair(const UnifiedGraph& g, const AttentionCache& cache, const ParameterStore& store,
                  const TrainConfig& cfg, const Matrix& inputs, EntityId user_ent,
                  EntityId item_ent, Rng& sub_rng, const DropoutSpec& dropout, PairState& state);

// Backpropagates d(score) into the dense parameters and the global input
// rows the pair touched.
void score_pair_backward(const ParameterStore& store, PairState& state, double d_score,
                         GradientSet& grads, SparseRowGrad& d_inputs);

struct TargetBatchItem {
  EntityId user;
  EntityId pos_item;
  EntityId neg_item;
};

// Stream / mode context for one ranking batch. Per-sample subgraph and
// dropout streams are derived from (seed, epoch, batch_index, sample).
struct BatchStreams {
  uint64_t seed = 0;
  uint64_t epoch = 0;
  uint64_t batch_index = 0;
  bool training = true;
};

// Reusable per-chunk accumulators for the batch loss; grown on demand.
struct PhaseTwoPool {
  struct Slot {
    std::optional<GradientSet> grads;
    SparseRowGrad d_inputs;
    PairState pos, neg;
    double loss = 0.0;
  };
  std::vector<Slot> slots;
};

// Mean of -ln sigmoid(score(u,i+) - score(u,j-)) over the batch, each side
// scored under its own subgraph. Adds gradients to `grads` (dense + raw
// embedding rows) and to `d_inputs` (global embedding matrix rows). Chunked
// deterministically: identical results for any thread count.
double target_loss_batch(const UnifiedGraph& g, const AttentionCache& cache,
                         const ParameterStore& store, const TrainConfig& cfg,
                         const Matrix& inputs, std::span<const TargetBatchItem> batch,
                         const BatchStreams& streams, GradientSet& grads,
                         SparseRowGrad& d_inputs, PhaseTwoPool& pool);

}  // namespace kcan
