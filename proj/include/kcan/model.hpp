#pragma once
// A trained (or initializing) recommender bundled with everything scoring
// needs: the unified graph, parameters, the frozen attention cache, and the
// global embedding matrix the pair scorer reads.

#include <memory>

#include "kcan/predictor.hpp"

namespace kcan {

struct Model {
  std::shared_ptr<const UnifiedGraph> graph;
  TrainConfig cfg;
  ParameterStore store;
  AttentionCache cache;
  Matrix inputs;  // global pathway: propagated embeddings, or the raw table
                  // under the no-gk ablations

  // Rebuilds cache + inputs from the current parameters (inference mode: no
  // dropout). Call after training or loading a snapshot.
  void refresh();

  // Deterministic score for one (user entity, item entity) pair; the
  // subgraph draw stream depends only on (config seed, u, i).
  double score(EntityId user_ent, EntityId item_ent) const;
};

Model make_model(std::shared_ptr<const UnifiedGraph> graph, const TrainConfig& cfg);

}  // namespace kcan
