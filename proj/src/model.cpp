#include "kcan/model.hpp"

#include "kcan/parallel.hpp"

namespace kcan {

void Model::refresh() {
  const bool attention =
      cfg.ablation == Ablation::kFull || cfg.ablation == Ablation::kNoLc;
  const int threads = resolve_threads(cfg.threads);
  cache = attention ? build_attention_cache(*graph, store, threads) : build_uniform_cache(*graph);
  if (attention) {
    GlobalPropagation prop;
    kagcn_forward_all(*graph, cache, store, DropoutSpec{}, prop, threads);
    inputs = std::move(prop.out);
  } else {
    inputs = store.entity_emb.value;
  }
}

double Model::score(EntityId user_ent, EntityId item_ent) const {
  Rng rng = make_stream(cfg.seed, StreamTag::kScore, static_cast<uint64_t>(user_ent),
                        static_cast<uint64_t>(item_ent));
  PairState state;
  return score_pair(*graph, cache, store, cfg, inputs, user_ent, item_ent, rng, DropoutSpec{},
                    state);
}

Model make_model(std::shared_ptr<const UnifiedGraph> graph, const TrainConfig& cfg) {
  Model m;
  m.cfg = cfg;
  m.cfg.validate();
  m.store = init_params(cfg, graph->entity_count, graph->relation_count);
  m.graph = std::move(graph);
  m.refresh();
  return m;
}

}  // namespace kcan
