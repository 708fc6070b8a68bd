#include "kcan/explain.hpp"

#include <json.hpp>

#include "kcan/lcsan.hpp"
#include "kcan/sampler.hpp"

namespace kcan {

std::vector<ExplainRecord> explain_target(const Model& model, EntityId user_ent,
                                          EntityId item_ent) {
  const UnifiedGraph& g = *model.graph;
  Rng rng = make_stream(model.cfg.seed, StreamTag::kExplain, static_cast<uint64_t>(user_ent),
                        static_cast<uint64_t>(item_ent));
  const TargetSubgraph sub = target_subgraph(g, model.cache, user_ent, item_ent, model.cfg.hops,
                                             model.cfg.neighbor_samples, rng);
  TargetWork work;
  lcsan_forward(sub, model.inputs, model.store, DropoutSpec{}, /*alpha_for_all_heads=*/true,
                work);
  const LcsanLayerState& st = work.layers[0];

  std::vector<ExplainRecord> records;
  records.reserve(sub.edges.size());
  for (size_t e = 0; e < sub.edges.size(); ++e) {
    const SubEdge& edge = sub.edges[e];
    ExplainRecord rec;
    rec.head = g.entity_names[sub.nodes[edge.head]];
    rec.relation = g.relation_names[edge.rel];
    rec.tail = g.entity_names[sub.nodes[edge.tail]];
    rec.hop = edge.hop;
    rec.pi = edge.pi;
    rec.alpha = st.alpha[e];
    rec.user = g.entity_names[user_ent];
    rec.item = g.entity_names[item_ent];
    records.push_back(std::move(rec));
  }
  return records;
}

std::string to_jsonl(const std::vector<ExplainRecord>& records) {
  std::string out;
  for (const ExplainRecord& r : records) {
    const nlohmann::json row = {{"head", r.head}, {"relation", r.relation}, {"tail", r.tail},
                                {"hop", r.hop},   {"pi", r.pi},             {"alpha", r.alpha},
                                {"user", r.user}, {"item", r.item}};
    out += row.dump();
    out += '\n';
  }
  return out;
}

}  // namespace kcan
