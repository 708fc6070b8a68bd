#pragma once
// Attention explanation export: for one target pair, the sampled subgraph
// with the global edge weight (pi) and the target-conditioned layer-1 weight
// (alpha) per edge, as line-delimited JSON records.

#include <string>
#include <vector>

#include "kcan/model.hpp"

namespace kcan {

struct ExplainRecord {
  std::string head, relation, tail;  // entity / relation names
  int hop = 0;
  double pi = 0.0;     // global attention of the underlying graph edge
  double alpha = 0.0;  // conditional attention within the sampled neighborhood
  std::string user, item;  // the target the weights are conditioned on
};

// Deterministic per (model seed, user, item): the subgraph draw has its own
// stream. alpha comes from the first refinement layer, evaluated for every
// sampled node with out-edges.
std::vector<ExplainRecord> explain_target(const Model& model, EntityId user_ent,
                                          EntityId item_ent);

// One JSON object per line, edges in subgraph storage order.
std::string to_jsonl(const std::vector<ExplainRecord>& records);

}  // namespace kcan
