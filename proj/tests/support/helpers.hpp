#pragma once
// Shared builders for tests: hand-assembled graphs and random fuzz instances.

#include <algorithm>
#include <vector>

#include "kcan/graph.hpp"
#include "kcan/rng.hpp"

namespace kcan::testing {

// Builds a unified graph directly from an explicit triple list (no inverse
// materialization; callers list every directed edge they want).
inline UnifiedGraph make_graph(int entities, int relations, std::vector<Triple> triples) {
  UnifiedGraph g;
  g.entity_count = entities;
  g.relation_count = relations;
  g.base_relations = relations;
  std::sort(triples.begin(), triples.end());
  triples.erase(std::unique(triples.begin(), triples.end()), triples.end());
  g.triples = std::move(triples);
  g.adj_offsets.assign(entities + 1, 0);
  for (const Triple& t : g.triples) ++g.adj_offsets[t.head + 1];
  for (int v = 0; v < entities; ++v) g.adj_offsets[v + 1] += g.adj_offsets[v];
  return g;
}

inline UnifiedGraph random_graph(Rng& rng, int entities, int relations, int edge_count) {
  std::vector<Triple> triples;
  triples.reserve(edge_count);
  for (int e = 0; e < edge_count; ++e) {
    const auto h = static_cast<EntityId>(rng() % entities);
    const auto r = static_cast<RelationId>(rng() % relations);
    const auto t = static_cast<EntityId>(rng() % entities);
    triples.push_back({h, r, t});
  }
  return make_graph(entities, relations, std::move(triples));
}

}  // namespace kcan::testing
