#pragma once
// Attention-proportional distillation of the unified graph into a small
// fixed-budget subgraph around one (user, item) target pair.

#include <span>
#include <vector>

#include "kcan/graph.hpp"
#include "kcan/kagcn.hpp"
#include "kcan/rng.hpp"

namespace kcan {

// M independent draws with replacement from v's attention row. Returns
// indices into graph.triples (repeats possible); empty adjacency -> empty.
std::vector<size_t> sample_fixed_neighbors(const UnifiedGraph& g, const AttentionCache& cache,
                                           EntityId v, int m, Rng& rng);

struct SubEdge {
  int head;           // local node index
  int tail;           // local node index
  RelationId rel;
  int hop;            // 1-based expansion round that drew the edge
  double pi;          // attention weight of the underlying graph edge
  size_t graph_edge;  // index into graph.triples
};

// Joint receptive field of {user, item}: every node is expanded at most once
// (M draws, deduplicated), so the per-node neighbor lists are the same at
// every refinement layer.
struct TargetSubgraph {
  EntityId user = -1;
  EntityId item = -1;
  int hops = 0;
  std::vector<EntityId> nodes;   // local index -> global entity; 0=user, then item
  std::vector<int> node_level;   // expansion round of first appearance; 0 = target
  std::vector<SubEdge> edges;    // grouped contiguously by head
  std::vector<int> head_offsets; // nodes.size() + 1

  size_t node_count() const { return nodes.size(); }
  std::span<const SubEdge> out_edges(int local) const {
    return {edges.data() + head_offsets[local],
            static_cast<size_t>(head_offsets[local + 1] - head_offsets[local])};
  }
};

TargetSubgraph target_subgraph(const UnifiedGraph& g, const AttentionCache& cache, EntityId user,
                               EntityId item, int hops, int m, Rng& rng);

}  // namespace kcan
