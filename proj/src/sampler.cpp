#include "kcan/sampler.hpp"

#include <algorithm>

namespace kcan {

std::vector<size_t> sample_fixed_neighbors(const UnifiedGraph& g, const AttentionCache& cache,
                                           EntityId v, int m, Rng& rng) {
  std::vector<size_t> draws;
  const size_t deg = g.degree(v);
  if (deg == 0 || m <= 0) return draws;
  draws.reserve(m);
  const auto cdf = cache.cdf_row(g, v);
  const size_t base = g.adj_offsets[v];
  for (int k = 0; k < m; ++k) draws.push_back(base + draw_categorical(cdf, rng));
  return draws;
}

TargetSubgraph target_subgraph(const UnifiedGraph& g, const AttentionCache& cache, EntityId user,
                               EntityId item, int hops, int m, Rng& rng) {
  TargetSubgraph sub;
  sub.user = user;
  sub.item = item;
  sub.hops = hops;

  std::vector<int> local_of(g.entity_count, -1);
  auto add_node = [&](EntityId v, int level) {
    const int local = static_cast<int>(sub.nodes.size());
    local_of[v] = local;
    sub.nodes.push_back(v);
    sub.node_level.push_back(level);
    return local;
  };
  add_node(user, 0);
  if (item != user) add_node(item, 0);

  // per-local-node sampled out-edges; filled once when the node is expanded
  std::vector<std::vector<SubEdge>> per_node;
  per_node.resize(sub.nodes.size());

  std::vector<int> frontier(sub.nodes.size());
  for (size_t i = 0; i < frontier.size(); ++i) frontier[i] = static_cast<int>(i);

  std::vector<size_t> draws;
  for (int hop = 1; hop <= hops && !frontier.empty(); ++hop) {
    std::vector<int> next;
    for (const int v_local : frontier) {
      draws = sample_fixed_neighbors(g, cache, sub.nodes[v_local], m, rng);
      std::sort(draws.begin(), draws.end());
      draws.erase(std::unique(draws.begin(), draws.end()), draws.end());
      for (const size_t k : draws) {
        const Triple& t = g.triples[k];
        int t_local = local_of[t.tail];
        if (t_local < 0) {
          t_local = add_node(t.tail, hop);
          per_node.emplace_back();  // may reallocate: index per_node fresh below
          next.push_back(t_local);
        }
        per_node[v_local].push_back({v_local, t_local, t.rel, hop, cache.prob[k], k});
      }
    }
    frontier = std::move(next);
  }

  sub.head_offsets.assign(sub.nodes.size() + 1, 0);
  for (size_t v = 0; v < per_node.size(); ++v)
    sub.head_offsets[v + 1] = sub.head_offsets[v] + static_cast<int>(per_node[v].size());
  sub.edges.reserve(sub.head_offsets.back());
  for (const std::vector<SubEdge>& out : per_node)
    sub.edges.insert(sub.edges.end(), out.begin(), out.end());
  return sub;
}

}  // namespace kcan
