#pragma once
// Knowledge-aware attention over the whole unified graph and the single
// global aggregation layer. The attention weights double as the sampling
// distribution for subgraph distillation, so the cache also carries per-node
// CDFs.

#include <cstdint>
#include <vector>

#include "kcan/config.hpp"
#include "kcan/graph.hpp"
#include "kcan/params.hpp"

namespace kcan {

// Per-edge attention aligned with UnifiedGraph::triples. Non-empty rows are
// probability simplexes; cdf rows are inclusive running sums for O(log deg)
// categorical draws.
struct AttentionCache {
  std::vector<double> prob;
  std::vector<double> cdf;
  int64_t epoch = -1;
  bool uniform = false;

  std::span<const double> row(const UnifiedGraph& g, EntityId v) const {
    return {prob.data() + g.adj_offsets[v], g.degree(v)};
  }
  std::span<const double> cdf_row(const UnifiedGraph& g, EntityId v) const {
    return {cdf.data() + g.adj_offsets[v], g.degree(v)};
  }
};

// cos(e_v_perp + d_r, e_t_perp) with both entities projected onto relation
// r's hyperplane; zero-length operands yield 0 via the epsilon guard.
double edge_logit(const ParameterStore& store, EntityId v, RelationId r, EntityId t);

// Numerically shifted softmax of one row, in place. No-op on n = 0.
void softmax_row(double* x, size_t n);

// Softmax of edge logits per head entity; `threads` follows the config knob.
AttentionCache build_attention_cache(const UnifiedGraph& g, const ParameterStore& store,
                                     int threads = 1);

// Equal weight per neighbor; used when attention is ablated away.
AttentionCache build_uniform_cache(const UnifiedGraph& g);

// out = sum over adjacency of prob * embeddings[tail]; zero for isolated v.
void aggregate_neighborhood(const UnifiedGraph& g, const AttentionCache& cache,
                            const Matrix& embeddings, EntityId v, double* out);

// Inverted-dropout specification; masks are derived from `seed` alone so a
// fixed spec always produces the same masks.
struct DropoutSpec {
  double keep = 1.0;
  uint64_t seed = 0;
  bool active() const { return keep < 1.0; }
};

// Forward state of the global layer for every entity, kept for the backward
// pass.
struct GlobalPropagation {
  Matrix concat;  // V x 2F0, self || attention-weighted neighborhood
  Matrix pre;     // V x F1, affine output before the nonlinearity
  Matrix out;     // V x F1, final embeddings (after dropout when active)
  Matrix mask;    // V x F1 inverted-dropout factors; empty when inactive
};

// e_v = dropout(LeakyReLU(W (e_v || e_N(v)) + b)) for all entities.
void kagcn_forward_all(const UnifiedGraph& g, const AttentionCache& cache,
                       const ParameterStore& store, const DropoutSpec& dropout,
                       GlobalPropagation& work, int threads = 1);

// Backpropagates d(out) rows (sparse) into the raw embedding table and the
// layer weights. Attention probabilities are treated as constants.
void kagcn_backward_all(const UnifiedGraph& g, const AttentionCache& cache,
                        const ParameterStore& store, const GlobalPropagation& work,
                        const SparseRowGrad& d_out, GradientSet& grads);

}  // namespace kcan
