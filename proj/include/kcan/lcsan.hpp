#pragma once
// Target-conditioned refinement over a distilled subgraph: K stacked layers
// of conditional attention (cached knowledge attention times a learned
// target-relevance score) followed by concat aggregation.
//
// Only the dependency cone of the target pair is computed per layer: the
// final layer is needed for the two targets alone, the layer below for their
// sampled neighbors, and so on. Nodes first reached at expansion round L are
// therefore updated by layers 1 .. K-L.

#include <vector>

#include "kcan/kagcn.hpp"
#include "kcan/params.hpp"
#include "kcan/sampler.hpp"

namespace kcan {

// e_u || e_i read from rows of a (entity x F) matrix.
std::vector<double> target_repr(const Matrix& embeddings, EntityId user, EntityId item);

// Relevance of one entity to the target: a . [W_t e_T || W_e e_t].
double entity_target_score(const ParameterStore& store, int layer, const double* e_target,
                           const double* e_entity);

// softmax over LeakyReLU(pi * alpha2) for one neighborhood; empty -> empty.
std::vector<double> conditional_attention(std::span<const double> pi,
                                          std::span<const double> alpha2);

// Forward state of one refinement layer, kept for the backward pass.
struct LcsanLayerState {
  std::vector<double> q;        // W_t e_T, shared by every neighborhood
  Matrix att_proj;              // per node: W_e x_t (valid where tail_seen)
  std::vector<double> alpha2;   // per node target-relevance score
  std::vector<char> tail_seen;
  std::vector<int> tails;       // nodes scored this layer, in first-touch order
  std::vector<double> prod;     // per edge: pi * alpha2 (before LeakyReLU)
  std::vector<double> alpha;    // per edge: softmax weight within its head row
  Matrix concat;                // per node: x_v || attention-weighted tails
  Matrix pre;                   // per node: affine output
  Matrix out;                   // per node: layer output (post dropout)
  Matrix mask;                  // inverted-dropout factors when active
  Matrix d_out;                 // backward scratch
};

struct TargetWork {
  std::vector<double> e_target;       // 2 F1
  Matrix h0;                          // gathered layer-0 inputs per local node
  std::vector<LcsanLayerState> layers;
  std::vector<std::vector<int>> cone; // per layer: locals the layer computes
  Matrix d_h0;                        // backward scratch
};

// Runs the K-layer stack for one subgraph. `inputs` is the global embedding
// matrix the stack reads (layer-1 global embeddings, or the raw table when
// the global layer is ablated). With `alpha_for_all_heads`, layer-1 attention
// is additionally evaluated for every subgraph node with out-edges (used by
// the explanation export); outputs still cover only the dependency cone.
void lcsan_forward(const TargetSubgraph& sub, const Matrix& inputs, const ParameterStore& store,
                   const DropoutSpec& dropout, bool alpha_for_all_heads, TargetWork& work);

// Backpropagates gradients arriving at the final-layer outputs of the two
// target nodes. Dense layer/attention gradients go to `grads`; gradients
// with respect to rows of `inputs` (through gathered features and through
// e_T) accumulate into `d_inputs`, keyed by global entity id. The cached
// attention weights pi are treated as constants.
void lcsan_backward(const TargetSubgraph& sub, const ParameterStore& store,
                    const double* d_user_final, const double* d_item_final, TargetWork& work,
                    GradientSet& grads, SparseRowGrad& d_inputs);

}  // namespace kcan
