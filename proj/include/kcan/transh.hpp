#pragma once
// Hyperplane-projected translation scoring of knowledge triples and the
// pairwise ranking loss trained in the first phase of each epoch.

#include <span>

#include "kcan/config.hpp"
#include "kcan/graph.hpp"
#include "kcan/params.hpp"

namespace kcan {

// out = e - (w . e) w, the component of e in the hyperplane with normal w.
inline void project_hyperplane(const double* e, const double* w, int n, double* out) {
  const double c = dot(w, e, n);
  for (int i = 0; i < n; ++i) out[i] = e[i] - c * w[i];
}

// Plausibility distance ||e_h_perp + d_r - e_t_perp||^2 under the configured
// norm (squared L1 by default, squared L2 optional). Lower = more plausible.
double transh_score(const ParameterStore& store, EntityId h, RelationId r, EntityId t, Norm norm);

// One positive triple with its corrupted tail.
struct KgExample {
  EntityId head;
  RelationId rel;
  EntityId tail;
  EntityId corrupt;
};

// Mean over the batch of -ln sigmoid(f(h,r,t') - f(h,r,t)). Accumulates exact
// gradients for the participating embedding rows into `grads` (which is not
// cleared here). Throws on non-finite results.
double kg_loss_batch(const ParameterStore& store, std::span<const KgExample> batch, Norm norm,
                     GradientSet& grads);

}  // namespace kcan
