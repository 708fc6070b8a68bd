#include "kcan/transh.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace kcan {

namespace {

// f(u) under the norm, plus df/du when grad is non-null.
double norm_score(const double* u, int n, Norm norm, double* grad) {
  if (norm == Norm::kL2Squared) {
    const double f = norm2(u, n);
    if (grad)
      for (int i = 0; i < n; ++i) grad[i] = 2.0 * u[i];
    return f;
  }
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += std::abs(u[i]);
  if (grad) {
    // d(s^2)/du_i = 2 s sign(u_i); the kink at 0 takes subgradient 0
    for (int i = 0; i < n; ++i)
      grad[i] = u[i] > 0.0 ? 2.0 * s : (u[i] < 0.0 ? -2.0 * s : 0.0);
  }
  return s * s;
}

struct TripleScore {
  double f = 0.0;
  std::vector<double> u;       // p_h + d - p_t
  std::vector<double> grad_u;  // df/du
};

void score_triple(const ParameterStore& store, EntityId h, RelationId r, EntityId t, Norm norm,
                  bool with_grad, TripleScore& out) {
  const int n = store.embedding_dim;
  const double* eh = store.entity_emb.value.row(h);
  const double* et = store.entity_emb.value.row(t);
  const double* d = store.rel_trans.value.row(r);
  const double* w = store.rel_normal.value.row(r);

  out.u.resize(n);
  std::vector<double>& u = out.u;
  const double ch = dot(w, eh, n);
  const double ct = dot(w, et, n);
  for (int i = 0; i < n; ++i) u[i] = (eh[i] - ch * w[i]) + d[i] - (et[i] - ct * w[i]);
  if (with_grad) out.grad_u.resize(n);
  out.f = norm_score(u.data(), n, norm, with_grad ? out.grad_u.data() : nullptr);
}

// Scatter scale * df/du into the rows the triple touches.
void accumulate_triple(const ParameterStore& store, EntityId h, RelationId r, EntityId t,
                       const std::vector<double>& grad_u, double scale, GradientSet& grads) {
  const int n = store.embedding_dim;
  const double* eh = store.entity_emb.value.row(h);
  const double* et = store.entity_emb.value.row(t);
  const double* w = store.rel_normal.value.row(r);

  const double gw = dot(w, grad_u.data(), n);  // w . df/du
  double* gh = grads.entity_emb.row_acc(h);
  double* gt = grads.entity_emb.row_acc(t);
  double* gd = grads.rel_trans.row_acc(r);
  double* gn = grads.rel_normal.row_acc(r);

  // df/de_h = g - (w.g) w ; df/de_t is its negation; df/dd = g
  for (int i = 0; i < n; ++i) {
    const double proj = grad_u[i] - gw * w[i];
    gh[i] += scale * proj;
    gt[i] -= scale * proj;
    gd[i] += scale * grad_u[i];
  }
  // df/dw = -((g.w) z + (w.z) g) with z = e_h - e_t
  double wz = 0.0;
  for (int i = 0; i < n; ++i) wz += w[i] * (eh[i] - et[i]);
  for (int i = 0; i < n; ++i) gn[i] -= scale * (gw * (eh[i] - et[i]) + wz * grad_u[i]);
}

}  // namespace

double transh_score(const ParameterStore& store, EntityId h, RelationId r, EntityId t, Norm norm) {
  TripleScore s;
  score_triple(store, h, r, t, norm, /*with_grad=*/false, s);
  return s.f;
}

double kg_loss_batch(const ParameterStore& store, std::span<const KgExample> batch, Norm norm,
                     GradientSet& grads) {
  if (batch.empty()) return 0.0;
  const double inv_batch = 1.0 / static_cast<double>(batch.size());

  double total = 0.0;
  TripleScore pos, neg;
  for (const KgExample& ex : batch) {
    score_triple(store, ex.head, ex.rel, ex.tail, norm, /*with_grad=*/true, pos);
    score_triple(store, ex.head, ex.rel, ex.corrupt, norm, /*with_grad=*/true, neg);
    const double margin = neg.f - pos.f;
    total += stable_softplus(-margin);

    // d loss / d margin = -sigmoid(-margin)
    const double coeff = stable_sigmoid(-margin) * inv_batch;
    accumulate_triple(store, ex.head, ex.rel, ex.corrupt, neg.grad_u, -coeff, grads);
    accumulate_triple(store, ex.head, ex.rel, ex.tail, pos.grad_u, coeff, grads);
  }
  const double loss = total * inv_batch;
  if (!std::isfinite(loss)) throw std::runtime_error("knowledge loss diverged");
  return loss;
}

}  // namespace kcan
