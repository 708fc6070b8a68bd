#include "kcan/lcsan.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "kcan/rng.hpp"

namespace kcan {

std::vector<double> target_repr(const Matrix& embeddings, EntityId user, EntityId item) {
  const int f = embeddings.cols;
  std::vector<double> rep(2 * f);
  std::copy(embeddings.row(user), embeddings.row(user) + f, rep.data());
  std::copy(embeddings.row(item), embeddings.row(item) + f, rep.data() + f);
  return rep;
}

double entity_target_score(const ParameterStore& store, int layer, const double* e_target,
                           const double* e_entity) {
  const Matrix& wt = store.att_target_w[layer - 1].value;
  const Matrix& we = store.att_entity_w[layer - 1].value;
  const Matrix& a = store.att_vec[layer - 1].value;
  const int d_a = wt.rows;

  std::vector<double> q(d_a), p(d_a);
  matvec(wt, e_target, q.data());
  matvec(we, e_entity, p.data());
  return dot(a.row(0), q.data(), d_a) + dot(a.row(0) + d_a, p.data(), d_a);
}

std::vector<double> conditional_attention(std::span<const double> pi,
                                          std::span<const double> alpha2) {
  std::vector<double> weights(pi.size());
  for (size_t i = 0; i < pi.size(); ++i) weights[i] = leaky_relu(pi[i] * alpha2[i]);
  softmax_row(weights.data(), weights.size());
  return weights;
}

namespace {

void ensure_shape(Matrix& m, int rows, int cols) {
  if (m.rows < rows || m.cols != cols) m = Matrix(rows, cols);
}

// Ascending locals whose outputs layer j must produce: every node within
// hops - j expansion rounds of a target.
void build_cone(const TargetSubgraph& sub, int layer, int hops, std::vector<int>& cone) {
  cone.clear();
  const int limit = hops - layer;
  for (size_t v = 0; v < sub.node_count(); ++v)
    if (sub.node_level[v] <= limit) cone.push_back(static_cast<int>(v));
}

}  // namespace

void lcsan_forward(const TargetSubgraph& sub, const Matrix& inputs, const ParameterStore& store,
                   const DropoutSpec& dropout, bool alpha_for_all_heads, TargetWork& work) {
  const int hops = store.hops;
  const int f1 = store.tower[0];
  if (inputs.cols != f1) throw std::invalid_argument("refinement input width mismatch");
  const int n = static_cast<int>(sub.node_count());
  const size_t edge_count = sub.edges.size();

  work.e_target = target_repr(inputs, sub.user, sub.item);
  ensure_shape(work.h0, n, f1);
  for (int v = 0; v < n; ++v)
    std::copy(inputs.row(sub.nodes[v]), inputs.row(sub.nodes[v]) + f1, work.h0.row(v));

  work.layers.resize(hops);
  work.cone.resize(hops);

  for (int layer = 1; layer <= hops; ++layer) {
    LcsanLayerState& st = work.layers[layer - 1];
    const Matrix& x_in = layer == 1 ? work.h0 : work.layers[layer - 2].out;
    const int f_in = store.tower[layer - 1];
    const int f_out = store.tower[layer];
    const Matrix& wt = store.att_target_w[layer - 1].value;
    const Matrix& we = store.att_entity_w[layer - 1].value;
    const Matrix& a = store.att_vec[layer - 1].value;
    const int d_a = wt.rows;
    const Matrix& w_agg = store.agg_w[layer].value;
    const Matrix& b_agg = store.agg_b[layer].value;
    if (w_agg.rows != f_out || w_agg.cols != 2 * f_in)
      throw std::invalid_argument("refinement layer shape mismatch");

    build_cone(sub, layer, hops, work.cone[layer - 1]);

    st.q.resize(d_a);
    matvec(wt, work.e_target.data(), st.q.data());
    const double aq_q = dot(a.row(0), st.q.data(), d_a);

    ensure_shape(st.att_proj, n, d_a);
    st.alpha2.assign(n, 0.0);
    st.tail_seen.assign(n, 0);
    st.tails.clear();
    st.prod.assign(edge_count, 0.0);
    st.alpha.assign(edge_count, 0.0);
    ensure_shape(st.concat, n, 2 * f_in);
    ensure_shape(st.pre, n, f_out);
    ensure_shape(st.out, n, f_out);

    const bool dropped = dropout.active();
    if (dropped) {
      ensure_shape(st.mask, n, f_out);
      Rng rng(mix(dropout.seed, static_cast<uint64_t>(layer)));
      const double inv_keep = 1.0 / dropout.keep;
      for (const int v : work.cone[layer - 1]) {
        double* m = st.mask.row(v);
        for (int i = 0; i < f_out; ++i) m[i] = uniform01(rng) < dropout.keep ? inv_keep : 0.0;
      }
    } else {
      st.mask = Matrix();
    }

    auto score_tail = [&](int t) {
      if (st.tail_seen[t]) return;
      st.tail_seen[t] = 1;
      st.tails.push_back(t);
      matvec(we, x_in.row(t), st.att_proj.row(t));
      st.alpha2[t] = aq_q + dot(a.row(0) + d_a, st.att_proj.row(t), d_a);
    };

    auto attend_head = [&](int v) {
      const auto edges = sub.out_edges(v);
      const int base = sub.head_offsets[v];
      for (size_t e = 0; e < edges.size(); ++e) {
        score_tail(edges[e].tail);
        st.prod[base + e] = edges[e].pi * st.alpha2[edges[e].tail];
        st.alpha[base + e] = leaky_relu(st.prod[base + e]);
      }
      softmax_row(st.alpha.data() + base, edges.size());
    };

    for (const int v : work.cone[layer - 1]) {
      attend_head(v);
      const auto edges = sub.out_edges(v);
      const int base = sub.head_offsets[v];

      double* x = st.concat.row(v);
      std::copy(x_in.row(v), x_in.row(v) + f_in, x);
      std::fill(x + f_in, x + 2 * f_in, 0.0);
      for (size_t e = 0; e < edges.size(); ++e)
        axpy(st.alpha[base + e], x_in.row(edges[e].tail), x + f_in, f_in);

      double* z = st.pre.row(v);
      matvec(w_agg, x, z);
      axpy(1.0, b_agg.row(0), z, f_out);
      double* o = st.out.row(v);
      if (dropped) {
        const double* m = st.mask.row(v);
        for (int i = 0; i < f_out; ++i) o[i] = m[i] * leaky_relu(z[i]);
      } else {
        for (int i = 0; i < f_out; ++i) o[i] = leaky_relu(z[i]);
      }
    }

    if (layer == 1 && alpha_for_all_heads) {
      const int limit = hops - 1;
      for (int v = 0; v < n; ++v)
        if (sub.node_level[v] > limit && sub.head_offsets[v + 1] > sub.head_offsets[v])
          attend_head(v);
    }
  }
}

void lcsan_backward(const TargetSubgraph& sub, const ParameterStore& store,
                    const double* d_user_final, const double* d_item_final, TargetWork& work,
                    GradientSet& grads, SparseRowGrad& d_inputs) {
  const int hops = store.hops;
  const int f1 = store.tower[0];
  const int n = static_cast<int>(sub.node_count());
  grads.dense_active = true;

  // seed the final layer's output gradient at the two target locals
  {
    LcsanLayerState& top = work.layers[hops - 1];
    const int f_top = store.tower[hops];
    ensure_shape(top.d_out, n, f_top);
    for (const int v : work.cone[hops - 1]) std::fill(top.d_out.row(v), top.d_out.row(v) + f_top, 0.0);
    axpy(1.0, d_user_final, top.d_out.row(0), f_top);
    const int item_local = sub.item == sub.user ? 0 : 1;
    axpy(1.0, d_item_final, top.d_out.row(item_local), f_top);
  }

  std::vector<double> dz, dx, d_alpha2, dq, d_edge_alpha;
  std::vector<double> we_t_ae;  // W_e^T a_e, shared across tails
  std::vector<double> d_e_target(work.e_target.size(), 0.0);

  for (int layer = hops; layer >= 1; --layer) {
    LcsanLayerState& st = work.layers[layer - 1];
    const Matrix& x_in = layer == 1 ? work.h0 : work.layers[layer - 2].out;
    Matrix& d_in = layer == 1 ? work.d_h0 : work.layers[layer - 2].d_out;
    const int f_in = store.tower[layer - 1];
    const int f_out = store.tower[layer];
    const Matrix& wt = store.att_target_w[layer - 1].value;
    const Matrix& we = store.att_entity_w[layer - 1].value;
    const Matrix& a = store.att_vec[layer - 1].value;
    const int d_a = wt.rows;
    const Matrix& w_agg = store.agg_w[layer].value;

    ensure_shape(d_in, n, f_in);
    if (layer == 1) {
      for (int v = 0; v < n; ++v) std::fill(d_in.row(v), d_in.row(v) + f_in, 0.0);
    } else {
      for (const int v : work.cone[layer - 2]) std::fill(d_in.row(v), d_in.row(v) + f_in, 0.0);
    }

    dz.resize(f_out);
    dx.assign(2 * f_in, 0.0);
    d_alpha2.assign(n, 0.0);
    dq.assign(d_a, 0.0);
    we_t_ae.assign(f_in, 0.0);
    matvec_t_acc(we, a.row(0) + d_a, we_t_ae.data());

    Matrix& d_wt = grads.att_target_w[layer - 1];
    Matrix& d_we = grads.att_entity_w[layer - 1];
    Matrix& d_a_vec = grads.att_vec[layer - 1];

    for (const int v : work.cone[layer - 1]) {
      const double* go = st.d_out.row(v);
      const double* z = st.pre.row(v);
      if (st.mask.rows > 0) {
        const double* m = st.mask.row(v);
        for (int i = 0; i < f_out; ++i) dz[i] = go[i] * m[i] * leaky_relu_grad(z[i]);
      } else {
        for (int i = 0; i < f_out; ++i) dz[i] = go[i] * leaky_relu_grad(z[i]);
      }

      outer_acc(grads.agg_w[layer], dz.data(), st.concat.row(v));
      axpy(1.0, dz.data(), grads.agg_b[layer].row(0), f_out);
      std::fill(dx.begin(), dx.end(), 0.0);
      matvec_t_acc(w_agg, dz.data(), dx.data());
      axpy(1.0, dx.data(), d_in.row(v), f_in);

      const double* dn = dx.data() + f_in;
      const auto edges = sub.out_edges(v);
      const int base = sub.head_offsets[v];
      if (edges.empty()) continue;

      d_edge_alpha.resize(edges.size());
      double inner = 0.0;
      for (size_t e = 0; e < edges.size(); ++e) {
        d_edge_alpha[e] = dot(dn, x_in.row(edges[e].tail), f_in);
        axpy(st.alpha[base + e], dn, d_in.row(edges[e].tail), f_in);
        inner += st.alpha[base + e] * d_edge_alpha[e];
      }
      for (size_t e = 0; e < edges.size(); ++e) {
        const double d_lam = st.alpha[base + e] * (d_edge_alpha[e] - inner);
        const double d_prod = d_lam * leaky_relu_grad(st.prod[base + e]);
        d_alpha2[edges[e].tail] += d_prod * edges[e].pi;
      }
    }

    // fan the per-tail relevance gradients into the attention parameters
    for (const int t : st.tails) {
      const double g2 = d_alpha2[t];
      if (g2 == 0.0) continue;
      axpy(g2, st.q.data(), d_a_vec.row(0), d_a);                 // d a_q
      axpy(g2, st.att_proj.row(t), d_a_vec.row(0) + d_a, d_a);    // d a_e
      axpy(g2, a.row(0), dq.data(), d_a);
      for (int r = 0; r < d_a; ++r) axpy(g2 * a.row(0)[d_a + r], x_in.row(t), d_we.row(r), f_in);
      axpy(g2, we_t_ae.data(), d_in.row(t), f_in);
    }
    outer_acc(d_wt, dq.data(), work.e_target.data());
    std::vector<double> de_t(2 * f1, 0.0);
    matvec_t_acc(wt, dq.data(), de_t.data());
    axpy(1.0, de_t.data(), d_e_target.data(), 2 * f1);
  }

  // gathered-input gradients flow back to the global rows
  for (int v = 0; v < n; ++v) {
    bool nonzero = false;
    const double* row = work.d_h0.row(v);
    for (int i = 0; i < f1 && !nonzero; ++i) nonzero = row[i] != 0.0;
    if (nonzero) axpy(1.0, row, d_inputs.row_acc(sub.nodes[v]), f1);
  }
  axpy(1.0, d_e_target.data(), d_inputs.row_acc(sub.user), f1);
  axpy(1.0, d_e_target.data() + f1, d_inputs.row_acc(sub.item), f1);
}

}  // namespace kcan
