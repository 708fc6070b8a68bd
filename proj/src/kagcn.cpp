#include "kcan/kagcn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "kcan/parallel.hpp"
#include "kcan/rng.hpp"
#include "kcan/transh.hpp"

namespace kcan {

namespace {

constexpr double kCosineEps = 1e-12;

}  // namespace

double edge_logit(const ParameterStore& store, EntityId v, RelationId r, EntityId t) {
  const int n = store.embedding_dim;
  const double* w = store.rel_normal.value.row(r);
  const double* d = store.rel_trans.value.row(r);

  std::vector<double> a(n), b(n);
  project_hyperplane(store.entity_emb.value.row(v), w, n, a.data());
  for (int i = 0; i < n; ++i) a[i] += d[i];
  project_hyperplane(store.entity_emb.value.row(t), w, n, b.data());

  const double denom = std::sqrt(norm2(a.data(), n)) * std::sqrt(norm2(b.data(), n));
  const double cosine = dot(a.data(), b.data(), n) / std::max(denom, kCosineEps);
  return std::clamp(cosine, -1.0, 1.0);
}

void softmax_row(double* x, size_t n) {
  if (n == 0) return;
  double hi = x[0];
  for (size_t i = 1; i < n; ++i) hi = std::max(hi, x[i]);
  double sum = 0.0;
  for (size_t i = 0; i < n; ++i) {
    x[i] = std::exp(x[i] - hi);
    sum += x[i];
  }
  for (size_t i = 0; i < n; ++i) x[i] /= sum;
}

namespace {

void fill_cdf(AttentionCache& cache, const UnifiedGraph& g) {
  cache.cdf.resize(cache.prob.size());
  for (EntityId v = 0; v < g.entity_count; ++v) {
    double run = 0.0;
    for (size_t k = g.adj_offsets[v]; k < g.adj_offsets[v + 1]; ++k) {
      run += cache.prob[k];
      cache.cdf[k] = run;
    }
  }
}

}  // namespace

AttentionCache build_attention_cache(const UnifiedGraph& g, const ParameterStore& store,
                                     int threads) {
  AttentionCache cache;
  cache.prob.resize(g.triples.size());

  const int chunk = 64;  // entities per work unit
  const int chunks = (g.entity_count + chunk - 1) / chunk;
  run_chunks(chunks, threads, [&](int c) {
    const EntityId lo = static_cast<EntityId>(c) * chunk;
    const EntityId hi = std::min<EntityId>(lo + chunk, g.entity_count);
    for (EntityId v = lo; v < hi; ++v) {
      const size_t begin = g.adj_offsets[v];
      const size_t deg = g.degree(v);
      if (deg == 0) continue;
      for (size_t k = 0; k < deg; ++k) {
        const Triple& e = g.triples[begin + k];
        cache.prob[begin + k] = edge_logit(store, v, e.rel, e.tail);
      }
      softmax_row(cache.prob.data() + begin, deg);
    }
  });
  fill_cdf(cache, g);
  return cache;
}

AttentionCache build_uniform_cache(const UnifiedGraph& g) {
  AttentionCache cache;
  cache.uniform = true;
  cache.prob.resize(g.triples.size());
  for (EntityId v = 0; v < g.entity_count; ++v) {
    const size_t deg = g.degree(v);
    for (size_t k = g.adj_offsets[v]; k < g.adj_offsets[v + 1]; ++k)
      cache.prob[k] = 1.0 / static_cast<double>(deg);
  }
  fill_cdf(cache, g);
  return cache;
}

void aggregate_neighborhood(const UnifiedGraph& g, const AttentionCache& cache,
                            const Matrix& embeddings, EntityId v, double* out) {
  const int n = embeddings.cols;
  std::fill(out, out + n, 0.0);
  for (size_t k = g.adj_offsets[v]; k < g.adj_offsets[v + 1]; ++k)
    axpy(cache.prob[k], embeddings.row(g.triples[k].tail), out, n);
}

void kagcn_forward_all(const UnifiedGraph& g, const AttentionCache& cache,
                       const ParameterStore& store, const DropoutSpec& dropout,
                       GlobalPropagation& work, int threads) {
  const int f0 = store.embedding_dim;
  const int f1 = store.tower[0];
  const Matrix& W = store.agg_w[0].value;
  const Matrix& b = store.agg_b[0].value;
  if (W.rows != f1 || W.cols != 2 * f0) throw std::invalid_argument("global layer shape mismatch");

  const int v_count = g.entity_count;
  if (work.concat.rows != v_count) {
    work.concat = Matrix(v_count, 2 * f0);
    work.pre = Matrix(v_count, f1);
    work.out = Matrix(v_count, f1);
  }

  if (dropout.active()) {
    if (work.mask.rows != v_count) work.mask = Matrix(v_count, f1);
    Rng rng(dropout.seed);
    const double inv_keep = 1.0 / dropout.keep;
    for (double& m : work.mask.data) m = uniform01(rng) < dropout.keep ? inv_keep : 0.0;
  } else {
    work.mask = Matrix();
  }

  const int chunk = 64;
  const int chunks = (v_count + chunk - 1) / chunk;
  run_chunks(chunks, threads, [&](int c) {
    const EntityId lo = static_cast<EntityId>(c) * chunk;
    const EntityId hi = std::min<EntityId>(lo + chunk, v_count);
    for (EntityId v = lo; v < hi; ++v) {
      double* x = work.concat.row(v);
      std::copy(store.entity_emb.value.row(v), store.entity_emb.value.row(v) + f0, x);
      aggregate_neighborhood(g, cache, store.entity_emb.value, v, x + f0);

      double* z = work.pre.row(v);
      matvec(W, x, z);
      axpy(1.0, b.row(0), z, f1);
      double* o = work.out.row(v);
      if (dropout.active()) {
        const double* m = work.mask.row(v);
        for (int i = 0; i < f1; ++i) o[i] = m[i] * leaky_relu(z[i]);
      } else {
        for (int i = 0; i < f1; ++i) o[i] = leaky_relu(z[i]);
      }
    }
  });
}

void kagcn_backward_all(const UnifiedGraph& g, const AttentionCache& cache,
                        const ParameterStore& store, const GlobalPropagation& work,
                        const SparseRowGrad& d_out, GradientSet& grads) {
  const int f0 = store.embedding_dim;
  const int f1 = store.tower[0];
  const Matrix& W = store.agg_w[0].value;
  grads.dense_active = true;

  std::vector<double> dz(f1), dx(2 * f0);
  for (const int v : d_out.touched_rows) {
    const double* go = d_out.buf.row(v);
    const double* z = work.pre.row(v);
    if (work.mask.rows > 0) {
      const double* m = work.mask.row(v);
      for (int i = 0; i < f1; ++i) dz[i] = go[i] * m[i] * leaky_relu_grad(z[i]);
    } else {
      for (int i = 0; i < f1; ++i) dz[i] = go[i] * leaky_relu_grad(z[i]);
    }

    outer_acc(grads.agg_w[0], dz.data(), work.concat.row(v));
    axpy(1.0, dz.data(), grads.agg_b[0].row(0), f1);

    std::fill(dx.begin(), dx.end(), 0.0);
    matvec_t_acc(W, dz.data(), dx.data());
    axpy(1.0, dx.data(), grads.entity_emb.row_acc(v), f0);
    // neighborhood half fans out across the attention weights
    const double* dn = dx.data() + f0;
    for (size_t k = g.adj_offsets[v]; k < g.adj_offsets[v + 1]; ++k)
      axpy(cache.prob[k], dn, grads.entity_emb.row_acc(g.triples[k].tail), f0);
  }
}

}  // namespace kcan
