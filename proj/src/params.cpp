#include "kcan/params.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "kcan/rng.hpp"

namespace kcan {

GradientSet::GradientSet(const ParameterStore& store) {
  entity_emb.resize_like(store.entity_emb.value);
  rel_trans.resize_like(store.rel_trans.value);
  rel_normal.resize_like(store.rel_normal.value);
  for (const Tensor& t : store.agg_w) agg_w.emplace_back(t.value.rows, t.value.cols);
  for (const Tensor& t : store.agg_b) agg_b.emplace_back(t.value.rows, t.value.cols);
  for (const Tensor& t : store.att_target_w) att_target_w.emplace_back(t.value.rows, t.value.cols);
  for (const Tensor& t : store.att_entity_w) att_entity_w.emplace_back(t.value.rows, t.value.cols);
  for (const Tensor& t : store.att_vec) att_vec.emplace_back(t.value.rows, t.value.cols);
  out_w = Matrix(store.out_w.value.rows, store.out_w.value.cols);
  out_b = Matrix(store.out_b.value.rows, store.out_b.value.cols);
}

void GradientSet::clear() {
  entity_emb.clear();
  rel_trans.clear();
  rel_normal.clear();
  for (Matrix& g : agg_w) g.fill(0.0);
  for (Matrix& g : agg_b) g.fill(0.0);
  for (Matrix& g : att_target_w) g.fill(0.0);
  for (Matrix& g : att_entity_w) g.fill(0.0);
  for (Matrix& g : att_vec) g.fill(0.0);
  out_w.fill(0.0);
  out_b.fill(0.0);
  dense_active = false;
}

namespace {

void add_mat(Matrix& dst, const Matrix& src) {
  for (size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

}  // namespace

void GradientSet::add(const GradientSet& other) {
  entity_emb.add(other.entity_emb);
  rel_trans.add(other.rel_trans);
  rel_normal.add(other.rel_normal);
  for (size_t i = 0; i < agg_w.size(); ++i) add_mat(agg_w[i], other.agg_w[i]);
  for (size_t i = 0; i < agg_b.size(); ++i) add_mat(agg_b[i], other.agg_b[i]);
  for (size_t i = 0; i < att_target_w.size(); ++i) add_mat(att_target_w[i], other.att_target_w[i]);
  for (size_t i = 0; i < att_entity_w.size(); ++i) add_mat(att_entity_w[i], other.att_entity_w[i]);
  for (size_t i = 0; i < att_vec.size(); ++i) add_mat(att_vec[i], other.att_vec[i]);
  add_mat(out_w, other.out_w);
  add_mat(out_b, other.out_b);
  dense_active = dense_active || other.dense_active;
}

void GradientSet::scale(double s) {
  entity_emb.scale(s);
  rel_trans.scale(s);
  rel_normal.scale(s);
  auto scale_mat = [s](Matrix& g) {
    for (double& x : g.data) x *= s;
  };
  for (Matrix& g : agg_w) scale_mat(g);
  for (Matrix& g : agg_b) scale_mat(g);
  for (Matrix& g : att_target_w) scale_mat(g);
  for (Matrix& g : att_entity_w) scale_mat(g);
  for (Matrix& g : att_vec) scale_mat(g);
  scale_mat(out_w);
  scale_mat(out_b);
}

void ParameterStore::for_each_tensor(const std::function<void(Tensor&)>& fn) {
  fn(entity_emb);
  fn(rel_trans);
  fn(rel_normal);
  for (Tensor& t : agg_w) fn(t);
  for (Tensor& t : agg_b) fn(t);
  for (Tensor& t : att_target_w) fn(t);
  for (Tensor& t : att_entity_w) fn(t);
  for (Tensor& t : att_vec) fn(t);
  fn(out_w);
  fn(out_b);
}

void ParameterStore::for_each_tensor(const std::function<void(const Tensor&)>& fn) const {
  const_cast<ParameterStore*>(this)->for_each_tensor(
      [&fn](Tensor& t) { fn(static_cast<const Tensor&>(t)); });
}

size_t ParameterStore::scalar_count() const {
  size_t n = 0;
  for_each_tensor([&n](const Tensor& t) { n += t.value.size(); });
  return n;
}

namespace {

void xavier_fill(Matrix& mat, int fan_in, int fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  for (double& x : mat.data) x = (2.0 * uniform01(rng) - 1.0) * bound;
}

void normalize_rows(Matrix& mat) {
  for (int r = 0; r < mat.rows; ++r) {
    double* row = mat.row(r);
    const double n = std::sqrt(norm2(row, mat.cols));
    if (n > 0)
      for (int c = 0; c < mat.cols; ++c) row[c] /= n;
    else
      row[0] = 1.0;
  }
}

}  // namespace

ParameterStore init_params(const TrainConfig& cfg, int entity_count, int relation_count) {
  cfg.validate();
  if (entity_count <= 0 || relation_count <= 0)
    throw std::invalid_argument("entity/relation counts must be positive");

  ParameterStore s;
  s.embedding_dim = cfg.embedding_dim;
  s.tower = cfg.tower;
  s.output_dim = cfg.output_dim;
  s.hops = cfg.hops;

  const int f0 = cfg.embedding_dim;
  const int hops = cfg.hops;
  const int f1 = cfg.tower[0];

  s.entity_emb = Tensor("entity_emb", entity_count, f0);
  s.rel_trans = Tensor("rel_trans", relation_count, f0);
  s.rel_normal = Tensor("rel_normal", relation_count, f0);
  for (int i = 1; i <= hops + 1; ++i) {
    const int in_dim = i == 1 ? f0 : cfg.tower[i - 2];
    const int out_dim = cfg.tower[i - 1];
    s.agg_w.emplace_back("agg_w" + std::to_string(i), out_dim, 2 * in_dim);
    s.agg_b.emplace_back("agg_b" + std::to_string(i), 1, out_dim);
  }
  for (int j = 1; j <= hops; ++j) {
    const int d_a = cfg.tower[j];          // attention projection width
    const int fj = cfg.tower[j - 1];       // layer input dim
    s.att_target_w.emplace_back("att_target_w" + std::to_string(j), d_a, 2 * f1);
    s.att_entity_w.emplace_back("att_entity_w" + std::to_string(j), d_a, fj);
    s.att_vec.emplace_back("att_vec" + std::to_string(j), 1, 2 * d_a);
  }
  s.out_w = Tensor("out_w", cfg.output_dim, f1 + cfg.tower[hops]);
  s.out_b = Tensor("out_b", 1, cfg.output_dim);

  Rng rng = make_stream(cfg.seed, StreamTag::kInit);
  xavier_fill(s.entity_emb.value, f0, f0, rng);
  xavier_fill(s.rel_trans.value, f0, f0, rng);
  xavier_fill(s.rel_normal.value, f0, f0, rng);
  normalize_rows(s.rel_normal.value);
  for (Tensor& t : s.agg_w) xavier_fill(t.value, t.value.cols, t.value.rows, rng);
  for (Tensor& t : s.att_target_w) xavier_fill(t.value, t.value.cols, t.value.rows, rng);
  for (Tensor& t : s.att_entity_w) xavier_fill(t.value, t.value.cols, t.value.rows, rng);
  for (Tensor& t : s.att_vec) xavier_fill(t.value, t.value.cols, 1, rng);
  xavier_fill(s.out_w.value, s.out_w.value.cols, s.out_w.value.rows, rng);
  // biases stay zero
  return s;
}

namespace {

// Bias-corrected Adam on one scalar.
inline void adam_scalar(double& theta, double& m, double& v, double g, double lr,
                        const AdamSettings& a, double bc1, double bc2) {
  m = a.beta1 * m + (1.0 - a.beta1) * g;
  v = a.beta2 * v + (1.0 - a.beta2) * g * g;
  const double m_hat = m / bc1;
  const double v_hat = v / bc2;
  theta -= lr * m_hat / (std::sqrt(v_hat) + a.epsilon);
}

void adam_dense(Tensor& t, const Matrix& g, double lr, const AdamSettings& a, double bc1,
                double bc2) {
  if (!t.value.same_shape(g)) throw std::invalid_argument("gradient shape mismatch for " + t.name);
  for (size_t i = 0; i < t.value.data.size(); ++i)
    adam_scalar(t.value.data[i], t.m.data[i], t.v.data[i], g.data[i], lr, a, bc1, bc2);
}

void adam_sparse(Tensor& t, const SparseRowGrad& g, double lr, const AdamSettings& a, double bc1,
                 double bc2) {
  if (!t.value.same_shape(g.buf)) throw std::invalid_argument("gradient shape mismatch for " + t.name);
  const int cols = t.value.cols;
  for (int r : g.touched_rows) {
    double* theta = t.value.row(r);
    double* m = t.m.row(r);
    double* v = t.v.row(r);
    const double* grow = g.buf.row(r);
    for (int c = 0; c < cols; ++c) adam_scalar(theta[c], m[c], v[c], grow[c], lr, a, bc1, bc2);
  }
}

}  // namespace

void adam_step(ParameterStore& store, const GradientSet& grads, double lr,
               const AdamSettings& settings) {
  store.step += 1;
  const double bc1 = 1.0 - std::pow(settings.beta1, static_cast<double>(store.step));
  const double bc2 = 1.0 - std::pow(settings.beta2, static_cast<double>(store.step));

  adam_sparse(store.entity_emb, grads.entity_emb, lr, settings, bc1, bc2);
  adam_sparse(store.rel_trans, grads.rel_trans, lr, settings, bc1, bc2);
  adam_sparse(store.rel_normal, grads.rel_normal, lr, settings, bc1, bc2);
  if (grads.dense_active) {
    for (size_t i = 0; i < store.agg_w.size(); ++i)
      adam_dense(store.agg_w[i], grads.agg_w[i], lr, settings, bc1, bc2);
    for (size_t i = 0; i < store.agg_b.size(); ++i)
      adam_dense(store.agg_b[i], grads.agg_b[i], lr, settings, bc1, bc2);
    for (size_t i = 0; i < store.att_target_w.size(); ++i)
      adam_dense(store.att_target_w[i], grads.att_target_w[i], lr, settings, bc1, bc2);
    for (size_t i = 0; i < store.att_entity_w.size(); ++i)
      adam_dense(store.att_entity_w[i], grads.att_entity_w[i], lr, settings, bc1, bc2);
    for (size_t i = 0; i < store.att_vec.size(); ++i)
      adam_dense(store.att_vec[i], grads.att_vec[i], lr, settings, bc1, bc2);
    adam_dense(store.out_w, grads.out_w, lr, settings, bc1, bc2);
    adam_dense(store.out_b, grads.out_b, lr, settings, bc1, bc2);
  }

  // keep hyperplane normals unit length
  for (int r : grads.rel_normal.touched_rows) {
    double* w = store.rel_normal.value.row(r);
    const double n = std::sqrt(norm2(w, store.rel_normal.value.cols));
    if (n > 0)
      for (int c = 0; c < store.rel_normal.value.cols; ++c) w[c] /= n;
  }
}

double l2_penalty(const ParameterStore& store, double lambda) {
  if (lambda == 0.0) return 0.0;
  double sum = 0.0;
  store.for_each_tensor([&sum](const Tensor& t) {
    for (double x : t.value.data) sum += x * x;
  });
  return lambda * sum;
}

void add_l2_gradient(const ParameterStore& store, double lambda, GradientSet& grads) {
  if (lambda == 0.0) return;
  const double scale = 2.0 * lambda;
  auto decay_sparse = [scale](const Tensor& t, SparseRowGrad& g) {
    for (int r : g.touched_rows) axpy(scale, t.value.row(r), g.buf.row(r), t.value.cols);
  };
  decay_sparse(store.entity_emb, grads.entity_emb);
  decay_sparse(store.rel_trans, grads.rel_trans);
  decay_sparse(store.rel_normal, grads.rel_normal);
  if (!grads.dense_active) return;
  auto decay_dense = [scale](const Tensor& t, Matrix& g) {
    for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += scale * t.value.data[i];
  };
  for (size_t i = 0; i < grads.agg_w.size(); ++i) decay_dense(store.agg_w[i], grads.agg_w[i]);
  for (size_t i = 0; i < grads.agg_b.size(); ++i) decay_dense(store.agg_b[i], grads.agg_b[i]);
  for (size_t i = 0; i < grads.att_target_w.size(); ++i)
    decay_dense(store.att_target_w[i], grads.att_target_w[i]);
  for (size_t i = 0; i < grads.att_entity_w.size(); ++i)
    decay_dense(store.att_entity_w[i], grads.att_entity_w[i]);
  for (size_t i = 0; i < grads.att_vec.size(); ++i) decay_dense(store.att_vec[i], grads.att_vec[i]);
  decay_dense(store.out_w, grads.out_w);
  decay_dense(store.out_b, grads.out_b);
}

namespace {

constexpr uint32_t kSnapshotMagic = 0x4b43534eu;  // "NSCK" little-endian on disk
constexpr uint32_t kSnapshotVersion = 1;

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
void read_pod(std::istream& in, T& v) {
  in.read(reinterpret_cast<char*>(&v), sizeof v);
}

void write_mat(std::ostream& out, const Matrix& m) {
  out.write(reinterpret_cast<const char*>(m.data.data()),
            static_cast<std::streamsize>(m.data.size() * sizeof(double)));
}

void read_mat(std::istream& in, Matrix& m) {
  in.read(reinterpret_cast<char*>(m.data.data()),
          static_cast<std::streamsize>(m.data.size() * sizeof(double)));
}

}  // namespace

void save_snapshot(const ParameterStore& store, uint64_t config_hash, uint64_t idmap_hash,
                   const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write snapshot " + path);
  write_pod(out, kSnapshotMagic);
  write_pod(out, kSnapshotVersion);
  write_pod(out, config_hash);
  write_pod(out, idmap_hash);
  write_pod(out, store.step);
  uint32_t count = 0;
  store.for_each_tensor([&count](const Tensor&) { ++count; });
  write_pod(out, count);
  store.for_each_tensor([&out](const Tensor& t) {
    const uint32_t name_len = static_cast<uint32_t>(t.name.size());
    write_pod(out, name_len);
    out.write(t.name.data(), name_len);
    write_pod(out, static_cast<int32_t>(t.value.rows));
    write_pod(out, static_cast<int32_t>(t.value.cols));
    write_mat(out, t.value);
    write_mat(out, t.m);
    write_mat(out, t.v);
  });
  if (!out) throw std::runtime_error("write failure on snapshot " + path);
}

SnapshotInfo load_snapshot(ParameterStore& store, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open snapshot " + path);
  uint32_t magic = 0, version = 0;
  read_pod(in, magic);
  read_pod(in, version);
  if (magic != kSnapshotMagic || version != kSnapshotVersion)
    throw std::runtime_error("unrecognized snapshot format: " + path);
  SnapshotInfo info;
  read_pod(in, info.config_hash);
  read_pod(in, info.idmap_hash);
  read_pod(in, store.step);
  uint32_t count = 0;
  read_pod(in, count);
  uint32_t expected = 0;
  store.for_each_tensor([&expected](const Tensor&) { ++expected; });
  if (count != expected) throw std::runtime_error("snapshot tensor count mismatch");
  bool ok = true;
  store.for_each_tensor([&](Tensor& t) {
    uint32_t name_len = 0;
    read_pod(in, name_len);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    int32_t rows = 0, cols = 0;
    read_pod(in, rows);
    read_pod(in, cols);
    if (name != t.name || rows != t.value.rows || cols != t.value.cols) ok = false;
    if (!ok) return;
    read_mat(in, t.value);
    read_mat(in, t.m);
    read_mat(in, t.v);
  });
  if (!ok || !in) throw std::runtime_error("snapshot layout mismatch: " + path);
  return info;
}

}  // namespace kcan
