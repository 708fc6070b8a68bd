#pragma once
// All trainable tensors plus Adam state, sparse-row gradients, and the
// bit-exact snapshot format.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "kcan/config.hpp"
#include "kcan/tensor.hpp"

namespace kcan {

struct Tensor {
  std::string name;
  Matrix value;
  Matrix m;  // Adam first moment
  Matrix v;  // Adam second moment

  Tensor() = default;
  Tensor(std::string n, int rows, int cols)
      : name(std::move(n)), value(rows, cols), m(rows, cols), v(rows, cols) {}
};

// Gradient accumulator for one embedding table: a full-shape buffer whose rows
// are only meaningful (and only iterated) when marked touched.
struct SparseRowGrad {
  Matrix buf;
  std::vector<char> touched;
  std::vector<int> touched_rows;

  void resize_like(const Matrix& shape) {
    buf = Matrix(shape.rows, shape.cols);
    touched.assign(shape.rows, 0);
    touched_rows.clear();
  }

  // Row accumulator; marks the row touched on first access.
  double* row_acc(int r) {
    if (!touched[r]) {
      touched[r] = 1;
      touched_rows.push_back(r);
      std::fill(buf.row(r), buf.row(r) + buf.cols, 0.0);
    }
    return buf.row(r);
  }

  void clear() {
    for (int r : touched_rows) touched[r] = 0;
    touched_rows.clear();
  }

  void add(const SparseRowGrad& other) {
    for (int r : other.touched_rows) axpy(1.0, other.buf.row(r), row_acc(r), buf.cols);
  }

  void scale(double s) {
    for (int r : touched_rows)
      for (int c = 0; c < buf.cols; ++c) buf.row(r)[c] *= s;
  }
};

class ParameterStore;

struct GradientSet {
  SparseRowGrad entity_emb, rel_trans, rel_normal;
  std::vector<Matrix> agg_w, agg_b;            // layers 1..K+1
  std::vector<Matrix> att_target_w, att_entity_w, att_vec;  // LCSAN layers 1..K
  Matrix out_w, out_b;
  bool dense_active = false;  // whether the loss touched the dense layer tensors

  explicit GradientSet(const ParameterStore& store);
  void clear();
  void add(const GradientSet& other);
  void scale(double s);
};

class ParameterStore {
 public:
  Tensor entity_emb;  // V x F0
  Tensor rel_trans;   // R x F0, translation d_r
  Tensor rel_normal;  // R x F0, unit hyperplane normal w_r
  std::vector<Tensor> agg_w, agg_b;
  std::vector<Tensor> att_target_w, att_entity_w, att_vec;
  Tensor out_w, out_b;
  uint64_t step = 0;

  int embedding_dim = 0;
  std::vector<int> tower;
  int output_dim = 0;
  int hops = 0;

  int attention_dim(int layer_j) const { return tower[layer_j]; }  // d_a for LCSAN layer j (1-based)

  void for_each_tensor(const std::function<void(Tensor&)>& fn);
  void for_each_tensor(const std::function<void(const Tensor&)>& fn) const;
  size_t scalar_count() const;
};

ParameterStore init_params(const TrainConfig& cfg, int entity_count, int relation_count);

struct AdamSettings {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

void adam_step(ParameterStore& store, const GradientSet& grads, double lr,
               const AdamSettings& settings = {});

double l2_penalty(const ParameterStore& store, double lambda);

// Adds 2*lambda*theta to grads: all dense tensors when the set is dense-active,
// embedding tables only on rows already touched by the batch.
void add_l2_gradient(const ParameterStore& store, double lambda, GradientSet& grads);

// Snapshot: versioned binary with shapes, values, moments, and the config /
// id-map fingerprints. Round-trips bit-exactly.
void save_snapshot(const ParameterStore& store, uint64_t config_hash, uint64_t idmap_hash,
                   const std::string& path);
struct SnapshotInfo {
  uint64_t config_hash = 0;
  uint64_t idmap_hash = 0;
};
SnapshotInfo load_snapshot(ParameterStore& store, const std::string& path);

}  // namespace kcan
