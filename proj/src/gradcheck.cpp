#include "kcan/gradcheck.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "kcan/rng.hpp"

namespace kcan {

namespace {

struct TensorRef {
  Tensor* tensor;
  const Matrix* dense_grad;         // exactly one of these two is set
  const SparseRowGrad* sparse_grad;
};

std::vector<TensorRef> enumerate(ParameterStore& store, const GradientSet& grads) {
  std::vector<TensorRef> refs;
  refs.push_back({&store.entity_emb, nullptr, &grads.entity_emb});
  refs.push_back({&store.rel_trans, nullptr, &grads.rel_trans});
  refs.push_back({&store.rel_normal, nullptr, &grads.rel_normal});
  for (size_t i = 0; i < store.agg_w.size(); ++i) refs.push_back({&store.agg_w[i], &grads.agg_w[i], nullptr});
  for (size_t i = 0; i < store.agg_b.size(); ++i) refs.push_back({&store.agg_b[i], &grads.agg_b[i], nullptr});
  for (size_t i = 0; i < store.att_target_w.size(); ++i)
    refs.push_back({&store.att_target_w[i], &grads.att_target_w[i], nullptr});
  for (size_t i = 0; i < store.att_entity_w.size(); ++i)
    refs.push_back({&store.att_entity_w[i], &grads.att_entity_w[i], nullptr});
  for (size_t i = 0; i < store.att_vec.size(); ++i)
    refs.push_back({&store.att_vec[i], &grads.att_vec[i], nullptr});
  refs.push_back({&store.out_w, &grads.out_w, nullptr});
  refs.push_back({&store.out_b, &grads.out_b, nullptr});
  return refs;
}

double grad_entry(const TensorRef& ref, int r, int c) {
  if (ref.dense_grad) return ref.dense_grad->at(r, c);
  return ref.sparse_grad->touched[r] ? ref.sparse_grad->buf.at(r, c) : 0.0;
}

}  // namespace

GradCheckReport grad_check(const LossEvaluator& loss, ParameterStore& store, int probe_count,
                           double h, uint64_t seed) {
  if (probe_count <= 0) throw std::invalid_argument("probe_count must be positive");
  if (!(h > 0)) throw std::invalid_argument("step size must be positive");

  GradientSet grads(store);
  grads.clear();
  const double base = loss(store, &grads);
  if (!std::isfinite(base)) throw std::runtime_error("loss is not finite");

  std::vector<TensorRef> refs = enumerate(store, grads);
  size_t total = 0;
  for (const TensorRef& ref : refs) total += ref.tensor->value.size();
  if (total == 0) throw std::runtime_error("no parameters to probe");

  Rng rng = make_stream(seed, StreamTag::kGradProbe);
  GradCheckReport report;
  for (int probe = 0; probe < probe_count; ++probe) {
    size_t flat = rng() % total;
    size_t ref_idx = 0;
    while (flat >= refs[ref_idx].tensor->value.size()) {
      flat -= refs[ref_idx].tensor->value.size();
      ++ref_idx;
    }
    const TensorRef& ref = refs[ref_idx];
    const int r = static_cast<int>(flat) / ref.tensor->value.cols;
    const int c = static_cast<int>(flat) % ref.tensor->value.cols;

    double& theta = ref.tensor->value.at(r, c);
    const double saved = theta;
    theta = saved + h;
    const double up = loss(store, nullptr);
    theta = saved - h;
    const double down = loss(store, nullptr);
    theta = saved;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw std::runtime_error("perturbed loss is not finite");

    const double numeric = (up - down) / (2.0 * h);
    const double analytic = grad_entry(ref, r, c);
    if (!std::isfinite(analytic)) throw std::runtime_error("analytic gradient is not finite");
    const double rel = std::abs(analytic - numeric) / std::max(std::abs(numeric), 1e-8);
    if (rel > report.max_rel_err) {
      report.max_rel_err = rel;
      report.worst_tensor = ref.tensor->name;
      report.worst_row = r;
      report.worst_col = c;
      report.worst_analytic = analytic;
      report.worst_numeric = numeric;
    }
  }
  return report;
}

}  // namespace kcan
