#pragma once
// Finite-difference verification harness for analytic gradients.

#include <cstdint>
#include <functional>
#include <string>

#include "kcan/params.hpp"

namespace kcan {

// Evaluates a scalar loss over the store; when `grads` is non-null it must
// also be filled (cleared first) with the analytic gradients. The evaluator
// has to be deterministic in the store: any sampling it does must come from
// streams it re-seeds itself on every call.
using LossEvaluator = std::function<double(const ParameterStore&, GradientSet*)>;

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_tensor;
  int worst_row = -1;
  int worst_col = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Central differences at `probe_count` uniformly chosen scalar parameters.
// Relative error per probe is |analytic - numeric| / max(|numeric|, 1e-8).
// Throws on non-finite losses or gradients.
GradCheckReport grad_check(const LossEvaluator& loss, ParameterStore& store, int probe_count,
                           double h, uint64_t seed);

}  // namespace kcan
