#pragma once
// Alternating two-phase training: each epoch runs a full pass of knowledge
// embedding updates, rebuilds the attention cache, then a full pass of
// ranking updates over the training interactions. Deterministic under
// (seed, config, data) for any thread count.

#include <span>
#include <stdexcept>

#include "kcan/eval.hpp"
#include "kcan/model.hpp"

namespace kcan {

struct PhaseLoss {
  int epoch;
  int phase;  // 1 = knowledge embedding, 2 = ranking
  double loss;
};

struct TrainResult {
  std::vector<PhaseLoss> trace;  // two rows per epoch, phase 1 then phase 2
};

// Raised when a loss goes non-finite; a diagnostic dump is written to
// config.dump_dir first when one is configured.
class TrainDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Trains model.store in place for config.epochs epochs and leaves the model
// refreshed for inference. epochs = 0 returns the initialized store unchanged.
TrainResult train(Model& model, const DataSplit& split);

// "epoch,phase,loss" rows with a header.
std::string trace_to_csv(const std::vector<PhaseLoss>& trace);

struct AblationOutcome {
  Ablation variant;
  TrainResult result;
  EvalReport report;
};

// Trains and evaluates each variant from the same seed and data. Variant
// configs differ from the base only in the ablation flag.
std::vector<AblationOutcome> run_ablation(std::shared_ptr<const UnifiedGraph> graph,
                                          const DataSplit& split, const TrainConfig& base,
                                          std::span<const Ablation> variants);

}  // namespace kcan
