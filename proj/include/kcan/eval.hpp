#pragma once
// Leave-one-out ranking metrics (Hit@K, NDCG@K over 100 sampled negatives)
// and Mann-Whitney AUC, all brute-force verifiable.

#include <span>
#include <string>

#include "kcan/model.hpp"

namespace kcan {

// 1 + #{strictly greater} + #{ties}: ties count against the test item so a
// constant scorer cannot look good.
int rank_against(double test_score, std::span<const double> negative_scores);

double hit_at_k(int rank, int k = 10);
double ndcg_at_k(int rank, int k = 10);  // 1/log2(rank+1) inside the cut, else 0

// (#{pos>neg} + 0.5 #{pos=neg}) / (|pos| |neg|); throws on an empty side.
double auc(std::span<const double> pos, std::span<const double> neg);

struct EvalReport {
  double hit10 = 0.0;
  double ndcg10 = 0.0;
  double auc_value = 0.0;
  int users_evaluated = 0;
  int negative_shortfalls = 0;  // users with fewer than 100 eligible negatives
  uint64_t seed = 0;
  uint64_t config_hash = 0;

  std::string to_text() const;  // one "name\tvalue" line per field
};

// Scores every held-out interaction against 100 per-user sampled negatives
// (excluding everything the user interacted with, train and test) and pools
// test positives against 1:1 sampled negatives for AUC. Deterministic per
// (model seed, split).
EvalReport evaluate(const Model& model, const DataSplit& split);

}  // namespace kcan
