#include "kcan/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <vector>

#include "kcan/parallel.hpp"

namespace kcan {

int rank_against(double test_score, std::span<const double> negative_scores) {
  int rank = 1;
  for (const double s : negative_scores) rank += s >= test_score ? 1 : 0;
  return rank;
}

double hit_at_k(int rank, int k) { return rank <= k ? 1.0 : 0.0; }

double ndcg_at_k(int rank, int k) {
  return rank <= k ? 1.0 / std::log2(static_cast<double>(rank) + 1.0) : 0.0;
}

double auc(std::span<const double> pos, std::span<const double> neg) {
  if (pos.empty() || neg.empty())
    throw std::invalid_argument("auc needs scores on both sides");
  // average-rank Mann-Whitney; exact for ties (all ranks are half-integers)
  std::vector<std::pair<double, int>> all;
  all.reserve(pos.size() + neg.size());
  for (const double s : pos) all.emplace_back(s, 1);
  for (const double s : neg) all.emplace_back(s, 0);
  std::sort(all.begin(), all.end());

  double pos_rank_sum = 0.0;
  size_t i = 0;
  while (i < all.size()) {
    size_t j = i;
    int pos_in_group = 0;
    while (j < all.size() && all[j].first == all[i].first) pos_in_group += all[j++].second;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    pos_rank_sum += avg_rank * pos_in_group;
    i = j;
  }
  const double np = static_cast<double>(pos.size());
  const double nn = static_cast<double>(neg.size());
  const double u = pos_rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * nn);
}

std::string EvalReport::to_text() const {
  char buf[512];
  std::string out;
  const auto line = [&out, &buf](const char* name, double v) {
    std::snprintf(buf, sizeof buf, "%s\t%.17g\n", name, v);
    out += buf;
  };
  line("hit@10", hit10);
  line("ndcg@10", ndcg10);
  line("auc", auc_value);
  std::snprintf(buf, sizeof buf, "users\t%d\n", users_evaluated);
  out += buf;
  std::snprintf(buf, sizeof buf, "negative_shortfalls\t%d\n", negative_shortfalls);
  out += buf;
  std::snprintf(buf, sizeof buf, "seed\t%llu\n", static_cast<unsigned long long>(seed));
  out += buf;
  std::snprintf(buf, sizeof buf, "config_hash\t%016llx\n",
                static_cast<unsigned long long>(config_hash));
  out += buf;
  return out;
}

EvalReport evaluate(const Model& model, const DataSplit& split) {
  const UnifiedGraph& g = *model.graph;
  const uint64_t seed = model.cfg.seed;
  const int item_count = static_cast<int>(g.item_entity.size());

  // everything each user touched, train or test, is off-limits as a negative
  const int user_count = static_cast<int>(g.user_entity.size());
  std::vector<std::vector<int>> interacted(user_count);
  for (const auto& [u, i] : split.train_edges) interacted[u].push_back(i);
  for (const auto& [u, i] : split.test_edges) interacted[u].push_back(i);
  for (auto& v : interacted) std::sort(v.begin(), v.end());

  const size_t tests = split.test_edges.size();
  std::vector<double> hit(tests), ndcg(tests), pos_scores(tests), neg_scores(tests);
  std::vector<char> short_neg(tests, 0);

  const size_t chunk_count = (tests + kChunkSize - 1) / kChunkSize;
  run_chunks(chunk_count, resolve_threads(model.cfg.threads), [&](size_t ci) {
    std::vector<int> eligible;
    for (size_t t = ci * kChunkSize; t < std::min(tests, (ci + 1) * kChunkSize); ++t) {
      const auto [u, i_test] = split.test_edges[t];
      const auto& taken = interacted[u];
      eligible.clear();
      for (int i = 0; i < item_count; ++i)
        if (!std::binary_search(taken.begin(), taken.end(), i)) eligible.push_back(i);

      Rng rng = make_stream(seed, StreamTag::kEvalUser, static_cast<uint64_t>(u));
      const int want = kNegativeSampleCap;
      const int n_neg = std::min<int>(want, static_cast<int>(eligible.size()));
      if (n_neg < want) short_neg[t] = 1;
      for (int k = 0; k < n_neg; ++k) {  // partial Fisher-Yates
        const size_t j =
            k + static_cast<size_t>(uniform01(rng) * static_cast<double>(eligible.size() - k));
        std::swap(eligible[k], eligible[j]);
      }

      const double s_test = model.score(g.user_entity[u], g.item_entity[i_test]);
      std::vector<double> negs(n_neg);
      for (int k = 0; k < n_neg; ++k)
        negs[k] = model.score(g.user_entity[u], g.item_entity[eligible[k]]);

      const int rank = rank_against(s_test, negs);
      hit[t] = hit_at_k(rank);
      ndcg[t] = ndcg_at_k(rank);

      pos_scores[t] = s_test;
      if (eligible.empty()) {
        neg_scores[t] = s_test;  // degenerate: no negative exists, count as tie
      } else {
        Rng nrng = make_stream(seed, StreamTag::kEvalUser, static_cast<uint64_t>(u), 1);
        const size_t pick =
            static_cast<size_t>(uniform01(nrng) * static_cast<double>(eligible.size()));
        neg_scores[t] = model.score(g.user_entity[u], g.item_entity[eligible[pick]]);
      }
    }
  });

  EvalReport report;
  report.seed = seed;
  report.config_hash = model.cfg.hash();
  report.users_evaluated = static_cast<int>(tests);
  if (tests > 0) {
    double hs = 0.0, ns = 0.0;
    int shorts = 0;
    for (size_t t = 0; t < tests; ++t) {
      hs += hit[t];
      ns += ndcg[t];
      shorts += short_neg[t];
    }
    report.hit10 = hs / static_cast<double>(tests);
    report.ndcg10 = ns / static_cast<double>(tests);
    report.negative_shortfalls = shorts;
    report.auc_value = auc(pos_scores, neg_scores);
  }
  return report;
}

}  // namespace kcan
