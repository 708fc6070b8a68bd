#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "helpers.hpp"
#include "kcan/gradcheck.hpp"
#include "kcan/kagcn.hpp"

using namespace kcan;
using kcan::testing::make_graph;
using kcan::testing::random_graph;

namespace {

TrainConfig dim2_cfg() {
  TrainConfig cfg;
  cfg.embedding_dim = 2;
  cfg.tower = {2, 2, 2};
  cfg.output_dim = 2;
  return cfg;
}

void set_row(Matrix& m, int r, std::vector<double> v) {
  for (size_t i = 0; i < v.size(); ++i) m.at(r, static_cast<int>(i)) = v[i];
}

}  // namespace

TEST_CASE("edge logits are cosines of translated projections") {
  ParameterStore s = init_params(dim2_cfg(), 4, 1);
  set_row(s.rel_normal.value, 0, {0.0, 1.0});
  set_row(s.rel_trans.value, 0, {0.0, 0.0});
  set_row(s.entity_emb.value, 0, {1.0, 5.0});    // projects to (1, 0)
  set_row(s.entity_emb.value, 1, {2.0, -3.0});   // projects to (2, 0): aligned
  set_row(s.entity_emb.value, 2, {-4.0, 1.0});   // projects to (-4, 0): opposite
  set_row(s.entity_emb.value, 3, {0.0, 7.0});    // projects to zero vector

  CHECK(edge_logit(s, 0, 0, 1) == doctest::Approx(1.0));
  CHECK(edge_logit(s, 0, 0, 2) == doctest::Approx(-1.0));
  CHECK(edge_logit(s, 0, 0, 3) == doctest::Approx(0.0));  // epsilon guard
  for (EntityId t = 1; t <= 3; ++t) {
    const double c = edge_logit(s, 0, 0, t);
    CHECK(c >= -1.0);
    CHECK(c <= 1.0);
  }
}

TEST_CASE("attention rows are softmaxes of the logits") {
  // head 0 with two neighbors whose logits are exactly (1, -1)
  ParameterStore s = init_params(dim2_cfg(), 3, 1);
  set_row(s.rel_normal.value, 0, {0.0, 1.0});
  set_row(s.rel_trans.value, 0, {0.0, 0.0});
  set_row(s.entity_emb.value, 0, {1.0, 0.0});
  set_row(s.entity_emb.value, 1, {2.0, 0.0});
  set_row(s.entity_emb.value, 2, {-3.0, 0.0});
  const UnifiedGraph g = make_graph(3, 1, {{0, 0, 1}, {0, 0, 2}});

  const AttentionCache cache = build_attention_cache(g, s);
  const auto row = cache.row(g, 0);
  REQUIRE(row.size() == 2);
  CHECK(std::abs(row[0] - 0.8808) < 1e-4);
  CHECK(std::abs(row[1] - 0.1192) < 1e-4);
  CHECK(cache.row(g, 1).empty());

  // singleton neighborhood gets weight one
  const UnifiedGraph g1 = make_graph(2, 1, {{0, 0, 1}});
  const AttentionCache c1 = build_attention_cache(g1, s);
  CHECK(c1.row(g1, 0)[0] == doctest::Approx(1.0));

  // equal logits split evenly
  set_row(s.entity_emb.value, 2, {5.0, 0.0});
  const AttentionCache c2 = build_attention_cache(g, s);
  CHECK(c2.row(g, 0)[0] == doctest::Approx(0.5));
  CHECK(c2.row(g, 0)[1] == doctest::Approx(0.5));
}

TEST_CASE("softmax rows are shift invariant") {
  Rng rng = make_stream(21, StreamTag::kGradProbe);
  for (int trial = 0; trial < 50; ++trial) {
    const size_t n = 1 + rng() % 8;
    std::vector<double> a(n), b(n);
    const double shift = 10.0 * (uniform01(rng) - 0.5);
    for (size_t i = 0; i < n; ++i) {
      a[i] = 4.0 * (uniform01(rng) - 0.5);
      b[i] = a[i] + shift;
    }
    softmax_row(a.data(), n);
    softmax_row(b.data(), n);
    for (size_t i = 0; i < n; ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-9));
  }
}

TEST_CASE("every cache row lies on the probability simplex") {
  Rng rng = make_stream(31, StreamTag::kGradProbe);
  TrainConfig cfg;
  cfg.embedding_dim = 8;
  cfg.tower = {8, 4, 4};
  cfg.output_dim = 4;
  for (int trial = 0; trial < 50; ++trial) {
    const int entities = 2 + static_cast<int>(rng() % 20);
    const int relations = 1 + static_cast<int>(rng() % 4);
    const UnifiedGraph g = random_graph(rng, entities, relations, 3 * entities);
    cfg.seed = trial;
    const ParameterStore s = init_params(cfg, entities, relations);
    const AttentionCache cache = build_attention_cache(g, s);
    for (EntityId v = 0; v < g.entity_count; ++v) {
      const auto row = cache.row(g, v);
      if (row.empty()) continue;
      double sum = 0.0;
      for (double p : row) {
        CHECK(p >= 0.0);
        sum += p;
      }
      CHECK(std::abs(sum - 1.0) <= 1e-6);
      CHECK(cache.cdf_row(g, v).back() == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
}

TEST_CASE("neighborhood aggregation is an attention-weighted average") {
  ParameterStore s = init_params(dim2_cfg(), 4, 1);
  const UnifiedGraph g = make_graph(4, 1, {{0, 0, 1}, {0, 0, 2}});
  AttentionCache cache = build_uniform_cache(g);
  set_row(s.entity_emb.value, 1, {0.6, -0.4});
  set_row(s.entity_emb.value, 2, {-0.6, 0.4});

  double out[2];
  aggregate_neighborhood(g, cache, s.entity_emb.value, 0, out);
  CHECK(out[0] == doctest::Approx(0.0));  // opposite vectors cancel at 0.5/0.5
  CHECK(out[1] == doctest::Approx(0.0));

  aggregate_neighborhood(g, cache, s.entity_emb.value, 3, out);  // isolated
  CHECK(out[0] == 0.0);
  CHECK(out[1] == 0.0);

  const UnifiedGraph g1 = make_graph(2, 1, {{0, 0, 1}});
  const AttentionCache c1 = build_uniform_cache(g1);
  aggregate_neighborhood(g1, c1, s.entity_emb.value, 0, out);
  CHECK(out[0] == doctest::Approx(0.6));
  CHECK(out[1] == doctest::Approx(-0.4));
}

TEST_CASE("aggregation stays in the convex hull of the neighbors") {
  Rng rng = make_stream(41, StreamTag::kGradProbe);
  TrainConfig cfg;
  cfg.embedding_dim = 5;
  cfg.tower = {5, 3, 3};
  cfg.output_dim = 3;
  for (int trial = 0; trial < 20; ++trial) {
    const int entities = 3 + static_cast<int>(rng() % 10);
    const UnifiedGraph g = random_graph(rng, entities, 2, 4 * entities);
    cfg.seed = 100 + trial;
    const ParameterStore s = init_params(cfg, entities, 2);
    const AttentionCache cache = build_attention_cache(g, s);
    std::vector<double> out(5), dir(5);
    for (EntityId v = 0; v < g.entity_count; ++v) {
      if (g.degree(v) == 0) continue;
      aggregate_neighborhood(g, cache, s.entity_emb.value, v, out.data());
      // support-function test: in every direction, the aggregate cannot beat
      // the farthest neighbor
      for (int probe = 0; probe < 10; ++probe) {
        for (double& d : dir) d = 2.0 * uniform01(rng) - 1.0;
        double best = -1e300;
        for (size_t k = g.adj_offsets[v]; k < g.adj_offsets[v + 1]; ++k)
          best = std::max(best,
                          dot(dir.data(), s.entity_emb.value.row(g.triples[k].tail), 5));
        CHECK(dot(dir.data(), out.data(), 5) <= best + 1e-9);
      }
    }
  }
}

TEST_CASE("aggregation ignores neighbor storage order") {
  Rng rng = make_stream(51, StreamTag::kGradProbe);
  TrainConfig cfg;
  cfg.embedding_dim = 4;
  cfg.tower = {4, 3, 3};
  cfg.output_dim = 3;
  const UnifiedGraph g = random_graph(rng, 8, 2, 30);
  const ParameterStore s = init_params(cfg, 8, 2);
  const AttentionCache cache = build_attention_cache(g, s);

  UnifiedGraph shuffled = g;
  AttentionCache shuffled_cache = cache;
  for (EntityId v = 0; v < g.entity_count; ++v) {
    const size_t lo = g.adj_offsets[v], hi = g.adj_offsets[v + 1];
    if (hi - lo < 2) continue;
    std::vector<size_t> perm(hi - lo);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (size_t k = 0; k < perm.size(); ++k) {
      shuffled.triples[lo + k] = g.triples[lo + perm[k]];
      shuffled_cache.prob[lo + k] = cache.prob[lo + perm[k]];
    }
  }
  std::vector<double> a(4), b(4);
  for (EntityId v = 0; v < g.entity_count; ++v) {
    aggregate_neighborhood(g, cache, s.entity_emb.value, v, a.data());
    aggregate_neighborhood(shuffled, shuffled_cache, s.entity_emb.value, v, b.data());
    for (int i = 0; i < 4; ++i) CHECK(std::abs(a[i] - b[i]) < 1e-6);
  }
}

TEST_CASE("global layer edge cases") {
  TrainConfig cfg = dim2_cfg();
  ParameterStore s = init_params(cfg, 3, 1);
  const UnifiedGraph g = make_graph(3, 1, {{0, 0, 1}, {1, 0, 2}});
  const AttentionCache cache = build_attention_cache(g, s);
  GlobalPropagation work;

  s.agg_w[0].value.fill(0.0);
  s.agg_b[0].value.fill(0.0);
  kagcn_forward_all(g, cache, s, {}, work);
  for (double x : work.out.data) CHECK(x == 0.0);

  s.agg_b[0].value.fill(0.7);
  kagcn_forward_all(g, cache, s, {}, work);
  for (double x : work.out.data) CHECK(x == doctest::Approx(0.7));
}

TEST_CASE("dropout masks scale and zero deterministically") {
  TrainConfig cfg;
  ParameterStore s = init_params(cfg, 30, 3);
  Rng rng = make_stream(61, StreamTag::kGradProbe);
  const UnifiedGraph g = random_graph(rng, 30, 3, 100);
  const AttentionCache cache = build_attention_cache(g, s);

  GlobalPropagation plain, dropped, again;
  kagcn_forward_all(g, cache, s, {}, plain);
  const DropoutSpec spec{0.9, mix(5, 77)};
  kagcn_forward_all(g, cache, s, spec, dropped);
  kagcn_forward_all(g, cache, s, spec, again);
  CHECK(dropped.out.data == again.out.data);  // same spec, same masks

  int zeros = 0;
  for (size_t i = 0; i < dropped.out.data.size(); ++i) {
    if (dropped.mask.data[i] == 0.0) {
      ++zeros;
      CHECK(dropped.out.data[i] == 0.0);
    } else {
      CHECK(dropped.out.data[i] == doctest::Approx(plain.out.data[i] / 0.9));
    }
  }
  // about 10% of 30*16 = 480 entries; loose band
  CHECK(zeros > 10);
  CHECK(zeros < 110);
}

TEST_CASE("global layer gradients agree with finite differences") {
  TrainConfig cfg;
  cfg.embedding_dim = 6;
  cfg.tower = {5, 4, 4};
  cfg.output_dim = 4;
  Rng rng = make_stream(71, StreamTag::kGradProbe);
  const UnifiedGraph g = random_graph(rng, 12, 2, 40);
  ParameterStore store = init_params(cfg, 12, 2);
  const AttentionCache cache = build_attention_cache(g, store);

  // random linear readout of a few output rows
  std::vector<int> rows = {0, 3, 7, 11};
  Matrix readout(static_cast<int>(rows.size()), 5);
  for (double& x : readout.data) x = 2.0 * uniform01(rng) - 1.0;

  for (bool with_dropout : {false, true}) {
    const DropoutSpec spec =
        with_dropout ? DropoutSpec{0.8, mix(9, 13)} : DropoutSpec{};
    const LossEvaluator eval = [&](const ParameterStore& s, GradientSet* grads) {
      GlobalPropagation work;
      kagcn_forward_all(g, cache, s, spec, work);
      double loss = 0.0;
      for (size_t k = 0; k < rows.size(); ++k)
        loss += dot(readout.row(static_cast<int>(k)), work.out.row(rows[k]), 5);
      if (grads) {
        SparseRowGrad d_out;
        d_out.resize_like(work.out);
        for (size_t k = 0; k < rows.size(); ++k)
          axpy(1.0, readout.row(static_cast<int>(k)), d_out.row_acc(rows[k]), 5);
        kagcn_backward_all(g, cache, s, work, d_out, *grads);
      }
      return loss;
    };
    const GradCheckReport report = grad_check(eval, store, 300, 1e-4, 81);
    INFO("dropout ", with_dropout, " worst ", report.worst_tensor, " analytic ",
         report.worst_analytic, " numeric ", report.worst_numeric);
    CHECK(report.max_rel_err <= 1e-4);
  }
}
