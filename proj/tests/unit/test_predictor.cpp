#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "helpers.hpp"
#include "kcan/gradcheck.hpp"
#include "kcan/predictor.hpp"

using namespace kcan;
using kcan::testing::make_graph;
using kcan::testing::random_graph;

namespace {

void set_row(Matrix& m, int r, std::vector<double> v) {
  for (size_t i = 0; i < v.size(); ++i) m.at(r, static_cast<int>(i)) = v[i];
}

}  // namespace

TEST_CASE("output projection is affine in the two halves") {
  TrainConfig cfg;
  cfg.embedding_dim = 2;
  cfg.tower = {2, 2, 2};
  cfg.output_dim = 2;
  ParameterStore s = init_params(cfg, 3, 1);

  SUBCASE("zero weights leave only the bias") {
    s.out_w.value.fill(0.0);
    set_row(s.out_b.value, 0, {0.4, -0.7});
    const std::vector<double> glob = {1.0, 2.0}, loc = {3.0, 4.0};
    std::vector<double> out(2);
    output_repr(s, glob.data(), loc.data(), out.data());
    CHECK(out[0] == 0.4);
    CHECK(out[1] == -0.7);
  }
  SUBCASE("null local half means a zero vector") {
    Rng rng(3);
    for (double& x : s.out_w.value.data) x = uniform01(rng);
    set_row(s.out_b.value, 0, {0.1, 0.2});
    const std::vector<double> glob = {1.0, -2.0};
    const std::vector<double> zeros = {0.0, 0.0};
    std::vector<double> with_null(2), with_zeros(2);
    output_repr(s, glob.data(), nullptr, with_null.data());
    output_repr(s, glob.data(), zeros.data(), with_zeros.data());
    CHECK(with_null == with_zeros);
  }
  SUBCASE("hand example") {
    // W rows (1,0,2,0), (0,1,0,-1); b = (1, -1)
    set_row(s.out_w.value, 0, {1.0, 0.0, 2.0, 0.0});
    set_row(s.out_w.value, 1, {0.0, 1.0, 0.0, -1.0});
    set_row(s.out_b.value, 0, {1.0, -1.0});
    const std::vector<double> glob = {3.0, 5.0}, loc = {7.0, 11.0};
    std::vector<double> out(2);
    output_repr(s, glob.data(), loc.data(), out.data());
    CHECK(out[0] == doctest::Approx(3.0 + 14.0 + 1.0));
    CHECK(out[1] == doctest::Approx(5.0 - 11.0 - 1.0));
  }
}

TEST_CASE("pair score is the inner product") {
  const std::vector<double> a = {1.0, 0.0}, b = {0.0, 1.0}, c = {1.0, 0.0};
  CHECK(pair_score(a.data(), c.data(), 2) == 1.0);
  CHECK(pair_score(a.data(), b.data(), 2) == 0.0);
  const std::vector<double> a2 = {2.0, 0.0};
  CHECK(pair_score(a2.data(), c.data(), 2) == 2.0 * pair_score(a.data(), c.data(), 2));
}

TEST_CASE("reported objective adds the weight penalty") {
  TrainConfig cfg;
  cfg.embedding_dim = 2;
  cfg.tower = {2, 2, 2};
  cfg.output_dim = 2;
  ParameterStore s = init_params(cfg, 3, 1);
  CHECK(total_loss(0.5, 0.7, s, 0.0) == doctest::Approx(1.2));

  ParameterStore zeroed = init_params(cfg, 3, 1);
  zeroed.for_each_tensor([](Tensor& t) { t.value.fill(0.0); });
  CHECK(total_loss(0.5, 0.7, zeroed, 123.0) == doctest::Approx(1.2));

  const double lo = total_loss(0.5, 0.7, s, 1e-4);
  const double hi = total_loss(0.5, 0.7, s, 1e-3);
  CHECK(hi > lo);
}

TEST_CASE("ranking loss properties") {
  // the pairwise loss is softplus(-margin)
  CHECK(stable_softplus(0.0) == doctest::Approx(std::log(2.0)));
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const double m = 6.0 * uniform01(rng) - 3.0;
    const double sym = stable_softplus(-m) + stable_softplus(m);
    CHECK(sym >= 2.0 * std::log(2.0) - 1e-15);
    if (std::abs(m) > 1e-3) CHECK(sym > 2.0 * std::log(2.0));
    if (trial > 0) {
      // strictly decreasing in the margin
      CHECK(stable_softplus(-(m + 0.5)) < stable_softplus(-m));
    }
  }
}

TEST_CASE("equal positive and negative scores give ln 2") {
  TrainConfig cfg;
  cfg.embedding_dim = 3;
  cfg.tower = {3, 2, 2};
  cfg.output_dim = 2;
  cfg.ablation = Ablation::kNoBoth;
  const UnifiedGraph g = make_graph(4, 1, {{0, 0, 1}, {0, 0, 2}, {0, 0, 3}});
  ParameterStore store = init_params(cfg, 4, 1);
  // items 1 and 2 share an embedding row, so their scores tie exactly
  set_row(store.entity_emb.value, 1, {0.5, -0.25, 1.0});
  set_row(store.entity_emb.value, 2, {0.5, -0.25, 1.0});

  const AttentionCache cache = build_uniform_cache(g);
  GradientSet grads(store);
  SparseRowGrad d_inputs;
  d_inputs.resize_like(store.entity_emb.value);
  PhaseTwoPool pool;
  const std::vector<TargetBatchItem> batch = {{0, 1, 2}};
  const BatchStreams streams{9, 0, 0, false};
  const double loss = target_loss_batch(g, cache, store, cfg, store.entity_emb.value, batch,
                                        streams, grads, d_inputs, pool);
  CHECK(loss == doctest::Approx(std::log(2.0)));
}

TEST_CASE("batch loss is the mean over samples") {
  TrainConfig cfg;
  cfg.embedding_dim = 3;
  cfg.tower = {3, 2, 2};
  cfg.output_dim = 2;
  cfg.ablation = Ablation::kNoBoth;
  const UnifiedGraph g = make_graph(5, 1, {{0, 0, 1}});
  ParameterStore store = init_params(cfg, 5, 1);
  const AttentionCache cache = build_uniform_cache(g);

  const auto run = [&](const std::vector<TargetBatchItem>& batch) {
    GradientSet grads(store);
    SparseRowGrad d_inputs;
    d_inputs.resize_like(store.entity_emb.value);
    PhaseTwoPool pool;
    const BatchStreams streams{9, 0, 0, false};
    return target_loss_batch(g, cache, store, cfg, store.entity_emb.value, batch, streams, grads,
                             d_inputs, pool);
  };
  const TargetBatchItem item{0, 1, 2};
  const double one = run({item});
  const double twice = run({item, item});
  CHECK(twice == doctest::Approx(one));
}

TEST_CASE("batch gradients are deterministic") {
  TrainConfig cfg;
  cfg.embedding_dim = 4;
  cfg.tower = {4, 3, 3};
  cfg.output_dim = 3;
  cfg.neighbor_samples = 3;
  cfg.ablation = Ablation::kNoGk;
  Rng grng = make_stream(12, StreamTag::kGradProbe);
  const UnifiedGraph g = random_graph(grng, 10, 2, 30);
  ParameterStore store = init_params(cfg, 10, 2);
  const AttentionCache cache = build_uniform_cache(g);
  const std::vector<TargetBatchItem> batch = {{0, 1, 2}, {3, 4, 5}, {6, 7, 8}};
  const BatchStreams streams{77, 2, 5, true};

  const auto run = [&](GradientSet& grads, SparseRowGrad& d_inputs) {
    d_inputs.resize_like(store.entity_emb.value);
    PhaseTwoPool pool;
    return target_loss_batch(g, cache, store, cfg, store.entity_emb.value, batch, streams, grads,
                             d_inputs, pool);
  };
  GradientSet g1(store), g2(store);
  SparseRowGrad d1, d2;
  const double l1 = run(g1, d1);
  const double l2 = run(g2, d2);
  CHECK(l1 == l2);
  CHECK(g1.out_w.data == g2.out_w.data);
  CHECK(g1.att_vec[0].data == g2.att_vec[0].data);
  REQUIRE(d1.touched_rows == d2.touched_rows);
  for (const int r : d1.touched_rows)
    for (int c = 0; c < 4; ++c) CHECK(d1.buf.row(r)[c] == d2.buf.row(r)[c]);
}

TEST_CASE("ranking loss gradients agree with finite differences") {
  TrainConfig cfg;
  cfg.embedding_dim = 4;
  cfg.tower = {4, 3, 3};
  cfg.output_dim = 3;
  cfg.neighbor_samples = 4;
  cfg.dropout = 0.0;
  Rng grng = make_stream(31, StreamTag::kGradProbe);
  const UnifiedGraph g = random_graph(grng, 12, 2, 46);
  const std::vector<TargetBatchItem> batch = {{0, 1, 2}, {3, 4, 5}, {6, 7, 8}};

  SUBCASE("through the refinement stack") {
    cfg.ablation = Ablation::kNoGk;
    for (const double drop : {0.0, 0.25}) {
      cfg.dropout = drop;
      ParameterStore store = init_params(cfg, 12, 2);
      const AttentionCache cache = build_uniform_cache(g);
      const BatchStreams streams{5, 1, 3, true};
      const LossEvaluator eval = [&](const ParameterStore& s, GradientSet* grads) {
        GradientSet local(s);
        GradientSet& sink = grads ? *grads : local;
        SparseRowGrad d_inputs;
        d_inputs.resize_like(s.entity_emb.value);
        PhaseTwoPool pool;
        const double loss = target_loss_batch(g, cache, s, cfg, s.entity_emb.value, batch,
                                              streams, sink, d_inputs, pool);
        for (const int r : d_inputs.touched_rows)
          axpy(1.0, d_inputs.buf.row(r), sink.entity_emb.row_acc(r), 4);
        return loss;
      };
      const GradCheckReport report = grad_check(eval, store, 350, 1e-4, 63);
      INFO("dropout ", drop, " worst ", report.worst_tensor, " row ", report.worst_row,
           " analytic ", report.worst_analytic, " numeric ", report.worst_numeric);
      CHECK(report.max_rel_err <= 1e-4);
    }
  }

  SUBCASE("through the global layer as well") {
    cfg.ablation = Ablation::kFull;
    cfg.tower = {5, 3, 3};
    cfg.dropout = 0.2;
    ParameterStore store = init_params(cfg, 12, 2);
    const AttentionCache cache = build_attention_cache(g, store);
    const BatchStreams streams{5, 1, 3, true};
    const DropoutSpec gspec{1.0 - cfg.dropout, stream_seed(5, StreamTag::kDropoutGlobal, 1, 3)};
    const LossEvaluator eval = [&](const ParameterStore& s, GradientSet* grads) {
      GlobalPropagation prop;
      kagcn_forward_all(g, cache, s, gspec, prop);
      GradientSet local(s);
      GradientSet& sink = grads ? *grads : local;
      SparseRowGrad d_inputs;
      d_inputs.resize_like(prop.out);
      PhaseTwoPool pool;
      const double loss =
          target_loss_batch(g, cache, s, cfg, prop.out, batch, streams, sink, d_inputs, pool);
      kagcn_backward_all(g, cache, s, prop, d_inputs, sink);
      return loss;
    };
    const GradCheckReport report = grad_check(eval, store, 350, 1e-4, 64);
    INFO("worst ", report.worst_tensor, " row ", report.worst_row, " analytic ",
         report.worst_analytic, " numeric ", report.worst_numeric);
    CHECK(report.max_rel_err <= 1e-4);
  }

  SUBCASE("ablated local pathway ignores refinement parameters") {
    cfg.ablation = Ablation::kNoLc;
    cfg.tower = {5, 3, 3};
    ParameterStore store = init_params(cfg, 12, 2);
    const AttentionCache cache = build_attention_cache(g, store);
    const BatchStreams streams{5, 1, 3, false};
    const LossEvaluator eval = [&](const ParameterStore& s, GradientSet* grads) {
      GlobalPropagation prop;
      kagcn_forward_all(g, cache, s, DropoutSpec{}, prop);
      GradientSet local(s);
      GradientSet& sink = grads ? *grads : local;
      SparseRowGrad d_inputs;
      d_inputs.resize_like(prop.out);
      PhaseTwoPool pool;
      const double loss =
          target_loss_batch(g, cache, s, cfg, prop.out, batch, streams, sink, d_inputs, pool);
      kagcn_backward_all(g, cache, s, prop, d_inputs, sink);
      return loss;
    };
    const GradCheckReport report = grad_check(eval, store, 350, 1e-4, 65);
    CHECK(report.max_rel_err <= 1e-4);

    // the conditional-attention parameters receive no gradient at all
    GradientSet grads(store);
    SparseRowGrad d_inputs;
    PhaseTwoPool pool;
    GlobalPropagation prop;
    kagcn_forward_all(g, cache, store, DropoutSpec{}, prop);
    d_inputs.resize_like(prop.out);
    target_loss_batch(g, cache, store, cfg, prop.out, batch, streams, grads, d_inputs, pool);
    for (const double x : grads.att_vec[0].data) CHECK(x == 0.0);
    for (const double x : grads.agg_w[1].data) CHECK(x == 0.0);
  }
}
