/*
 * Copyright 2026 The zistorm Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "test_util.hpp"
#include "zistorm/losses.hpp"
#include "zistorm/mingre.hpp"

using namespace zistorm;
using zistorm::testing::random_tensor;

namespace {

mingre::ReweighterConfig small_config(std::uint64_t seed = 5) {
  mingre::ReweighterConfig c;
  c.encoder.model_dim = 16;
  c.encoder.num_heads = 4;
  c.encoder.ffn_dim = 32;
  c.encoder.seed = seed;
  return c;
}

struct Setup {
  zidata::SeriesDataset data = zidata::generate_synthetic_zid(12, 96, 2, 0.8, 7);
  stmodel::STRegressor model{[] {
                               stmodel::RegressorConfig c;
                               c.history = 4;
                               c.horizon = 2;
                               c.seed = 2;
                               return c;
                             }(),
                             12, 2};
  std::vector<zidata::SegmentBatch> batches = zidata::window(data, 4, 2, 2, 4);
  stmodel::LossFn loss = losses::make_loss(losses::LossKind::kWrmse);
  attack::AttackSpec spec = [] {
    attack::AttackSpec s;
    s.budget.epsilon = 0.5;
    s.budget.eta = 0.25;
    s.budget.step_alpha = 0.125;
    s.budget.num_iters = 3;
    s.seed = 11;
    return s;
  }();
};

// Slice [i] along axis 0 of a rank-4 tensor, kept as a rank-4 tensor.
Tensor take(const Tensor& x, std::size_t axis, std::size_t i) {
  ad::Tape tape;
  Shape s = x.shape();
  s[axis] = 1;
  return ad::reshape(ad::select(tape.constant(x), axis, i), s).value();
}

Tensor permute_axis(const Tensor& x, std::size_t axis, const std::vector<std::size_t>& order) {
  ad::Tape tape;
  std::vector<ad::Var> parts;
  for (std::size_t i : order) parts.push_back(ad::select(tape.constant(x), axis, i));
  return ad::stack(parts, axis).value();
}

double gap_loop_reference(const Tensor& g, const zidata::ClassPartition& part) {
  const std::size_t B = g.dim(0), T = g.dim(1), N = g.dim(2), D = g.dim(3);
  double min_sum = 0, maj_sum = 0;
  std::size_t min_n = 0, maj_n = 0;
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t n = 0; n < N; ++n) {
      double acc = 0;
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t d = 0; d < D; ++d) acc += std::pow(g.at({b, t, n, d}), 2);
      if (part.is_minority(b, n)) {
        min_sum += std::sqrt(acc);
        ++min_n;
      } else {
        maj_sum += std::sqrt(acc);
        ++maj_n;
      }
    }
  }
  return std::fabs(min_sum / min_n - maj_sum / maj_n);
}

zidata::ClassPartition alternating_partition(std::size_t B, std::size_t N) {
  std::vector<std::uint8_t> m(B * N);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = i % 3 == 0;
  return {B, N, m};
}

}  // namespace

TEST_CASE("encoder config validation") {
  mingre::EncoderConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.head_dim() == 8);
  c.num_heads = 5;
  CHECK_THROWS_WITH(c.validate(), doctest::Contains("not divisible"));
  c.num_heads = 0;
  CHECK_THROWS(c.validate());
  mingre::Lambdas l;
  l.gap = -1;
  CHECK_THROWS(l.validate());
}

TEST_CASE("segment attention with one datapoint acts tokenwise") {
  mingre::Reweighter rw(small_config(), 2);
  std::mt19937_64 rng(1);
  const Tensor x = random_tensor({3, 5, 1, 16}, rng);
  ad::Tape tape;
  const auto p = rw.params().bind(tape, false);
  const Tensor full = rw.abd_layer(p, tape.constant(x)).value();
  CHECK(full.shape() == x.shape());
  for (std::size_t t = 0; t < 3; ++t) {
    for (std::size_t n = 0; n < 5; ++n) {
      const Tensor token = take(take(x, 0, t), 1, n);
      const Tensor alone = rw.abd_layer(p, tape.constant(token)).value();
      for (std::size_t d = 0; d < 16; ++d) {
        CHECK(alone[d] == doctest::Approx(full.at({t, n, 0, d})).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("attention probabilities are row stochastic") {
  nn::ParameterSet ps;
  nn::Rng rng(4);
  const auto block = nn::add_attention_block(ps, "b", 16, 4, 32, rng);
  std::mt19937_64 g(9);
  ad::Tape tape;
  const auto p = ps.bind(tape, false);
  const Tensor probs = nn::attention_probabilities(p, block, tape.constant(random_tensor({4, 6, 3, 16}, g, -3, 3))).value();
  REQUIRE(probs.shape() == Shape{4, 6, 4, 3, 3});
  for (std::size_t r = 0; r < probs.numel() / 3; ++r) {
    const double s = probs[3 * r] + probs[3 * r + 1] + probs[3 * r + 2];
    CHECK(std::fabs(s - 1.0) < 1e-6);
  }
  const Tensor out = nn::apply_attention_block(p, block, tape.constant(random_tensor({4, 6, 3, 16}, g))).value();
  CHECK(out.shape() == Shape{4, 6, 3, 16});
}

TEST_CASE("encoder shape contract and determinism") {
  mingre::Reweighter rw(small_config(), 2);
  std::mt19937_64 rng(2);
  const Tensor X = random_tensor({3, 4, 6, 2}, rng);
  const Tensor O = rw.encode(X);
  CHECK(O.shape() == Shape{3, 4, 6, 16});
  CHECK(bitwise_equal(O, rw.encode(X)));
  mingre::Reweighter twin(small_config(), 2);
  CHECK(bitwise_equal(O, twin.encode(X)));
  CHECK_THROWS(rw.encode(random_tensor({3, 4, 6, 3}, rng)));
}

TEST_CASE("temporal and spatial sublayers are segment equivariant") {
  mingre::Reweighter rw(small_config(), 2);
  std::mt19937_64 rng(3);
  const std::vector<std::size_t> order = {2, 0, 1};
  ad::Tape tape;
  const auto p = rw.params().bind(tape, false);

  const Tensor xt = random_tensor({3, 5, 4, 16}, rng);  // (B, N, T, Dh)
  const Tensor a = permute_axis(rw.temporal_layer(p, tape.constant(xt)).value(), 0, order);
  const Tensor b = rw.temporal_layer(p, tape.constant(permute_axis(xt, 0, order))).value();
  CHECK(max_abs_diff(a, b) < 1e-12);

  const Tensor xs = random_tensor({3, 4, 5, 16}, rng);  // (B, T, N, Dh)
  const Tensor c = permute_axis(rw.spatial_layer(p, tape.constant(xs)).value(), 0, order);
  const Tensor d = rw.spatial_layer(p, tape.constant(permute_axis(xs, 0, order))).value();
  CHECK(max_abs_diff(c, d) < 1e-12);

  // Self-attention without positions also commutes with reordering the
  // attended axis itself.
  const std::vector<std::size_t> nodes = {4, 1, 3, 0, 2};
  const Tensor e = permute_axis(rw.spatial_layer(p, tape.constant(xs)).value(), 2, nodes);
  const Tensor f = rw.spatial_layer(p, tape.constant(permute_axis(xs, 2, nodes))).value();
  CHECK(max_abs_diff(e, f) < 1e-12);
}

TEST_CASE("attention weights shapes and ranges") {
  mingre::Reweighter rw(small_config(), 2);
  std::mt19937_64 rng(4);
  const auto w = rw.attention_weights(random_tensor({3, 4, 6, 2}, rng, -5, 5));
  CHECK(w.att_sg.shape() == Shape{3, 1, 1, 1});
  CHECK(w.att_te.shape() == Shape{1, 4, 1, 1});
  CHECK(w.att_sp.shape() == Shape{1, 1, 6, 1});
  for (const Tensor* t : {&w.att_sg, &w.att_te, &w.att_sp}) {
    for (double v : t->data()) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
    }
  }
  const Tensor a1 = w.att1();
  CHECK(a1.shape() == Shape{3, 1, 6, 1});
  for (double v : a1.data()) {
    CHECK(v > 0.0);
    CHECK(v < 2.0);
  }

  const auto flat = rw.attention_from_encoding(Tensor({3, 4, 6, 16}, 0.3));
  CHECK(flat.att_sg[0] == flat.att_sg[1]);
  CHECK(flat.att_sg[1] == flat.att_sg[2]);
}

TEST_CASE("reweighting identities and loop oracle") {
  std::mt19937_64 rng(5);
  const Tensor g = random_tensor({2, 3, 4, 2}, rng);
  const Tensor doubled = mingre::reweight_gradients(g, mingre::AttentionWeights::constant(2, 3, 4, 1, 1, 1));
  for (std::size_t i = 0; i < g.numel(); ++i) CHECK(doubled[i] == 2.0 * g[i]);

  // att1 = 1 and att_te = 0.5 halves every entry.
  const Tensor halved = mingre::reweight_gradients(g, mingre::AttentionWeights::constant(2, 3, 4, 0.5, 0.5, 0.5));
  for (std::size_t i = 0; i < g.numel(); ++i) CHECK(halved[i] == 0.5 * g[i]);

  for (int trial = 0; trial < 5; ++trial) {
    std::uniform_int_distribution<std::size_t> dim(1, 5);
    const std::size_t B = dim(rng), T = dim(rng), N = dim(rng), D = dim(rng);
    const Tensor grad = random_tensor({B, T, N, D}, rng);
    mingre::AttentionWeights w{random_tensor({B, 1, 1, 1}, rng, 0, 1), random_tensor({1, T, 1, 1}, rng, 0, 1),
                               random_tensor({1, 1, N, 1}, rng, 0, 1)};
    const Tensor out = mingre::reweight_gradients(grad, w);
    ad::Tape tape;
    const Tensor via_ad = mingre::reweight_gradients(tape.constant(grad), tape.constant(w.att_sg),
                                                     tape.constant(w.att_te), tape.constant(w.att_sp))
                              .value();
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t d = 0; d < D; ++d) {
            const double ref = (w.att_sg[b] + w.att_sp[n]) * grad.at({b, t, n, d}) * w.att_te[t];
            CHECK(std::fabs(out.at({b, t, n, d}) - ref) < 1e-9);
            CHECK(std::fabs(via_ad.at({b, t, n, d}) - ref) < 1e-9);
          }
  }
  CHECK_THROWS_WITH(mingre::reweight_gradients(g, mingre::AttentionWeights::constant(2, 3, 5, 1, 1, 1)),
                    doctest::Contains("broadcast"));
}

TEST_CASE("uniform weights reduce to saliency STPGD") {
  Setup s;
  for (std::size_t i = 0; i < s.batches.size(); ++i) {
    const auto& batch = s.batches[i];
    auto spec = s.spec;
    spec.seed = 100 + i;
    const auto base = attack::generate(s.model, s.loss, batch.X, batch.Y, s.data.graph, spec);
    spec.strategy = attack::Strategy::kRandom;  // ignored by the reweighted attack
    const auto ours = mingre::mingre_generate(
        s.model, s.loss, batch.X, batch.Y, s.data.graph,
        mingre::AttentionWeights::constant(batch.batch_size(), 4, 12, 1.0, 1.0, 1.0), spec);
    CHECK(ours.mask == base.mask);
    CHECK(bitwise_equal(ours.X_adv, base.X_adv));
    CHECK(ours.loss_trace == base.loss_trace);
  }
}

TEST_CASE("amplified minority gradients pull nodes into the victim set") {
  Setup s;
  const auto& batch = s.batches[3];
  const Tensor grad = s.model.input_gradient(s.loss, batch.X, batch.Y, s.data.graph);
  const Tensor sal = attack::node_saliency(grad);
  const std::size_t k = s.spec.budget.victim_count(12);
  const auto base = attack::generate(s.model, s.loss, batch.X, batch.Y, s.data.graph, s.spec);
  const auto base_nodes = base.mask.nodes();
  const double kth = sal[attack::top_k(sal.data(), k).back()];

  // Outsiders whose tenfold saliency beats the current cut.
  std::vector<std::size_t> outsiders;
  for (std::size_t n = 0; n < 12; ++n) {
    if (!std::binary_search(base_nodes.begin(), base_nodes.end(), n) && 10.0 * sal[n] > kth) outsiders.push_back(n);
  }
  REQUIRE(!outsiders.empty());
  const std::size_t target = outsiders.front();
  auto w = mingre::AttentionWeights::constant(batch.batch_size(), 4, 12, 0.5, 1.0, 0.5);
  w.att_sp[target] = 9.5;  // att1 = 10 on the target, 1 elsewhere
  const auto ours = mingre::mingre_generate(s.model, s.loss, batch.X, batch.Y, s.data.graph, w, s.spec);
  CHECK(ours.mask.selected(0, target));
  CHECK(ours.mask.nodes().size() == k);
  CHECK(max_abs_diff(ours.X_adv, batch.X) <= s.spec.budget.epsilon + 1e-12);
}

TEST_CASE("gradient gap arithmetic and loop oracle") {
  // Two pairs per class with constant-magnitude gradients.
  Tensor g({1, 1, 4, 1});
  g[0] = 0.2;
  g[1] = -0.2;
  g[2] = 0.6;
  g[3] = -0.6;
  const zidata::ClassPartition part(1, 4, {1, 1, 0, 0});
  CHECK(mingre::gradient_gap(g, part) == doctest::Approx(0.4).epsilon(1e-15));

  Tensor same({1, 2, 4, 2}, 0.7);
  CHECK(mingre::gradient_gap(same, part) == 0.0);

  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor r = random_tensor({3, 4, 5, 2}, rng);
    const auto p = alternating_partition(3, 5);
    const double ref = gap_loop_reference(r, p);
    CHECK(std::fabs(mingre::gradient_gap(r, p) - ref) < 1e-9);
    ad::Tape tape;
    CHECK(std::fabs(mingre::gradient_gap(tape.constant(r), p).value()[0] - ref) < 1e-9);
  }

  CHECK_THROWS_WITH(mingre::gradient_gap(g, zidata::ClassPartition(1, 4, {0, 0, 0, 0})),
                    doctest::Contains("minority"));
  CHECK_THROWS_WITH(mingre::gradient_gap(g, zidata::ClassPartition(1, 4, {1, 1, 1, 1})),
                    doctest::Contains("majority"));
}

TEST_CASE("gradient gap derivative matches finite differences") {
  std::mt19937_64 rng(7);
  const Tensor x = random_tensor({2, 3, 5, 2}, rng);
  const auto part = alternating_partition(2, 5);
  const testing::ScalarFn f = [&](ad::Tape&, ad::Var v) { return mingre::gradient_gap(v, part); };
  CHECK(testing::max_fd_error(f, x) < 1e-5);
}

TEST_CASE("stage one leaves the reweighter untouched") {
  Setup s;
  mingre::Reweighter rw(small_config(), 2);
  const auto before = rw.params().hash();
  const auto& batch = s.batches[0];
  const auto adv = mingre::stage1_attack_step(s.model, rw, s.loss, batch.X, batch.Y, s.data.graph, s.spec);
  CHECK(rw.params().hash() == before);
  CHECK(adv.loss_trace.size() == s.spec.budget.num_iters + 1);
  const auto direct = mingre::mingre_generate(s.model, s.loss, batch.X, batch.Y, s.data.graph,
                                              rw.attention_weights(batch.X), s.spec);
  CHECK(bitwise_equal(direct.X_adv, adv.X_adv));
  CHECK(direct.mask == adv.mask);
}

TEST_CASE("stage two updates only the reweighter") {
  Setup s;
  const stmodel::LossFn adv_loss = losses::make_loss(losses::LossKind::kAdv);
  mingre::Reweighter rw(small_config(), 2);
  const auto model_hash = s.model.params().hash();
  for (const auto& batch : s.batches) {
    const auto part = zidata::class_partition(batch);
    const auto adv = mingre::stage1_attack_step(s.model, rw, adv_loss, batch.X, batch.Y, s.data.graph, s.spec);
    const auto rw_hash = rw.params().hash();
    const auto br = mingre::stage2_reweighter_update(s.model, rw, adv_loss, batch.X, batch.Y, s.data.graph, adv, s.spec);
    CHECK(s.model.params().hash() == model_hash);
    CHECK(rw.params().hash() != rw_hash);
    CHECK(std::fabs(br.task + br.gap + br.minority + br.majority - br.total) < 1e-9);
    CHECK(br.raw_task == adv.final_loss());
    CHECK(br.regularizers_skipped == part.degenerate());
    if (!part.degenerate()) {
      CHECK(br.raw_gap >= 0.0);
      CHECK(br.gap == doctest::Approx(br.raw_gap * rw.config().lambdas.gap));
    }
  }
}

TEST_CASE("stage two breakdown gap matches the tensor gap at the pre-step weights") {
  Setup s;
  mingre::Reweighter rw(small_config(), 2);
  const auto& batch = s.batches[2];
  REQUIRE(!zidata::class_partition(batch).degenerate());
  const auto w = rw.attention_weights(batch.X);
  const Tensor g = s.model.input_gradient(s.loss, batch.X, batch.Y, s.data.graph);
  const double expected = mingre::gradient_gap(mingre::reweight_gradients(g, w), zidata::class_partition(batch));
  const auto adv = mingre::stage1_attack_step(s.model, rw, s.loss, batch.X, batch.Y, s.data.graph, s.spec);
  const auto br = mingre::stage2_reweighter_update(s.model, rw, s.loss, batch.X, batch.Y, s.data.graph, adv, s.spec);
  CHECK(br.raw_gap == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("stage two lambda edge cases") {
  Setup s;
  const auto& batch = s.batches[2];
  SUBCASE("all lambdas zero leaves parameters bitwise unchanged") {
    auto cfg = small_config();
    cfg.lambdas = {0, 0, 0, 0};
    mingre::Reweighter rw(cfg, 2);
    const auto before = rw.params().hash();
    const auto adv = mingre::stage1_attack_step(s.model, rw, s.loss, batch.X, batch.Y, s.data.graph, s.spec);
    const auto br = mingre::stage2_reweighter_update(s.model, rw, s.loss, batch.X, batch.Y, s.data.graph, adv, s.spec);
    CHECK(br.total == 0.0);
    CHECK(rw.params().hash() == before);
  }
  SUBCASE("only the task term contributes") {
    auto cfg = small_config();
    cfg.lambdas = {1, 0, 0, 0};
    mingre::Reweighter rw(cfg, 2);
    const auto adv = mingre::stage1_attack_step(s.model, rw, s.loss, batch.X, batch.Y, s.data.graph, s.spec);
    const auto br = mingre::stage2_reweighter_update(s.model, rw, s.loss, batch.X, batch.Y, s.data.graph, adv, s.spec);
    CHECK(br.gap == 0.0);
    CHECK(br.minority == 0.0);
    CHECK(br.majority == 0.0);
    CHECK(br.total == br.task);
    CHECK(br.task == adv.final_loss());
  }
  SUBCASE("an all-zero batch skips the class terms with a warning") {
    auto cfg = small_config();
    mingre::Reweighter rw(cfg, 2);
    zidata::SegmentBatch zero = batch;
    zero.Y = Tensor(batch.Y.shape(), 0.0);
    const auto adv = mingre::stage1_attack_step(s.model, rw, s.loss, zero.X, zero.Y, s.data.graph, s.spec);
    const auto br = mingre::stage2_reweighter_update(s.model, rw, s.loss, zero.X, zero.Y, s.data.graph, adv, s.spec);
    CHECK(br.regularizers_skipped);
    CHECK(br.warning.find("minority") != std::string::npos);
    CHECK(br.gap == 0.0);
  }
}

TEST_CASE("per-segment masks also drive the stage two surrogate") {
  Setup s;
  auto spec = s.spec;
  spec.per_segment_mask = true;
  mingre::Reweighter rw(small_config(), 2);
  const auto& batch = s.batches[1];
  const auto adv = mingre::stage1_attack_step(s.model, rw, s.loss, batch.X, batch.Y, s.data.graph, spec);
  const auto before = rw.params().hash();
  const auto br = mingre::stage2_reweighter_update(s.model, rw, s.loss, batch.X, batch.Y, s.data.graph, adv, spec);
  CHECK(std::isfinite(br.total));
  CHECK(rw.params().hash() != before);
  for (std::size_t b = 0; b < batch.batch_size(); ++b) CHECK(adv.mask.nodes(b).size() == spec.budget.victim_count(12));
}
