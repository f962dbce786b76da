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

#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "test_util.hpp"
#include "zistorm/losses.hpp"
#include "zistorm/nn.hpp"
#include "zistorm/stmodel.hpp"
#include "zistorm/zidata.hpp"

using namespace zistorm;
using zistorm::testing::random_tensor;
namespace fs = std::filesystem;

namespace {

struct Fixture {
  zidata::SeriesDataset data = zidata::generate_synthetic_zid(16, 80, 2, 0.9, 1);
  stmodel::RegressorConfig cfg = [] {
    stmodel::RegressorConfig c;
    c.history = 4;
    c.horizon = 2;
    c.seed = 9;
    return c;
  }();
  zidata::SegmentBatch batch = zidata::window(data, 4, 2, 4, 2).front();
};

}  // namespace

TEST_CASE("attention block preserves shape and rows of the attention sum to one") {
  nn::Rng rng(1);
  nn::ParameterSet ps;
  const auto block = nn::add_attention_block(ps, "blk", 16, 4, 32, rng);
  std::mt19937_64 g(2);
  ad::Tape tape;
  const auto p = ps.bind(tape, false);
  const ad::Var x = tape.constant(random_tensor({4, 6, 3, 16}, g));
  CHECK(nn::apply_attention_block(p, block, x).shape() == Shape{4, 6, 3, 16});
  const Tensor probs = nn::attention_probabilities(p, block, x).value();
  CHECK(probs.shape() == Shape{4, 6, 4, 3, 3});
  for (std::size_t r = 0; r < probs.numel() / 3; ++r) {
    CHECK(std::abs(probs[3 * r] + probs[3 * r + 1] + probs[3 * r + 2] - 1.0) < 1e-6);
  }
  nn::ParameterSet bad;
  CHECK_THROWS(nn::add_attention_block(bad, "b", 10, 4, 8, rng));
}

TEST_CASE("attention over a single key is the identity weight") {
  nn::Rng rng(4);
  nn::ParameterSet ps;
  const auto block = nn::add_attention_block(ps, "blk", 8, 2, 16, rng);
  std::mt19937_64 g(5);
  ad::Tape tape;
  const auto p = ps.bind(tape, false);
  const Tensor probs = nn::attention_probabilities(p, block, tape.constant(random_tensor({3, 1, 8}, g))).value();
  for (double v : probs.storage()) CHECK(v == doctest::Approx(1.0));
}

TEST_CASE("adam minimizes a quadratic") {
  nn::ParameterSet ps;
  ps.add("w", Tensor({3}, 5.0));
  nn::Adam opt(0.1);
  for (int i = 0; i < 500; ++i) {
    Tensor g = ps[0];
    for (auto& v : g.storage()) v *= 2.0;
    opt.step(ps, {g});
  }
  for (double v : ps[0].storage()) CHECK(std::abs(v) < 1e-2);
}

TEST_CASE("checkpoint blob round trip and mismatch errors") {
  Fixture f;
  stmodel::STRegressor a(f.cfg, 16, 2);
  auto cfg2 = f.cfg;
  cfg2.seed = 10;
  stmodel::STRegressor b(cfg2, 16, 2);
  CHECK(a.params().hash() != b.params().hash());
  const fs::path path = fs::temp_directory_path() / "zistorm_ckpt_test.bin";
  a.params().save(path);
  b.params().load(path);
  CHECK(a.params().hash() == b.params().hash());
  CHECK(a.params() == b.params());
  auto cfg3 = f.cfg;
  cfg3.hidden_dim = 8;
  stmodel::STRegressor c(cfg3, 16, 2);
  CHECK_THROWS(c.params().load(path));
}

TEST_CASE("forward, embed and output layer agree exactly") {
  Fixture f;
  stmodel::STRegressor model(f.cfg, 16, 2);
  const Tensor y1 = model.forward(f.batch.X, f.data.graph);
  const Tensor y2 = model.forward(f.batch.X, f.data.graph);
  CHECK(y1.shape() == Shape{2, 2, 16});
  CHECK(bitwise_equal(y1, y2));
  const auto H = model.embed(f.batch.X, f.data.graph);
  CHECK(H.H.shape() == Shape{2, 16, f.cfg.hidden_dim});
  CHECK(bitwise_equal(model.output_layer(H.H), y1));
  CHECK(model.params().scalar_count() < 200000);
}

TEST_CASE("shape mismatches are rejected") {
  Fixture f;
  stmodel::STRegressor model(f.cfg, 16, 2);
  auto g = f.data.graph;
  g.num_nodes = 8;
  g.adjacency_views = {Tensor({8, 8})};
  g.view_names = {"x"};
  CHECK_THROWS(model.forward(f.batch.X, g));
  CHECK_THROWS(model.forward(Tensor({2, 5, 16, 2}), f.data.graph));
}

TEST_CASE("embeddings respond to input perturbations") {
  Fixture f;
  stmodel::STRegressor model(f.cfg, 16, 2);
  Tensor x = f.batch.X;
  const Tensor h0 = model.embed(x, f.data.graph).H;
  x[5] += 0.5;
  CHECK(max_abs_diff(model.embed(x, f.data.graph).H, h0) > 0.0);
}

TEST_CASE("nb decoder is positive even at extreme inputs") {
  Fixture f;
  stmodel::STRegressor model(f.cfg, 16, 2);
  std::mt19937_64 g(3);
  const auto nb = model.decode_nb(random_tensor({2, 16, f.cfg.hidden_dim}, g, -50.0, 50.0));
  CHECK(nb.mu.shape() == Shape{2, 2, 16});
  CHECK(nb.alpha.shape() == Shape{2, 2, 16});
  for (double v : nb.mu.storage()) CHECK(v >= 1e-6);
  for (double v : nb.alpha.storage()) CHECK(v >= 1e-6);
  Tensor x = f.batch.X;
  for (auto& v : x.storage()) v += (v > 0 ? 100.0 : -100.0);
  const auto nb2 = model.decode_nb(model.embed(x, f.data.graph).H);
  for (double v : nb2.mu.storage()) CHECK(v >= 1e-6);
  for (double v : nb2.alpha.storage()) CHECK(v >= 1e-6);
}

TEST_CASE("decoder parameter gradients match central differences") {
  Fixture f;
  stmodel::STRegressor model(f.cfg, 16, 2);
  const Tensor H = model.embed(f.batch.X, f.data.graph).H;
  std::mt19937_64 g(8);
  const Tensor weight = random_tensor({2, 2, 16}, g);
  auto objective = [&](const nn::ParameterSet& ps, std::vector<ad::Var>* vars, ad::Tape& tape) {
    const auto p = ps.bind(tape, vars != nullptr);
    if (vars) *vars = p;
    ad::Var mu, alpha;
    model.build_nb_decoder(p, tape.constant(H), mu, alpha);
    return ad::sum(mu * tape.constant(weight));
  };
  ad::Tape tape;
  std::vector<ad::Var> vars;
  tape.backward(objective(model.params(), &vars, tape));
  std::size_t checked = 0;
  for (std::size_t k = 0; k < model.params().size(); ++k) {
    if (model.params().name(k).rfind("nb.mu", 0) != 0) continue;
    const Tensor grad = tape.grad(vars[k]);
    for (std::size_t i = 0; i < grad.numel() && i < 5; ++i) {
      nn::ParameterSet plus = model.params();
      nn::ParameterSet minus = model.params();
      const double h = 1e-6;
      plus[k][i] += h;
      minus[k][i] -= h;
      ad::Tape tp, tm;
      const double fd = (objective(plus, nullptr, tp).value()[0] - objective(minus, nullptr, tm).value()[0]) / (2 * h);
      CHECK(std::abs(fd - grad[i]) <= 1e-4 * std::max(1e-6, std::abs(fd)) + 1e-8);
      ++checked;
    }
  }
  CHECK(checked >= 10);
}

TEST_CASE("input gradient matches central differences and is zero for a constant loss") {
  Fixture f;
  stmodel::STRegressor model(f.cfg, 16, 2);
  const auto loss = losses::make_loss(losses::LossKind::kWrmse);
  const Tensor g = model.input_gradient(loss, f.batch.X, f.batch.Y, f.data.graph);
  CHECK(g.shape() == f.batch.X.shape());
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<std::size_t> pick(0, g.numel() - 1);
  for (int r = 0; r < 10; ++r) {
    const std::size_t i = pick(rng);
    Tensor plus = f.batch.X, minus = f.batch.X;
    const double h = 1e-5;
    plus[i] += h;
    minus[i] -= h;
    const double fd = (model.loss(loss, plus, f.batch.Y, f.data.graph) -
                       model.loss(loss, minus, f.batch.Y, f.data.graph)) / (2 * h);
    CHECK(std::abs(fd - g[i]) <= 1e-3 * std::max(std::abs(fd), std::abs(g[i])) + 1e-6);
  }
  const stmodel::LossFn constant = [](ad::Tape& t, const stmodel::ModelOutputs&, const Tensor&) {
    return t.constant(Tensor::scalar(3.0));
  };
  const Tensor zero_grad = model.input_gradient(constant, f.batch.X, f.batch.Y, f.data.graph);
  for (double v : zero_grad.storage()) CHECK(v == 0.0);
  const stmodel::LossFn vector_loss = [](ad::Tape&, const stmodel::ModelOutputs& o, const Tensor&) {
    return o.prediction;
  };
  CHECK_THROWS_WITH(model.input_gradient(vector_loss, f.batch.X, f.batch.Y, f.data.graph),
                    doctest::Contains("non-scalar loss"));
}
