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
#include <random>
#include <stdexcept>
#include <string>

#include "doctest.h"
#include "test_util.hpp"
#include "zistorm/autograd.hpp"
#include "zistorm/tensor.hpp"

using namespace zistorm;
using zistorm::testing::max_fd_error;
using zistorm::testing::random_tensor;

TEST_CASE("tensor indexing and permute follow row-major layout") {
  Tensor t({2, 3, 4});
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<double>(i);
  CHECK(t.at({1, 2, 3}) == 23.0);
  const std::size_t perm[] = {2, 0, 1};
  const Tensor p = permute(t, perm);
  CHECK(p.shape() == Shape{4, 2, 3});
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t b = 0; b < 3; ++b)
      for (std::size_t c = 0; c < 4; ++c) CHECK(p.at({c, a, b}) == t.at({a, b, c}));
  CHECK_THROWS(t.reshaped({5, 5}));
}

TEST_CASE("bitwise_equal separates signed zeros") {
  Tensor a({1}, 0.0);
  Tensor b({1}, -0.0);
  CHECK(a == b);
  CHECK_FALSE(bitwise_equal(a, b));
}

TEST_CASE("broadcast shapes") {
  CHECK(ad::broadcast_shapes({2, 1, 4}, {3, 1}) == Shape{2, 3, 4});
  CHECK_THROWS(ad::broadcast_shapes({2, 3}, {4}));
}

TEST_CASE("elementwise op gradients match central differences") {
  std::mt19937_64 rng(3);
  const Tensor x = random_tensor({3, 4}, rng, 0.2, 1.5);
  const Tensor c = random_tensor({4}, rng, 0.5, 1.0);
  const std::vector<std::pair<const char*, testing::ScalarFn>> cases = {
      {"exp", [](ad::Tape&, ad::Var v) { return ad::sum(ad::exp(v)); }},
      {"log", [](ad::Tape&, ad::Var v) { return ad::sum(ad::log(v)); }},
      {"sqrt", [](ad::Tape&, ad::Var v) { return ad::sum(ad::sqrt(v)); }},
      {"sigmoid", [](ad::Tape&, ad::Var v) { return ad::sum(ad::sigmoid(v * 3.0)); }},
      {"tanh", [](ad::Tape&, ad::Var v) { return ad::sum(ad::tanh(v)); }},
      {"softplus", [](ad::Tape&, ad::Var v) { return ad::sum(ad::softplus(v - 1.0)); }},
      {"lgamma", [](ad::Tape&, ad::Var v) { return ad::sum(ad::lgamma(v + 0.5)); }},
      {"div", [&](ad::Tape& t, ad::Var v) { return ad::sum(t.constant(c) / v); }},
      {"mul_bcast", [&](ad::Tape& t, ad::Var v) { return ad::sum(ad::square(v * t.constant(c))); }},
      {"softmax", [&](ad::Tape& t, ad::Var v) {
         return ad::sum(ad::softmax_last(v) * t.constant(c));
       }},
      {"layer_norm", [&](ad::Tape& t, ad::Var v) {
         return ad::sum(ad::layer_norm_last(v) * t.constant(c));
       }},
      {"mean_axes", [](ad::Tape&, ad::Var v) { return ad::sum(ad::square(ad::mean(v, {0}))); }},
      {"permute", [&](ad::Tape& t, ad::Var v) {
         return ad::sum(ad::permute(v, {1, 0}) * t.constant(Tensor({4, 3}, 2.0)));
       }},
  };
  for (const auto& [name, f] : cases) {
    INFO(std::string(name));
    CHECK(max_fd_error(f, x) < 1e-6);
  }
}

TEST_CASE("matmul modes and select/stack gradients") {
  std::mt19937_64 rng(5);
  const Tensor w = random_tensor({4, 3}, rng);
  const Tensor adj = random_tensor({5, 5}, rng);
  const Tensor x = random_tensor({2, 5, 4}, rng);
  auto f_right = [&](ad::Tape& t, ad::Var v) { return ad::sum(ad::square(ad::matmul(v, t.constant(w)))); };
  auto f_left = [&](ad::Tape& t, ad::Var v) { return ad::sum(ad::square(ad::matmul(t.constant(adj), v))); };
  auto f_batched = [&](ad::Tape&, ad::Var v) {
    return ad::sum(ad::square(ad::matmul(v, ad::permute(v, {0, 2, 1}))));
  };
  auto f_stack = [&](ad::Tape&, ad::Var v) {
    const ad::Var parts[] = {ad::select(v, 1, 0), ad::select(v, 1, 3)};
    return ad::sum(ad::square(ad::stack(parts, 0)));
  };
  CHECK(max_fd_error(f_right, x) < 1e-6);
  CHECK(max_fd_error(f_left, x) < 1e-6);
  CHECK(max_fd_error(f_batched, x) < 1e-6);
  CHECK(max_fd_error(f_stack, x) < 1e-6);
}

TEST_CASE("backward rejects non-scalar roots and detach blocks gradients") {
  ad::Tape tape;
  ad::Var v = tape.variable(Tensor({3}, 1.0));
  CHECK_THROWS_AS(tape.backward(v * 2.0), std::invalid_argument);
  ad::Var l = ad::sum(ad::detach(v) * v);
  tape.backward(l);
  const Tensor g = tape.grad(v);
  for (double e : g.storage()) CHECK(e == 1.0);
}
