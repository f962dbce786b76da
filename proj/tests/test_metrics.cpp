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

#include "doctest.h"
#include "metric_oracles.hpp"
#include "zistorm/metrics.hpp"

using namespace zistorm;

TEST_CASE("recall examples") {
  CHECK(*metrics::recall_min(std::vector<double>{0.1, 0.0, 2.5, 0.9}, std::vector<double>{0, 0, 3, 1}) == 1.0);
  CHECK(*metrics::recall_min(std::vector<double>{0.9, 0.1, 0.0}, std::vector<double>{0, 2, 0}) == 0.0);
  const std::vector<double> y = {0, 0, 3, 1};
  CHECK(*metrics::recall_maj(std::vector<double>{0.1, 0.0, 2.5, 0.9}, y) == 1.0);
  CHECK(*metrics::recall_maj(std::vector<double>{2.5, 0.9, 0.1, 0.0}, y) < 1.0);
  CHECK_FALSE(metrics::recall_min(std::vector<double>{1, 2}, std::vector<double>{0, 0}).has_value());
  CHECK_FALSE(metrics::recall_maj(std::vector<double>{1, 2}, std::vector<double>{1, 4}).has_value());
}

TEST_CASE("average precision examples") {
  const std::vector<std::uint8_t> rel = {1, 0, 1};
  CHECK(*metrics::average_precision(rel) == doctest::Approx((1.0 + 2.0 / 3.0) / 2.0).epsilon(1e-15));
  const std::vector<std::uint8_t> all = {1, 1, 1, 1};
  CHECK(*metrics::average_precision(all) == 1.0);
  CHECK(*metrics::ap_min(std::vector<double>{5, 4, 3}, std::vector<double>{1, 2, 3}) == 1.0);
}

TEST_CASE("tie rule ranks lower indices first") {
  const auto d = metrics::rank_descending(std::vector<double>{0.5, 0.5, 0.1});
  CHECK(d == std::vector<std::size_t>{0, 1, 2});
  const auto a = metrics::rank_ascending(std::vector<double>{0.5, 0.1, 0.1});
  CHECK(a == std::vector<std::size_t>{1, 2, 0});
}

TEST_CASE("disparity arithmetic") {
  CHECK(metrics::round_to(metrics::disparity(88.182, 33.956), 2) == 54.23);
  CHECK(metrics::round_to(metrics::disparity(0.7847, 0.1869), 4) == 0.5978);
  CHECK(metrics::disparity(0.3, 0.3) == 0.0);
}

TEST_CASE("metrics match brute-force references and survive monotone transforms") {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> nd(1, 8), level(0, 4), lab(0, 3);
  for (int trial = 0; trial < 2000; ++trial) {
    const int n = nd(rng);
    std::vector<double> p(n), y(n), tp(n);
    for (int i = 0; i < n; ++i) {
      p[i] = level(rng) * 0.25;
      y[i] = lab(rng) == 0 ? lab(rng) + 1 : 0;
      tp[i] = std::exp(3 * p[i]) - 7;
    }
    CHECK(metrics::recall_min(p, y) == oracle::recall(p, y, true));
    CHECK(metrics::recall_maj(p, y) == oracle::recall(p, y, false));
    CHECK(metrics::ap_min(p, y) == oracle::ap(p, y, true));
    CHECK(metrics::ap_maj(p, y) == oracle::ap(p, y, false));
    CHECK(metrics::recall_min(tp, y) == metrics::recall_min(p, y));
    CHECK(metrics::ap_maj(tp, y) == metrics::ap_maj(p, y));
  }
}

TEST_CASE("accumulator averages defined instants and counts skips") {
  Tensor Y({1, 2, 3}, std::vector<double>{0, 0, 0, 0, 2, 0});
  Tensor P({1, 2, 3}, std::vector<double>{0.1, 0.2, 0.3, 0.9, 0.8, 0.0});
  const auto r = metrics::evaluate(P, Y);
  CHECK(r.instants == 2);
  CHECK(r.skipped_min == 1);
  CHECK(r.skipped_maj == 0);
  CHECK(r.rec_min == 0.0);
  CHECK(r.map_min == 0.5);
  CHECK(r.rec_maj == doctest::Approx(0.75));
  CHECK(r.rec_d == metrics::disparity(r.rec_maj, r.rec_min));
  CHECK(r.map_d == metrics::disparity(r.map_maj, r.map_min));
  CHECK_THROWS(metrics::evaluate(Tensor({1, 2, 2}), Y));
}
