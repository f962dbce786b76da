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

#include "zistorm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace zistorm::metrics {
namespace {

void check_lengths(std::span<const double> pred, std::span<const double> y) {
  if (pred.size() != y.size()) throw std::invalid_argument("prediction and label lengths differ");
}

std::vector<std::uint8_t> relevance(const std::vector<std::size_t>& order,
                                    std::span<const double> y, bool minority) {
  std::vector<std::uint8_t> rel(order.size());
  for (std::size_t r = 0; r < order.size(); ++r) {
    rel[r] = minority ? y[order[r]] > 0.0 : y[order[r]] == 0.0;
  }
  return rel;
}

std::optional<double> recall_at_class_size(const std::vector<std::uint8_t>& rel) {
  const auto m = static_cast<std::size_t>(std::count(rel.begin(), rel.end(), 1));
  if (m == 0) return std::nullopt;
  const auto hits = static_cast<std::size_t>(std::count(rel.begin(), rel.begin() + static_cast<std::ptrdiff_t>(m), 1));
  return static_cast<double>(hits) / static_cast<double>(m);
}

}  // namespace

std::vector<std::size_t> rank_descending(std::span<const double> pred) {
  std::vector<std::size_t> order(pred.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return pred[a] > pred[b]; });
  return order;
}

std::vector<std::size_t> rank_ascending(std::span<const double> pred) {
  std::vector<std::size_t> order(pred.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return pred[a] < pred[b]; });
  return order;
}

std::optional<double> recall_min(std::span<const double> pred, std::span<const double> y) {
  check_lengths(pred, y);
  return recall_at_class_size(relevance(rank_descending(pred), y, true));
}

std::optional<double> recall_maj(std::span<const double> pred, std::span<const double> y) {
  check_lengths(pred, y);
  return recall_at_class_size(relevance(rank_ascending(pred), y, false));
}

std::optional<double> average_precision(std::span<const std::uint8_t> ranked_relevance) {
  std::size_t hits = 0;
  double acc = 0.0;
  for (std::size_t r = 0; r < ranked_relevance.size(); ++r) {
    if (!ranked_relevance[r]) continue;
    ++hits;
    acc += static_cast<double>(hits) / static_cast<double>(r + 1);
  }
  if (hits == 0) return std::nullopt;
  return acc / static_cast<double>(hits);
}

std::optional<double> ap_min(std::span<const double> pred, std::span<const double> y) {
  check_lengths(pred, y);
  return average_precision(relevance(rank_descending(pred), y, true));
}

std::optional<double> ap_maj(std::span<const double> pred, std::span<const double> y) {
  check_lengths(pred, y);
  return average_precision(relevance(rank_ascending(pred), y, false));
}

double disparity(double majority, double minority) { return std::abs(majority - minority); }

double round_to(double value, int decimals) {
  const double scale = std::pow(10.0, decimals);
  return std::round(value * scale) / scale;
}

void MetricAccumulator::add_instant(std::span<const double> pred, std::span<const double> y) {
  check_lengths(pred, y);
  ++instants_;
  const auto desc = rank_descending(pred);
  const auto asc = rank_ascending(pred);
  const auto rel_min = relevance(desc, y, true);
  const auto rel_maj = relevance(asc, y, false);
  if (const auto r = recall_at_class_size(rel_min)) {
    sum_rec_min_ += *r;
    sum_ap_min_ += *average_precision(rel_min);
    ++n_min_;
  }
  if (const auto r = recall_at_class_size(rel_maj)) {
    sum_rec_maj_ += *r;
    sum_ap_maj_ += *average_precision(rel_maj);
    ++n_maj_;
  }
}

void MetricAccumulator::add_batch(const Tensor& Yhat, const Tensor& Y) {
  if (Yhat.shape() != Y.shape() || Y.rank() != 3) {
    throw std::invalid_argument("metrics expect matching (B, horizon, N) tensors, got " +
                                shape_str(Yhat.shape()) + " and " + shape_str(Y.shape()));
  }
  const std::size_t n = Y.dim(2);
  for (std::size_t i = 0; i < Y.dim(0) * Y.dim(1); ++i) {
    add_instant(Yhat.data().subspan(i * n, n), Y.data().subspan(i * n, n));
  }
}

void MetricAccumulator::merge(const MetricAccumulator& o) {
  sum_rec_min_ += o.sum_rec_min_;
  sum_rec_maj_ += o.sum_rec_maj_;
  sum_ap_min_ += o.sum_ap_min_;
  sum_ap_maj_ += o.sum_ap_maj_;
  n_min_ += o.n_min_;
  n_maj_ += o.n_maj_;
  instants_ += o.instants_;
}

MetricReport MetricAccumulator::report() const {
  MetricReport r;
  r.instants = instants_;
  r.skipped_min = instants_ - n_min_;
  r.skipped_maj = instants_ - n_maj_;
  if (n_min_ > 0) {
    r.rec_min = sum_rec_min_ / static_cast<double>(n_min_);
    r.map_min = sum_ap_min_ / static_cast<double>(n_min_);
  }
  if (n_maj_ > 0) {
    r.rec_maj = sum_rec_maj_ / static_cast<double>(n_maj_);
    r.map_maj = sum_ap_maj_ / static_cast<double>(n_maj_);
  }
  r.rec_d = disparity(r.rec_maj, r.rec_min);
  r.map_d = disparity(r.map_maj, r.map_min);
  return r;
}

MetricReport evaluate(const Tensor& Yhat, const Tensor& Y) {
  MetricAccumulator acc;
  acc.add_batch(Yhat, Y);
  return acc.report();
}

}  // namespace zistorm::metrics
