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

#ifndef ZISTORM_METRICS_HPP_
#define ZISTORM_METRICS_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "zistorm/tensor.hpp"

// Ranking metrics over one evaluation instant (a length-N prediction vector
// and its labels). Nodes are ranked by prediction; ties go to the lower
// node index. The minority class is "label > 0" ranked descending, the
// majority class is "label == 0" ranked ascending, and k equals the size of
// the true class set. An instant whose class set is empty yields nullopt.
namespace zistorm::metrics {

std::vector<std::size_t> rank_descending(std::span<const double> pred);
std::vector<std::size_t> rank_ascending(std::span<const double> pred);

std::optional<double> recall_min(std::span<const double> pred, std::span<const double> y);
std::optional<double> recall_maj(std::span<const double> pred, std::span<const double> y);
std::optional<double> ap_min(std::span<const double> pred, std::span<const double> y);
std::optional<double> ap_maj(std::span<const double> pred, std::span<const double> y);

// Average precision of a ranked 0/1 relevance list.
std::optional<double> average_precision(std::span<const std::uint8_t> ranked_relevance);

double disparity(double majority, double minority);
double round_to(double value, int decimals);

struct MetricReport {
  double rec_maj = 0.0;
  double rec_min = 0.0;
  double map_maj = 0.0;
  double map_min = 0.0;
  double rec_d = 0.0;
  double map_d = 0.0;
  std::size_t instants = 0;
  std::size_t skipped_min = 0;  // instants without a non-zero label
  std::size_t skipped_maj = 0;  // instants without a zero label
};

// Accumulates per-(segment, horizon step) instants and averages each metric
// over the instants where it is defined.
class MetricAccumulator {
 public:
  void add_instant(std::span<const double> pred, std::span<const double> y);
  // Yhat and Y shaped (B, horizon, N).
  void add_batch(const Tensor& Yhat, const Tensor& Y);
  void merge(const MetricAccumulator& other);
  MetricReport report() const;

 private:
  double sum_rec_min_ = 0.0;
  double sum_rec_maj_ = 0.0;
  double sum_ap_min_ = 0.0;
  double sum_ap_maj_ = 0.0;
  std::size_t n_min_ = 0;
  std::size_t n_maj_ = 0;
  std::size_t instants_ = 0;
};

MetricReport evaluate(const Tensor& Yhat, const Tensor& Y);

}  // namespace zistorm::metrics

#endif  // ZISTORM_METRICS_HPP_
