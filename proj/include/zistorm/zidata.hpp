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

#ifndef ZISTORM_ZIDATA_HPP_
#define ZISTORM_ZIDATA_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "zistorm/tensor.hpp"

// Zero-inflated spatiotemporal series: generation, storage, windowing and
// minority/majority partitioning.
namespace zistorm::zidata {

// Undirected multi-view graph over a fixed node set.
struct SpatioTemporalGraph {
  std::size_t num_nodes = 0;
  std::vector<Tensor> adjacency_views;  // each (N, N)
  std::vector<std::string> view_names;

  std::size_t num_views() const { return adjacency_views.size(); }
  // Throws unless every view is square N x N, symmetric and non-negative.
  void validate() const;
};

struct SeriesDataset {
  Tensor features;  // (L, N, D)
  IntTensor labels;  // (L, N) event counts
  SpatioTemporalGraph graph;
  std::vector<std::int32_t> timestamps;  // L, monotone

  std::size_t length() const { return features.dim(0); }
  std::size_t num_nodes() const { return features.dim(1); }
  std::size_t feature_dim() const { return features.dim(2); }
  double zero_rate() const;
  void validate() const;
};

struct SegmentBatch {
  Tensor X;  // (B, T, N, D)
  Tensor Y;  // (B, horizon, N)
  std::vector<std::int64_t> segment_start_times;

  std::size_t batch_size() const { return X.dim(0); }
  std::size_t history() const { return X.dim(1); }
  std::size_t num_nodes() const { return X.dim(2); }
  std::size_t feature_dim() const { return X.dim(3); }
  std::size_t horizon() const { return Y.dim(1); }

  // Sub-batch with the listed segments, in order.
  SegmentBatch gather(std::span<const std::size_t> segments) const;
};

// (segment, node) pairs split by whether any label in the horizon is non-zero.
class ClassPartition {
 public:
  ClassPartition() = default;
  ClassPartition(std::size_t segments, std::size_t nodes,
                 std::vector<std::uint8_t> minority);

  std::size_t segments() const { return segments_; }
  std::size_t nodes() const { return nodes_; }
  bool is_minority(std::size_t s, std::size_t n) const {
    return minority_[s * nodes_ + n] != 0;
  }
  std::size_t minority_count() const;
  std::size_t majority_count() const { return segments_ * nodes_ - minority_count(); }
  bool degenerate() const { return minority_count() == 0 || majority_count() == 0; }

  std::vector<std::pair<std::size_t, std::size_t>> minority_index() const;
  std::vector<std::pair<std::size_t, std::size_t>> majority_index() const;
  // Nodes with at least one minority pair in any segment.
  std::vector<std::uint8_t> minority_nodes() const;
  const std::vector<std::uint8_t>& mask() const { return minority_; }

 private:
  std::size_t segments_ = 0;
  std::size_t nodes_ = 0;
  std::vector<std::uint8_t> minority_;
};

SeriesDataset generate_synthetic_zid(std::size_t num_nodes, std::size_t length,
                                     std::size_t feature_dim,
                                     double zero_rate_target, std::uint64_t seed);

// Writes meta.json, graph.json and ZIST tensor files into `dir`.
void save_dataset(const SeriesDataset& dataset, const std::filesystem::path& dir);
SeriesDataset load_dataset(const std::filesystem::path& dir);

std::size_t segment_count(std::size_t length, std::size_t history,
                          std::size_t horizon, std::size_t stride);

// Segments in time order, grouped into batches of `batch_size` (the last
// batch may be smaller).
std::vector<SegmentBatch> window(const SeriesDataset& dataset, std::size_t history,
                                 std::size_t horizon, std::size_t stride,
                                 std::size_t batch_size);
// Every segment in one batch.
SegmentBatch window_all(const SeriesDataset& dataset, std::size_t history,
                        std::size_t horizon, std::size_t stride);

ClassPartition class_partition(const SegmentBatch& batch);
// Same rule applied to a (B, horizon, N) label tensor.
ClassPartition class_partition(const Tensor& Y);

struct DatasetSplit {
  SeriesDataset train;
  SeriesDataset val;
  SeriesDataset test;
};

// Contiguous chronological split; the test part takes the remainder.
DatasetSplit split_chronological(const SeriesDataset& dataset, double train_fraction,
                                 double val_fraction);

struct FeatureStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

FeatureStats feature_stats(const SeriesDataset& dataset);
// Per-channel z-scoring; zero-variance channels are only centred.
void standardize(SeriesDataset& dataset, const FeatureStats& stats);

}  // namespace zistorm::zidata

#endif  // ZISTORM_ZIDATA_HPP_
