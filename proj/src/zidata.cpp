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

#include "zistorm/zidata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>

#include "json.hpp"

#include "zistorm/checksum.hpp"
#include "zistorm/tensor_io.hpp"

namespace zistorm::zidata {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr double kCyclePeriod = 24.0;
// Dispersion of the count process before zero inflation.
constexpr double kCountDispersion = 0.5;
// Share of the target zero rate produced by the count process itself; the
// Bernoulli gate supplies the rest.
constexpr double kIntrinsicZeroShare = 0.5;

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("missing file: " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

// Mean of each node's value over its weighted neighbourhood in `adj`.
std::vector<double> neighbour_mean(const Tensor& adj, const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double w = 0.0;
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double a = adj[i * n + j];
      w += a;
      acc += a * x[j];
    }
    out[i] = w > 0 ? acc / w : x[i];
  }
  return out;
}

Tensor grid_view(std::size_t n) {
  const auto rows = std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(n))));
  const std::size_t cols = (n + rows - 1) / rows;
  Tensor adj({n, n});
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      const long dr = static_cast<long>(a / cols) - static_cast<long>(b / cols);
      const long dc = static_cast<long>(a % cols) - static_cast<long>(b % cols);
      if (std::abs(dr) + std::abs(dc) == 1) {
        adj[a * n + b] = 1.0;
        adj[b * n + a] = 1.0;
      }
    }
  }
  return adj;
}

// Gaussian-weighted edges between random points closer than a radius that
// keeps the expected degree near four.
Tensor geometric_view(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> px(n);
  std::vector<double> py(n);
  for (std::size_t i = 0; i < n; ++i) {
    px[i] = unit(rng);
    py[i] = unit(rng);
  }
  const double radius = std::sqrt(4.0 / (std::numbers::pi * static_cast<double>(n)));
  Tensor adj({n, n});
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      const double d2 = (px[a] - px[b]) * (px[a] - px[b]) + (py[a] - py[b]) * (py[a] - py[b]);
      if (d2 < radius * radius) {
        const double w = std::exp(-d2 / (radius * radius));
        adj[a * n + b] = w;
        adj[b * n + a] = w;
      }
    }
  }
  return io::round_to_float32(std::move(adj));
}

double nb_zero_probability(double mean, double dispersion) {
  return std::pow(1.0 / (1.0 + dispersion * mean), 1.0 / dispersion);
}

SeriesDataset slice_time(const SeriesDataset& d, std::size_t begin, std::size_t end) {
  const std::size_t n = d.num_nodes();
  const std::size_t dim = d.feature_dim();
  SeriesDataset out;
  out.graph = d.graph;
  out.features = Tensor({end - begin, n, dim});
  std::copy(d.features.data().begin() + static_cast<std::ptrdiff_t>(begin * n * dim),
            d.features.data().begin() + static_cast<std::ptrdiff_t>(end * n * dim),
            out.features.data().begin());
  out.labels.shape = {end - begin, n};
  out.labels.data.assign(d.labels.data.begin() + static_cast<std::ptrdiff_t>(begin * n),
                         d.labels.data.begin() + static_cast<std::ptrdiff_t>(end * n));
  out.timestamps.assign(d.timestamps.begin() + static_cast<std::ptrdiff_t>(begin),
                        d.timestamps.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

}  // namespace

void SpatioTemporalGraph::validate() const {
  if (num_nodes == 0) throw std::invalid_argument("graph has no nodes");
  if (adjacency_views.empty()) throw std::invalid_argument("graph has no adjacency views");
  if (view_names.size() != adjacency_views.size()) {
    throw std::invalid_argument("graph view names do not match view count");
  }
  for (std::size_t k = 0; k < adjacency_views.size(); ++k) {
    const Tensor& a = adjacency_views[k];
    if (a.shape() != Shape{num_nodes, num_nodes}) {
      throw std::invalid_argument("adjacency view '" + view_names[k] + "' has shape " +
                                  shape_str(a.shape()) + ", expected N x N with N=" +
                                  std::to_string(num_nodes));
    }
    for (std::size_t i = 0; i < num_nodes; ++i) {
      for (std::size_t j = 0; j < num_nodes; ++j) {
        const double v = a[i * num_nodes + j];
        if (!(v >= 0.0) || !std::isfinite(v)) {
          throw std::invalid_argument("adjacency view '" + view_names[k] +
                                      "' has a negative or non-finite weight");
        }
        if (v != a[j * num_nodes + i]) {
          throw std::invalid_argument("adjacency view '" + view_names[k] +
                                      "' is not symmetric");
        }
      }
    }
  }
}

double SeriesDataset::zero_rate() const {
  if (labels.data.empty()) return 0.0;
  const auto zeros = std::count(labels.data.begin(), labels.data.end(), 0);
  return static_cast<double>(zeros) / static_cast<double>(labels.data.size());
}

void SeriesDataset::validate() const {
  if (features.rank() != 3) throw std::invalid_argument("features must be (L, N, D)");
  const std::size_t l = length();
  const std::size_t n = num_nodes();
  if (labels.shape != Shape{l, n}) {
    throw std::invalid_argument("labels shape " + shape_str(labels.shape) +
                                " does not match features " + shape_str(features.shape()));
  }
  if (labels.data.size() != l * n) throw std::invalid_argument("labels payload size mismatch");
  if (timestamps.size() != l) throw std::invalid_argument("timestamp count mismatch");
  if (graph.num_nodes != n) throw std::invalid_argument("graph node count mismatch");
  graph.validate();
  if (!features.all_finite()) throw std::invalid_argument("features contain NaN or Inf");
  for (auto y : labels.data) {
    if (y < 0) throw std::invalid_argument("labels must be non-negative");
  }
  for (std::size_t t = 1; t < l; ++t) {
    if (timestamps[t] <= timestamps[t - 1]) {
      throw std::invalid_argument("timestamps must be strictly increasing");
    }
  }
}

SegmentBatch SegmentBatch::gather(std::span<const std::size_t> segments) const {
  const std::size_t tnd = history() * num_nodes() * feature_dim();
  const std::size_t hn = horizon() * num_nodes();
  SegmentBatch out;
  out.X = Tensor({segments.size(), history(), num_nodes(), feature_dim()});
  out.Y = Tensor({segments.size(), horizon(), num_nodes()});
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const std::size_t s = segments[i];
    if (s >= batch_size()) throw std::out_of_range("segment index out of range");
    std::copy_n(X.data().begin() + static_cast<std::ptrdiff_t>(s * tnd), tnd,
                out.X.data().begin() + static_cast<std::ptrdiff_t>(i * tnd));
    std::copy_n(Y.data().begin() + static_cast<std::ptrdiff_t>(s * hn), hn,
                out.Y.data().begin() + static_cast<std::ptrdiff_t>(i * hn));
    out.segment_start_times.push_back(segment_start_times[s]);
  }
  return out;
}

ClassPartition::ClassPartition(std::size_t segments, std::size_t nodes,
                               std::vector<std::uint8_t> minority)
    : segments_(segments), nodes_(nodes), minority_(std::move(minority)) {
  if (minority_.size() != segments_ * nodes_) {
    throw std::invalid_argument("partition mask size mismatch");
  }
}

std::size_t ClassPartition::minority_count() const {
  return static_cast<std::size_t>(std::count_if(minority_.begin(), minority_.end(),
                                                [](std::uint8_t v) { return v != 0; }));
}

std::vector<std::pair<std::size_t, std::size_t>> ClassPartition::minority_index() const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t s = 0; s < segments_; ++s) {
    for (std::size_t n = 0; n < nodes_; ++n) {
      if (is_minority(s, n)) out.emplace_back(s, n);
    }
  }
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> ClassPartition::majority_index() const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t s = 0; s < segments_; ++s) {
    for (std::size_t n = 0; n < nodes_; ++n) {
      if (!is_minority(s, n)) out.emplace_back(s, n);
    }
  }
  return out;
}

std::vector<std::uint8_t> ClassPartition::minority_nodes() const {
  std::vector<std::uint8_t> out(nodes_, 0);
  for (std::size_t s = 0; s < segments_; ++s) {
    for (std::size_t n = 0; n < nodes_; ++n) {
      if (is_minority(s, n)) out[n] = 1;
    }
  }
  return out;
}

SeriesDataset generate_synthetic_zid(std::size_t num_nodes, std::size_t length,
                                     std::size_t feature_dim,
                                     double zero_rate_target, std::uint64_t seed) {
  if (!(zero_rate_target >= 0.5 && zero_rate_target <= 0.99)) {
    throw std::invalid_argument("zero_rate out of range: expected [0.5, 0.99]");
  }
  if (num_nodes < 4) throw std::invalid_argument("num_nodes must be >= 4");
  if (length < 64) throw std::invalid_argument("length must be >= 64");
  if (feature_dim < 1) throw std::invalid_argument("feature_dim must be >= 1");

  const std::size_t n = num_nodes;
  const std::size_t l = length;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  SeriesDataset d;
  d.graph.num_nodes = n;
  d.graph.adjacency_views.push_back(grid_view(n));
  d.graph.view_names.push_back("grid");
  d.graph.adjacency_views.push_back(geometric_view(n, rng));
  d.graph.view_names.push_back("geometric");
  const Tensor& grid = d.graph.adjacency_views[0];

  // Spatially smooth per-node base rates create persistent hot spots.
  std::vector<double> base(n);
  for (auto& b : base) b = normal(rng);
  const auto base_nbr = neighbour_mean(grid, base);
  for (std::size_t i = 0; i < n; ++i) base[i] = 0.6 * base[i] + 0.6 * base_nbr[i];

  // AR(1) latent in time, one-hop smoothing in space.
  constexpr double kPhi = 0.8;
  constexpr double kSigma = 0.5;
  std::vector<double> latent(l * n);
  std::vector<double> state(n);
  for (auto& s : state) s = normal(rng) * kSigma / std::sqrt(1.0 - kPhi * kPhi);
  for (std::size_t t = 0; t < l; ++t) {
    if (t > 0) {
      for (auto& s : state) s = kPhi * s + kSigma * normal(rng);
    }
    const auto nbr = neighbour_mean(grid, state);
    for (std::size_t i = 0; i < n; ++i) {
      const double cycle = 0.5 * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / kCyclePeriod);
      latent[t * n + i] = base[i] + 0.5 * state[i] + 0.5 * nbr[i] + cycle;
    }
  }

  // Intercept chosen by bisection so the count process alone yields the
  // intrinsic share of zeros.
  const double intrinsic_target = kIntrinsicZeroShare * zero_rate_target;
  auto mean_zero_prob = [&](double offset) {
    double acc = 0.0;
    for (double z : latent) acc += nb_zero_probability(std::exp(offset + z), kCountDispersion);
    return acc / static_cast<double>(latent.size());
  };
  double lo = -20.0;
  double hi = 20.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mean_zero_prob(mid) > intrinsic_target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const double offset = 0.5 * (lo + hi);

  // Gamma-Poisson mixture gives NB(mean, dispersion) counts.
  std::vector<std::int32_t> counts(l * n);
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double mean = std::exp(offset + latent[i]);
    std::gamma_distribution<double> gamma(1.0 / kCountDispersion, kCountDispersion * mean);
    std::poisson_distribution<std::int32_t> poisson(std::max(gamma(rng), 1e-300));
    counts[i] = poisson(rng);
  }
  const double realized_zero =
      static_cast<double>(std::count(counts.begin(), counts.end(), 0)) /
      static_cast<double>(counts.size());
  const double gate = realized_zero >= zero_rate_target
                          ? 0.0
                          : (zero_rate_target - realized_zero) / (1.0 - realized_zero);
  for (auto& c : counts) {
    if (unit(rng) < gate) c = 0;
  }

  d.labels.shape = {l, n};
  d.labels.data = counts;
  d.timestamps.resize(l);
  for (std::size_t t = 0; t < l; ++t) d.timestamps[t] = static_cast<std::int32_t>(t);

  std::vector<double> phase(n);
  for (auto& p : phase) p = 2.0 * std::numbers::pi * unit(rng);
  d.features = Tensor({l, n, feature_dim});
  for (std::size_t t = 0; t < l; ++t) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(t) / kCyclePeriod;
    for (std::size_t i = 0; i < n; ++i) {
      double* f = d.features.data().data() + (t * n + i) * feature_dim;
      f[0] = t > 0 ? static_cast<double>(counts[(t - 1) * n + i]) : 0.0;
      if (feature_dim > 1) f[1] = std::sin(angle);
      if (feature_dim > 2) f[2] = std::cos(angle);
      for (std::size_t c = 3; c < feature_dim; ++c) {
        const double k = static_cast<double>(c - 1);
        f[c] = std::sin(angle / k + k * phase[i]);
      }
    }
  }
  d.features = io::round_to_float32(std::move(d.features));
  return d;
}

void save_dataset(const SeriesDataset& dataset, const fs::path& dir) {
  dataset.validate();
  fs::create_directories(dir);
  json checksums = json::object();
  auto emit = [&](const std::string& file, const auto& tensor) {
    io::write_zist(dir / file, tensor);
    checksums[file] = hex32(crc32_of_file(dir / file));
  };
  emit("features.zist", dataset.features);
  emit("labels.zist", dataset.labels);
  emit("timestamps.zist",
       IntTensor{{dataset.timestamps.size()}, dataset.timestamps});
  json views = json::array();
  for (std::size_t k = 0; k < dataset.graph.num_views(); ++k) {
    const std::string file = "view_" + std::to_string(k) + ".zist";
    emit(file, dataset.graph.adjacency_views[k]);
    views.push_back({{"name", dataset.graph.view_names[k]}, {"file", file}});
  }
  write_json(dir / "graph.json", {{"num_nodes", dataset.graph.num_nodes}, {"views", views}});
  json meta = {
      {"format", "zistorm-dataset"},
      {"version", io::kZistVersion},
      {"N", dataset.num_nodes()},
      {"D", dataset.feature_dim()},
      {"L_total", dataset.length()},
      {"K", dataset.graph.num_views()},
      {"zero_rate", dataset.zero_rate()},
      {"dtypes", {{"features", 0}, {"labels", 1}, {"timestamps", 1}, {"views", 0}}},
      {"checksums", checksums},
  };
  write_json(dir / "meta.json", meta);
}

SeriesDataset load_dataset(const fs::path& dir) {
  const json meta = read_json(dir / "meta.json");
  const json graph_meta = read_json(dir / "graph.json");
  std::size_t n = 0;
  std::size_t dim = 0;
  std::size_t l = 0;
  std::size_t k = 0;
  json checksums;
  try {
    n = meta.at("N").get<std::size_t>();
    dim = meta.at("D").get<std::size_t>();
    l = meta.at("L_total").get<std::size_t>();
    k = meta.at("K").get<std::size_t>();
    checksums = meta.at("checksums");
  } catch (const json::exception& e) {
    throw std::runtime_error("meta.json is missing required fields: " + std::string(e.what()));
  }
  auto verify = [&](const std::string& file) {
    if (!fs::exists(dir / file)) throw std::runtime_error("missing file: " + (dir / file).string());
    if (!checksums.contains(file)) throw std::runtime_error("no checksum recorded for " + file);
  };
  auto check_crc = [&](const std::string& file) {
    const std::string actual = hex32(crc32_of_file(dir / file));
    if (actual != checksums.at(file).get<std::string>()) {
      throw std::runtime_error("checksum mismatch for " + file);
    }
  };

  SeriesDataset d;
  verify("features.zist");
  d.features = io::read_zist_float(dir / "features.zist");
  check_crc("features.zist");
  verify("labels.zist");
  d.labels = io::read_zist_int(dir / "labels.zist");
  check_crc("labels.zist");
  verify("timestamps.zist");
  const IntTensor ts = io::read_zist_int(dir / "timestamps.zist");
  check_crc("timestamps.zist");
  d.timestamps = ts.data;

  if (d.features.shape() != Shape{l, n, dim}) {
    throw std::runtime_error("shape mismatch: features " + shape_str(d.features.shape()) +
                             " vs meta (" + std::to_string(l) + "," + std::to_string(n) +
                             "," + std::to_string(dim) + ")");
  }
  if (d.labels.shape != Shape{l, n}) {
    throw std::runtime_error("shape mismatch: labels " + shape_str(d.labels.shape));
  }
  if (ts.shape != Shape{l}) throw std::runtime_error("shape mismatch: timestamps");

  const auto& views = graph_meta.at("views");
  if (views.size() != k) throw std::runtime_error("shape mismatch: view count vs meta K");
  d.graph.num_nodes = graph_meta.at("num_nodes").get<std::size_t>();
  if (d.graph.num_nodes != n) throw std::runtime_error("shape mismatch: graph node count");
  for (const auto& v : views) {
    const std::string file = v.at("file").get<std::string>();
    verify(file);
    d.graph.adjacency_views.push_back(io::read_zist_float(dir / file));
    check_crc(file);
    d.graph.view_names.push_back(v.at("name").get<std::string>());
  }
  try {
    d.validate();
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("invalid dataset: ") + e.what());
  }
  return d;
}

std::size_t segment_count(std::size_t length, std::size_t history,
                          std::size_t horizon, std::size_t stride) {
  if (history < 1 || horizon < 1) throw std::invalid_argument("history and horizon must be >= 1");
  if (stride < 1) throw std::invalid_argument("stride must be >= 1");
  if (history + horizon > length) {
    throw std::invalid_argument("history + horizon (" + std::to_string(history + horizon) +
                                ") exceeds series length " + std::to_string(length));
  }
  return (length - history - horizon) / stride + 1;
}

SegmentBatch window_all(const SeriesDataset& dataset, std::size_t history,
                        std::size_t horizon, std::size_t stride) {
  const std::size_t count = segment_count(dataset.length(), history, horizon, stride);
  const std::size_t n = dataset.num_nodes();
  const std::size_t dim = dataset.feature_dim();
  SegmentBatch out;
  out.X = Tensor({count, history, n, dim});
  out.Y = Tensor({count, horizon, n});
  for (std::size_t s = 0; s < count; ++s) {
    const std::size_t start = s * stride;
    std::copy_n(dataset.features.data().begin() + static_cast<std::ptrdiff_t>(start * n * dim),
                history * n * dim,
                out.X.data().begin() + static_cast<std::ptrdiff_t>(s * history * n * dim));
    for (std::size_t h = 0; h < horizon; ++h) {
      for (std::size_t i = 0; i < n; ++i) {
        out.Y[(s * horizon + h) * n + i] =
            static_cast<double>(dataset.labels.data[(start + history + h) * n + i]);
      }
    }
    out.segment_start_times.push_back(dataset.timestamps[start]);
  }
  return out;
}

std::vector<SegmentBatch> window(const SeriesDataset& dataset, std::size_t history,
                                 std::size_t horizon, std::size_t stride,
                                 std::size_t batch_size) {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  const SegmentBatch all = window_all(dataset, history, horizon, stride);
  std::vector<SegmentBatch> batches;
  for (std::size_t begin = 0; begin < all.batch_size(); begin += batch_size) {
    const std::size_t end = std::min(all.batch_size(), begin + batch_size);
    std::vector<std::size_t> idx(end - begin);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = begin + i;
    batches.push_back(all.gather(idx));
  }
  return batches;
}

ClassPartition class_partition(const SegmentBatch& batch) { return class_partition(batch.Y); }

ClassPartition class_partition(const Tensor& Y) {
  if (Y.rank() != 3) throw std::invalid_argument("labels must be (B, horizon, N)");
  const std::size_t b = Y.dim(0);
  const std::size_t h = Y.dim(1);
  const std::size_t n = Y.dim(2);
  std::vector<std::uint8_t> minority(b * n, 0);
  for (std::size_t s = 0; s < b; ++s) {
    for (std::size_t d = 0; d < h; ++d) {
      for (std::size_t i = 0; i < n; ++i) {
        if (Y[(s * h + d) * n + i] > 0) minority[s * n + i] = 1;
      }
    }
  }
  return ClassPartition(b, n, std::move(minority));
}

DatasetSplit split_chronological(const SeriesDataset& dataset, double train_fraction,
                                 double val_fraction) {
  if (!(train_fraction > 0 && val_fraction >= 0 && train_fraction + val_fraction < 1)) {
    throw std::invalid_argument("split fractions must satisfy 0 < train, 0 <= val, train + val < 1");
  }
  const std::size_t l = dataset.length();
  const auto train_end = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(l)));
  const auto val_end = static_cast<std::size_t>(
      std::floor((train_fraction + val_fraction) * static_cast<double>(l)));
  DatasetSplit split;
  split.train = slice_time(dataset, 0, train_end);
  split.val = slice_time(dataset, train_end, val_end);
  split.test = slice_time(dataset, val_end, l);
  return split;
}

FeatureStats feature_stats(const SeriesDataset& dataset) {
  const std::size_t dim = dataset.feature_dim();
  const std::size_t rows = dataset.length() * dataset.num_nodes();
  FeatureStats stats;
  stats.mean.assign(dim, 0.0);
  stats.stddev.assign(dim, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < dim; ++c) stats.mean[c] += dataset.features[r * dim + c];
  }
  for (auto& m : stats.mean) m /= static_cast<double>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < dim; ++c) {
      const double d = dataset.features[r * dim + c] - stats.mean[c];
      stats.stddev[c] += d * d;
    }
  }
  for (auto& s : stats.stddev) s = std::sqrt(s / static_cast<double>(rows));
  return stats;
}

void standardize(SeriesDataset& dataset, const FeatureStats& stats) {
  const std::size_t dim = dataset.feature_dim();
  if (stats.mean.size() != dim || stats.stddev.size() != dim) {
    throw std::invalid_argument("feature stats do not match feature_dim");
  }
  const std::size_t rows = dataset.length() * dataset.num_nodes();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < dim; ++c) {
      double& v = dataset.features[r * dim + c];
      v -= stats.mean[c];
      if (stats.stddev[c] > 1e-12) v /= stats.stddev[c];
    }
  }
}

}  // namespace zistorm::zidata
