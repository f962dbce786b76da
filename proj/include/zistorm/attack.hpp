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

#ifndef ZISTORM_ATTACK_HPP_
#define ZISTORM_ATTACK_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "zistorm/metrics.hpp"
#include "zistorm/stmodel.hpp"
#include "zistorm/tensor.hpp"
#include "zistorm/zidata.hpp"

// Victim-node selection and l-infinity projected sign-gradient attacks on
// node features.
namespace zistorm::attack {

struct AttackBudget {
  double epsilon = 0.5;
  double eta = 0.1;
  double step_alpha = 0.125;
  std::size_t num_iters = 10;

  // Throws unless 0 <= step_alpha <= epsilon, 0 < eta <= 1 and iters >= 1.
  void validate() const;
  // ceil(eta * N), at least one.
  std::size_t victim_count(std::size_t num_nodes) const;
};

enum class Strategy { kRandom, kDegree, kPagerank, kSaliency };

std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& name);

// Node indicator over (B, N); the dense (B, T, N, D) form repeats it over
// time and feature axes.
class PerturbationMask {
 public:
  PerturbationMask() = default;
  PerturbationMask(std::size_t batch, std::size_t history, std::size_t nodes,
                   std::size_t features);

  static PerturbationMask for_nodes(const Shape& x_shape, const std::vector<std::size_t>& nodes);

  std::size_t batch() const { return batch_; }
  std::size_t num_nodes() const { return nodes_; }
  bool selected(std::size_t b, std::size_t n) const { return node_[b * nodes_ + n] != 0; }
  void set(std::size_t b, std::size_t n, bool on) { node_[b * nodes_ + n] = on ? 1 : 0; }
  // Selected nodes of segment b, ascending.
  std::vector<std::size_t> nodes(std::size_t b = 0) const;
  std::size_t max_selected() const;
  Tensor dense() const;
  const std::vector<std::uint8_t>& indicator() const { return node_; }

  friend bool operator==(const PerturbationMask&, const PerturbationMask&) = default;

 private:
  std::size_t batch_ = 0;
  std::size_t history_ = 0;
  std::size_t nodes_ = 0;
  std::size_t features_ = 0;
  std::vector<std::uint8_t> node_;
};

struct AdversarialExample {
  Tensor X_adv;
  Tensor X;
  PerturbationMask mask;
  AttackBudget budget;
  // Clean loss first, then the loss after each iteration.
  std::vector<double> loss_trace;

  double clean_loss() const { return loss_trace.front(); }
  double final_loss() const { return loss_trace.back(); }
};

// Per node: mean over the batch, ReLU, then L2 norm over time and features.
Tensor node_saliency(const Tensor& grads);
// Same reduction without the batch mean; shaped (B, N).
Tensor segment_saliency(const Tensor& grads);

// Indices of the k largest scores; ties go to the lower index.
std::vector<std::size_t> top_k(std::span<const double> scores, std::size_t k);
std::vector<double> weighted_degree(const Tensor& adjacency);
// Power iteration with uniform teleport; dangling mass is spread uniformly.
std::vector<double> pagerank(const Tensor& adjacency, double damping = 0.85,
                             double tolerance = 1e-8, std::size_t max_iters = 10000);

struct SelectionContext {
  const zidata::SpatioTemporalGraph* graph = nullptr;
  const Tensor* saliency = nullptr;  // (N)
  std::uint64_t seed = 0;
};

std::vector<std::size_t> select_victims(Strategy strategy, const SelectionContext& context,
                                        std::size_t k);

// Optional reshaping of raw input gradients before sign steps and saliency.
using GradientTransform = std::function<Tensor(const Tensor&)>;

struct StpgdOptions {
  bool reselect_each_iter = false;
  bool per_segment_mask = false;
  std::optional<std::pair<double, double>> data_range;
  GradientTransform transform;
};

// One projected sign step in place: selected coordinates move by
// alpha * sign(grad), are clamped to the optional data range and then to
// [X - epsilon, X + epsilon]; unselected coordinates are reset to X.
void apply_sign_step(Tensor& X_adv, const Tensor& X, const Tensor& grad,
                     const PerturbationMask& mask, double epsilon, double alpha,
                     const std::optional<std::pair<double, double>>& data_range = std::nullopt);

// Runs budget.num_iters sign steps restricted to `mask`, clipping to the
// epsilon ball around X after each step. With reselect_each_iter the mask
// is recomputed from saliency at the current iterate.
AdversarialExample stpgd(const stmodel::STRegressor& model, const stmodel::LossFn& loss_fn,
                         const Tensor& X, const Tensor& Y,
                         const zidata::SpatioTemporalGraph& graph, const AttackBudget& budget,
                         const PerturbationMask& mask, const StpgdOptions& options = {});

struct AttackSpec {
  std::string name;
  Strategy strategy = Strategy::kSaliency;
  AttackBudget budget;
  std::uint64_t seed = 0;
  bool reselect_each_iter = false;
  bool per_segment_mask = false;
};

// Clean gradient, victim selection, then STPGD.
AdversarialExample generate(const stmodel::STRegressor& model, const stmodel::LossFn& loss_fn,
                            const Tensor& X, const Tensor& Y,
                            const zidata::SpatioTemporalGraph& graph, const AttackSpec& spec,
                            const GradientTransform& transform = {});

// Produces an adversarial example for one batch; lets callers plug in
// attacks that need extra state.
using AttackFn = std::function<AdversarialExample(const zidata::SegmentBatch&, std::size_t)>;

struct PairedRow {
  std::size_t batch_index = 0;
  Tensor clean_prediction;
  Tensor adv_prediction;
  metrics::MetricReport clean;
  metrics::MetricReport adversarial;
  std::size_t victims = 0;
};

struct PairedTable {
  std::vector<PairedRow> rows;
  metrics::MetricReport clean;
  metrics::MetricReport adversarial;
};

// Clean and attacked predictions for every batch, with per-batch and
// pooled metrics.
PairedTable clean_vs_adv_eval(const stmodel::STRegressor& model,
                              const std::vector<zidata::SegmentBatch>& batches,
                              const zidata::SpatioTemporalGraph& graph, const AttackFn& attack);

PairedTable clean_vs_adv_eval(const stmodel::STRegressor& model, const stmodel::LossFn& loss_fn,
                              const std::vector<zidata::SegmentBatch>& batches,
                              const zidata::SpatioTemporalGraph& graph, const AttackSpec& spec);

}  // namespace zistorm::attack

#endif  // ZISTORM_ATTACK_HPP_
