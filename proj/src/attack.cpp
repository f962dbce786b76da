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

#include "zistorm/attack.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace zistorm::attack {
namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void check_x(const Tensor& X) {
  if (X.rank() != 4) throw std::invalid_argument("attack input must be (B, T, N, D)");
}

Tensor gradient_at(const stmodel::STRegressor& model, const stmodel::LossFn& loss_fn,
                   const Tensor& X, const Tensor& Y, const zidata::SpatioTemporalGraph& graph,
                   const GradientTransform& transform, double* loss) {
  Tensor g = model.input_gradient(loss_fn, X, Y, graph, loss);
  if (!g.all_finite()) throw std::runtime_error("non-finite gradient during attack");
  if (transform) {
    g = transform(g);
    if (g.shape() != X.shape()) throw std::invalid_argument("gradient transform changed the shape");
  }
  return g;
}

PerturbationMask saliency_mask(const Tensor& grads, std::size_t k, bool per_segment) {
  const Shape& s = grads.shape();
  PerturbationMask mask(s[0], s[1], s[2], s[3]);
  if (per_segment) {
    const Tensor sal = segment_saliency(grads);
    for (std::size_t b = 0; b < s[0]; ++b) {
      for (std::size_t n : top_k(sal.data().subspan(b * s[2], s[2]), k)) mask.set(b, n, true);
    }
  } else {
    const Tensor sal = node_saliency(grads);
    for (std::size_t n : top_k(sal.data(), k)) {
      for (std::size_t b = 0; b < s[0]; ++b) mask.set(b, n, true);
    }
  }
  return mask;
}

AdversarialExample run_pgd(const stmodel::STRegressor& model, const stmodel::LossFn& loss_fn,
                           const Tensor& X, const Tensor& Y,
                           const zidata::SpatioTemporalGraph& graph, const AttackBudget& budget,
                           const PerturbationMask& mask, const StpgdOptions& options,
                           const Tensor* first_grad, double first_loss) {
  budget.validate();
  check_x(X);
  const Shape& s = X.shape();
  if (mask.batch() != s[0] || mask.num_nodes() != s[2]) {
    throw std::invalid_argument("perturbation mask does not match the input shape");
  }
  const std::size_t k = budget.victim_count(s[2]);
  if (mask.max_selected() > k) throw std::invalid_argument("mask selects more than ceil(eta N) nodes");

  AdversarialExample ae;
  ae.X = X;
  ae.X_adv = X;
  ae.mask = mask;
  ae.budget = budget;
  for (std::size_t it = 0; it < budget.num_iters; ++it) {
    double loss = 0.0;
    Tensor g;
    if (it == 0 && first_grad) {
      g = *first_grad;
      loss = first_loss;
    } else {
      g = gradient_at(model, loss_fn, ae.X_adv, Y, graph, options.transform, &loss);
    }
    ae.loss_trace.push_back(loss);
    if (options.reselect_each_iter && it > 0) ae.mask = saliency_mask(g, k, options.per_segment_mask);
    apply_sign_step(ae.X_adv, X, g, ae.mask, budget.epsilon, budget.step_alpha, options.data_range);
  }
  ae.loss_trace.push_back(model.loss(loss_fn, ae.X_adv, Y, graph));
  return ae;
}

}  // namespace

void apply_sign_step(Tensor& X_adv, const Tensor& X, const Tensor& grad,
                     const PerturbationMask& mask, double epsilon, double alpha,
                     const std::optional<std::pair<double, double>>& data_range) {
  check_x(X);
  const Shape& s = X.shape();
  if (X_adv.shape() != s || grad.shape() != s) throw std::invalid_argument("sign step shape mismatch");
  for (std::size_t b = 0; b < s[0]; ++b) {
    for (std::size_t t = 0; t < s[1]; ++t) {
      for (std::size_t n = 0; n < s[2]; ++n) {
        const std::size_t base = ((b * s[1] + t) * s[2] + n) * s[3];
        const bool on = mask.selected(b, n);
        for (std::size_t i = base; i < base + s[3]; ++i) {
          if (!on) {
            X_adv[i] = X[i];
            continue;
          }
          const double step = alpha * sign(grad[i]);
          if (step == 0.0) continue;
          double v = X_adv[i] + step;
          if (data_range) v = std::clamp(v, data_range->first, data_range->second);
          const double lo = X[i] - epsilon;
          const double hi = X[i] + epsilon;
          X_adv[i] = v < lo ? lo : (v > hi ? hi : v);
        }
      }
    }
  }
}

void AttackBudget::validate() const {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw std::invalid_argument("epsilon must be >= 0");
  if (!(step_alpha >= 0.0) || step_alpha > epsilon) {
    throw std::invalid_argument("step_alpha must lie in [0, epsilon]");
  }
  if (!(eta > 0.0 && eta <= 1.0)) throw std::invalid_argument("eta must lie in (0, 1]");
  if (num_iters < 1) throw std::invalid_argument("num_iters must be >= 1");
}

std::size_t AttackBudget::victim_count(std::size_t num_nodes) const {
  const double raw = std::ceil(eta * static_cast<double>(num_nodes) - 1e-9);
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(raw, 1.0)), 1, num_nodes);
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::kRandom: return "random";
    case Strategy::kDegree: return "degree";
    case Strategy::kPagerank: return "pagerank";
    case Strategy::kSaliency: return "saliency";
  }
  return "unknown";
}

Strategy strategy_from_string(const std::string& name) {
  if (name == "random") return Strategy::kRandom;
  if (name == "degree") return Strategy::kDegree;
  if (name == "pagerank") return Strategy::kPagerank;
  if (name == "saliency") return Strategy::kSaliency;
  throw std::invalid_argument("unknown victim strategy '" + name + "'");
}

PerturbationMask::PerturbationMask(std::size_t batch, std::size_t history, std::size_t nodes,
                                   std::size_t features)
    : batch_(batch), history_(history), nodes_(nodes), features_(features), node_(batch * nodes, 0) {}

PerturbationMask PerturbationMask::for_nodes(const Shape& x_shape,
                                             const std::vector<std::size_t>& nodes) {
  if (x_shape.size() != 4) throw std::invalid_argument("mask shape must be (B, T, N, D)");
  PerturbationMask m(x_shape[0], x_shape[1], x_shape[2], x_shape[3]);
  for (std::size_t n : nodes) {
    if (n >= x_shape[2]) throw std::out_of_range("victim node index out of range");
    for (std::size_t b = 0; b < x_shape[0]; ++b) m.set(b, n, true);
  }
  return m;
}

std::vector<std::size_t> PerturbationMask::nodes(std::size_t b) const {
  std::vector<std::size_t> out;
  for (std::size_t n = 0; n < nodes_; ++n) {
    if (selected(b, n)) out.push_back(n);
  }
  return out;
}

std::size_t PerturbationMask::max_selected() const {
  std::size_t best = 0;
  for (std::size_t b = 0; b < batch_; ++b) best = std::max(best, nodes(b).size());
  return best;
}

Tensor PerturbationMask::dense() const {
  Tensor out({batch_, history_, nodes_, features_});
  for (std::size_t b = 0; b < batch_; ++b)
    for (std::size_t t = 0; t < history_; ++t)
      for (std::size_t n = 0; n < nodes_; ++n)
        if (selected(b, n))
          for (std::size_t d = 0; d < features_; ++d) out[((b * history_ + t) * nodes_ + n) * features_ + d] = 1.0;
  return out;
}

Tensor node_saliency(const Tensor& grads) {
  check_x(grads);
  const Shape& s = grads.shape();
  if (s[0] == 0) throw std::invalid_argument("saliency of an empty batch");
  const std::size_t tnd = s[1] * s[2] * s[3];
  std::vector<double> avg(tnd, 0.0);
  for (std::size_t b = 0; b < s[0]; ++b)
    for (std::size_t i = 0; i < tnd; ++i) avg[i] += grads[b * tnd + i];
  Tensor out({s[2]});
  const double inv_b = 1.0 / static_cast<double>(s[0]);
  for (std::size_t t = 0; t < s[1]; ++t) {
    for (std::size_t n = 0; n < s[2]; ++n) {
      for (std::size_t d = 0; d < s[3]; ++d) {
        const double v = std::max(0.0, avg[(t * s[2] + n) * s[3] + d] * inv_b);
        out[n] += v * v;
      }
    }
  }
  for (auto& v : out.storage()) v = std::sqrt(v);
  return out;
}

Tensor segment_saliency(const Tensor& grads) {
  check_x(grads);
  const Shape& s = grads.shape();
  if (s[0] == 0) throw std::invalid_argument("saliency of an empty batch");
  Tensor out({s[0], s[2]});
  for (std::size_t b = 0; b < s[0]; ++b)
    for (std::size_t t = 0; t < s[1]; ++t)
      for (std::size_t n = 0; n < s[2]; ++n)
        for (std::size_t d = 0; d < s[3]; ++d) {
          const double v = std::max(0.0, grads[((b * s[1] + t) * s[2] + n) * s[3] + d]);
          out[b * s[2] + n] += v * v;
        }
  for (auto& v : out.storage()) v = std::sqrt(v);
  return out;
}

std::vector<std::size_t> top_k(std::span<const double> scores, std::size_t k) {
  if (k > scores.size()) throw std::invalid_argument("k exceeds the number of nodes");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  order.resize(k);
  return order;
}

std::vector<double> weighted_degree(const Tensor& adjacency) {
  const std::size_t n = adjacency.dim(0);
  std::vector<double> deg(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) deg[i] += adjacency[i * n + j];
  return deg;
}

std::vector<double> pagerank(const Tensor& adjacency, double damping, double tolerance,
                             std::size_t max_iters) {
  const std::size_t n = adjacency.dim(0);
  const std::vector<double> deg = weighted_degree(adjacency);
  std::vector<double> pr(n, 1.0 / static_cast<double>(n));
  std::vector<double> next(n);
  for (std::size_t it = 0; it < max_iters; ++it) {
    double dangling = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (deg[j] == 0.0) dangling += pr[j];
    }
    const double base = (1.0 - damping + damping * dangling) / static_cast<double>(n);
    std::fill(next.begin(), next.end(), base);
    for (std::size_t j = 0; j < n; ++j) {
      if (deg[j] == 0.0) continue;
      const double share = damping * pr[j] / deg[j];
      for (std::size_t i = 0; i < n; ++i) next[i] += share * adjacency[j * n + i];
    }
    double diff = 0.0;
    for (std::size_t i = 0; i < n; ++i) diff += std::abs(next[i] - pr[i]);
    pr.swap(next);
    if (diff < tolerance) break;
  }
  return pr;
}

std::vector<std::size_t> select_victims(Strategy strategy, const SelectionContext& context,
                                        std::size_t k) {
  std::size_t n = 0;
  if (context.graph) n = context.graph->num_nodes;
  else if (context.saliency) n = context.saliency->numel();
  if (k == 0) throw std::invalid_argument("victim count must be >= 1");
  if (k > n) throw std::invalid_argument("k = " + std::to_string(k) + " exceeds N = " + std::to_string(n));
  switch (strategy) {
    case Strategy::kRandom: {
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), 0);
      std::mt19937_64 rng(context.seed);
      std::shuffle(order.begin(), order.end(), rng);
      order.resize(k);
      std::sort(order.begin(), order.end());
      return order;
    }
    case Strategy::kDegree:
    case Strategy::kPagerank: {
      if (!context.graph) throw std::invalid_argument("graph required for degree/pagerank selection");
      const Tensor& adj = context.graph->adjacency_views.at(0);
      const auto scores = strategy == Strategy::kDegree ? weighted_degree(adj) : pagerank(adj);
      return top_k(scores, k);
    }
    case Strategy::kSaliency:
      if (!context.saliency) throw std::invalid_argument("saliency required for saliency selection");
      return top_k(context.saliency->data(), k);
  }
  throw std::invalid_argument("unknown victim strategy");
}

AdversarialExample stpgd(const stmodel::STRegressor& model, const stmodel::LossFn& loss_fn,
                         const Tensor& X, const Tensor& Y,
                         const zidata::SpatioTemporalGraph& graph, const AttackBudget& budget,
                         const PerturbationMask& mask, const StpgdOptions& options) {
  return run_pgd(model, loss_fn, X, Y, graph, budget, mask, options, nullptr, 0.0);
}

AdversarialExample generate(const stmodel::STRegressor& model, const stmodel::LossFn& loss_fn,
                            const Tensor& X, const Tensor& Y,
                            const zidata::SpatioTemporalGraph& graph, const AttackSpec& spec,
                            const GradientTransform& transform) {
  spec.budget.validate();
  check_x(X);
  double clean_loss = 0.0;
  const Tensor g = gradient_at(model, loss_fn, X, Y, graph, transform, &clean_loss);
  const std::size_t k = spec.budget.victim_count(X.dim(2));
  const bool saliency = spec.strategy == Strategy::kSaliency;
  PerturbationMask mask;
  if (saliency && spec.per_segment_mask) {
    mask = saliency_mask(g, k, true);
  } else {
    Tensor sal;
    SelectionContext ctx{&graph, nullptr, spec.seed};
    if (saliency) {
      sal = node_saliency(g);
      ctx.saliency = &sal;
    }
    mask = PerturbationMask::for_nodes(X.shape(), select_victims(spec.strategy, ctx, k));
  }
  StpgdOptions options;
  options.reselect_each_iter = saliency && spec.reselect_each_iter;
  options.per_segment_mask = spec.per_segment_mask;
  options.transform = transform;
  return run_pgd(model, loss_fn, X, Y, graph, spec.budget, mask, options, &g, clean_loss);
}

PairedTable clean_vs_adv_eval(const stmodel::STRegressor& model,
                              const std::vector<zidata::SegmentBatch>& batches,
                              const zidata::SpatioTemporalGraph& graph, const AttackFn& attack) {
  PairedTable table;
  metrics::MetricAccumulator clean_acc;
  metrics::MetricAccumulator adv_acc;
  for (std::size_t i = 0; i < batches.size(); ++i) {
    const auto& batch = batches[i];
    PairedRow row;
    row.batch_index = i;
    row.clean_prediction = model.predict(batch.X, graph);
    const AdversarialExample ae = attack(batch, i);
    row.adv_prediction = model.predict(ae.X_adv, graph);
    row.victims = ae.mask.max_selected();
    row.clean = metrics::evaluate(row.clean_prediction, batch.Y);
    row.adversarial = metrics::evaluate(row.adv_prediction, batch.Y);
    clean_acc.add_batch(row.clean_prediction, batch.Y);
    adv_acc.add_batch(row.adv_prediction, batch.Y);
    table.rows.push_back(std::move(row));
  }
  table.clean = clean_acc.report();
  table.adversarial = adv_acc.report();
  return table;
}

PairedTable clean_vs_adv_eval(const stmodel::STRegressor& model, const stmodel::LossFn& loss_fn,
                              const std::vector<zidata::SegmentBatch>& batches,
                              const zidata::SpatioTemporalGraph& graph, const AttackSpec& spec) {
  return clean_vs_adv_eval(model, batches, graph,
                           [&](const zidata::SegmentBatch& batch, std::size_t index) {
                             AttackSpec s = spec;
                             s.seed = spec.seed + 0x9E3779B97F4A7C15ULL * (index + 1);
                             return generate(model, loss_fn, batch.X, batch.Y, graph, s);
                           });
}

}  // namespace zistorm::attack
