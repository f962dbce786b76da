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

#include "zistorm/mingre.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace zistorm::mingre {
namespace {

// Keeps sqrt differentiable when a gradient slice vanishes.
constexpr double kSqrtGuard = 1e-24;

std::vector<nn::DenseRef> add_mlp(nn::ParameterSet& params, const std::string& name,
                                  std::size_t in, std::size_t hidden, nn::Rng& rng) {
  return {nn::add_dense(params, name + ".g1", in, hidden, rng),
          nn::add_dense(params, name + ".g2", hidden, hidden, rng),
          nn::add_dense(params, name + ".g3", hidden, 1, rng)};
}

ad::Var apply_mlp(const std::vector<ad::Var>& p, const std::vector<nn::DenseRef>& mlp, ad::Var x) {
  ad::Var h = ad::relu(nn::apply_dense(p, mlp[0], x));
  h = ad::relu(nn::apply_dense(p, mlp[1], h));
  return ad::sigmoid(nn::apply_dense(p, mlp[2], h));
}

void check_weights(const Shape& g, const AttentionWeights& w) {
  if (g.size() != 4 || w.att_sg.shape() != Shape{g[0], 1, 1, 1} ||
      w.att_te.shape() != Shape{1, g[1], 1, 1} || w.att_sp.shape() != Shape{1, 1, g[2], 1}) {
    throw std::invalid_argument("attention weights do not broadcast to gradient shape " +
                                shape_str(g));
  }
}

Tensor class_mask(const zidata::ClassPartition& partition, bool minority) {
  Tensor m({partition.segments(), partition.nodes()});
  for (std::size_t i = 0; i < m.numel(); ++i) {
    m[i] = (partition.mask()[i] != 0) == minority ? 1.0 : 0.0;
  }
  return m;
}

void check_partition(const Shape& g, const zidata::ClassPartition& partition) {
  if (g.size() != 4 || partition.segments() != g[0] || partition.nodes() != g[2]) {
    throw std::invalid_argument("class partition does not match gradient shape " + shape_str(g));
  }
  if (partition.minority_count() == 0) throw std::invalid_argument("gradient gap needs a non-empty minority class");
  if (partition.majority_count() == 0) throw std::invalid_argument("gradient gap needs a non-empty majority class");
}

// Soft victim indicator over saliency units; the threshold sits halfway
// between the k-th and (k+1)-th largest score.
ad::Var soft_mask(ad::Var saliency, std::size_t k, double temperature) {
  std::vector<double> sorted(saliency.value().storage());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const double theta = k < sorted.size() ? 0.5 * (sorted[k - 1] + sorted[k]) : sorted.back() - 1.0;
  double mean = 0.0;
  for (double v : sorted) mean += v;
  mean /= static_cast<double>(sorted.size());
  const double tau = temperature * mean + 1e-30;
  return ad::sigmoid((saliency - theta) * (1.0 / tau));
}

}  // namespace

void EncoderConfig::validate() const {
  if (model_dim == 0 || num_heads == 0 || ffn_dim == 0 || mlp_hidden == 0) {
    throw std::invalid_argument("encoder dimensions must be positive");
  }
  if (model_dim % num_heads != 0) {
    throw std::invalid_argument("model_dim " + std::to_string(model_dim) +
                                " is not divisible by num_heads " + std::to_string(num_heads));
  }
}

void Lambdas::validate() const {
  if (!(task >= 0.0) || !(gap >= 0.0) || !(minority >= 0.0) || !(majority >= 0.0)) {
    throw std::invalid_argument("lambdas must be non-negative");
  }
}

Tensor AttentionWeights::att1() const {
  const std::size_t B = att_sg.dim(0);
  const std::size_t N = att_sp.dim(2);
  Tensor out({B, 1, N, 1});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t n = 0; n < N; ++n) out[b * N + n] = att_sg[b] + att_sp[n];
  return out;
}

AttentionWeights AttentionWeights::constant(std::size_t B, std::size_t T, std::size_t N,
                                            double sg, double te, double sp) {
  return {Tensor({B, 1, 1, 1}, sg), Tensor({1, T, 1, 1}, te), Tensor({1, 1, N, 1}, sp)};
}

Reweighter::Reweighter(ReweighterConfig config, std::size_t feature_dim)
    : config_(config), feature_dim_(feature_dim), optimizer_(config.learning_rate) {
  config_.encoder.validate();
  config_.lambdas.validate();
  if (feature_dim == 0) throw std::invalid_argument("reweighter needs at least one feature");
  const auto& e = config_.encoder;
  nn::Rng rng(e.seed);
  input_ = nn::add_dense(params_, "rw.input", feature_dim, e.model_dim, rng);
  abd_ = nn::add_attention_block(params_, "rw.abd", e.model_dim, e.num_heads, e.ffn_dim, rng);
  temporal_ = nn::add_attention_block(params_, "rw.temporal", e.model_dim, e.num_heads, e.ffn_dim, rng);
  spatial_ = nn::add_attention_block(params_, "rw.spatial", e.model_dim, e.num_heads, e.ffn_dim, rng);
  mlp_sg_ = add_mlp(params_, "rw.att_sg", e.model_dim, e.mlp_hidden, rng);
  mlp_te_ = add_mlp(params_, "rw.att_te", e.model_dim, e.mlp_hidden, rng);
  mlp_sp_ = add_mlp(params_, "rw.att_sp", e.model_dim, e.mlp_hidden, rng);
}

ad::Var Reweighter::abd_layer(const std::vector<ad::Var>& p, ad::Var x) const {
  return nn::apply_attention_block(p, abd_, x);
}

ad::Var Reweighter::temporal_layer(const std::vector<ad::Var>& p, ad::Var x) const {
  return nn::apply_attention_block(p, temporal_, x);
}

ad::Var Reweighter::spatial_layer(const std::vector<ad::Var>& p, ad::Var x) const {
  return nn::apply_attention_block(p, spatial_, x);
}

ad::Var Reweighter::encode(const std::vector<ad::Var>& p, ad::Var X) const {
  if (X.shape().size() != 4 || X.shape()[3] != feature_dim_) {
    throw std::invalid_argument("reweighter input must be (B, T, N, " + std::to_string(feature_dim_) +
                                "), got " + shape_str(X.shape()));
  }
  ad::Var h = nn::apply_dense(p, input_, X);                       // (B, T, N, Dh)
  h = abd_layer(p, ad::permute(h, {1, 2, 0, 3}));                  // (T, N, B, Dh)
  h = temporal_layer(p, ad::permute(h, {2, 1, 0, 3}));             // (B, N, T, Dh)
  return spatial_layer(p, ad::permute(h, {0, 2, 1, 3}));           // (B, T, N, Dh)
}

Tensor Reweighter::encode(const Tensor& X) const {
  ad::Tape tape;
  const auto p = params_.bind(tape, false);
  return encode(p, tape.constant(X)).value();
}

Reweighter::AttentionVars Reweighter::attention_vars(const std::vector<ad::Var>& p, ad::Var O) const {
  const Shape s = O.shape();
  AttentionVars a;
  a.sg = ad::reshape(apply_mlp(p, mlp_sg_, ad::mean(O, {1, 2})), {s[0], 1, 1, 1});
  a.te = ad::reshape(apply_mlp(p, mlp_te_, ad::mean(O, {0, 2})), {1, s[1], 1, 1});
  a.sp = ad::reshape(apply_mlp(p, mlp_sp_, ad::mean(O, {0, 1})), {1, 1, s[2], 1});
  return a;
}

AttentionWeights Reweighter::attention_from_encoding(const Tensor& O) const {
  ad::Tape tape;
  const auto p = params_.bind(tape, false);
  const auto a = attention_vars(p, tape.constant(O));
  return {a.sg.value(), a.te.value(), a.sp.value()};
}

AttentionWeights Reweighter::attention_weights(const Tensor& X) const {
  ad::Tape tape;
  const auto p = params_.bind(tape, false);
  const auto a = attention_vars(p, encode(p, tape.constant(X)));
  return {a.sg.value(), a.te.value(), a.sp.value()};
}

Tensor reweight_gradients(const Tensor& grad, const AttentionWeights& w) {
  check_weights(grad.shape(), w);
  const Shape& s = grad.shape();
  Tensor out(s);
  for (std::size_t b = 0; b < s[0]; ++b)
    for (std::size_t t = 0; t < s[1]; ++t)
      for (std::size_t n = 0; n < s[2]; ++n) {
        const double a1 = w.att_sg[b] + w.att_sp[n];
        const std::size_t base = ((b * s[1] + t) * s[2] + n) * s[3];
        for (std::size_t d = 0; d < s[3]; ++d) out[base + d] = a1 * grad[base + d] * w.att_te[t];
      }
  return out;
}

ad::Var reweight_gradients(ad::Var grad, ad::Var att_sg, ad::Var att_te, ad::Var att_sp) {
  return (att_sg + att_sp) * grad * att_te;
}

attack::AdversarialExample mingre_generate(const stmodel::STRegressor& model,
                                           const stmodel::LossFn& loss_fn, const Tensor& X,
                                           const Tensor& Y,
                                           const zidata::SpatioTemporalGraph& graph,
                                           const AttentionWeights& weights,
                                           const attack::AttackSpec& spec) {
  check_weights(X.shape(), weights);
  attack::AttackSpec s = spec;
  s.strategy = attack::Strategy::kSaliency;
  return attack::generate(model, loss_fn, X, Y, graph, s,
                          [&weights](const Tensor& g) { return reweight_gradients(g, weights); });
}

double gradient_gap(const Tensor& grad_hat, const zidata::ClassPartition& partition) {
  const Shape& s = grad_hat.shape();
  check_partition(s, partition);
  double sum_min = 0.0;
  double sum_maj = 0.0;
  for (std::size_t b = 0; b < s[0]; ++b) {
    for (std::size_t n = 0; n < s[2]; ++n) {
      double sq = 0.0;
      for (std::size_t t = 0; t < s[1]; ++t)
        for (std::size_t d = 0; d < s[3]; ++d) {
          const double v = grad_hat[((b * s[1] + t) * s[2] + n) * s[3] + d];
          sq += v * v;
        }
      (partition.is_minority(b, n) ? sum_min : sum_maj) += std::sqrt(sq);
    }
  }
  return std::abs(sum_min / static_cast<double>(partition.minority_count()) -
                  sum_maj / static_cast<double>(partition.majority_count()));
}

ad::Var gradient_gap(ad::Var grad_hat, const zidata::ClassPartition& partition) {
  check_partition(grad_hat.shape(), partition);
  ad::Tape& tape = *grad_hat.tape();
  const ad::Var mag = ad::sqrt(ad::sum(ad::square(grad_hat), {1, 3}) + kSqrtGuard);  // (B, N)
  const ad::Var mean_min = ad::sum(mag * tape.constant(class_mask(partition, true))) *
                           (1.0 / static_cast<double>(partition.minority_count()));
  const ad::Var mean_maj = ad::sum(mag * tape.constant(class_mask(partition, false))) *
                           (1.0 / static_cast<double>(partition.majority_count()));
  return ad::abs(mean_min - mean_maj);
}

attack::AdversarialExample stage1_attack_step(const stmodel::STRegressor& model,
                                              const Reweighter& reweighter,
                                              const stmodel::LossFn& loss_fn, const Tensor& X,
                                              const Tensor& Y,
                                              const zidata::SpatioTemporalGraph& graph,
                                              const attack::AttackSpec& spec) {
  return mingre_generate(model, loss_fn, X, Y, graph, reweighter.attention_weights(X), spec);
}

Stage2Breakdown stage2_reweighter_update(const stmodel::STRegressor& model,
                                         Reweighter& reweighter, const stmodel::LossFn& loss_fn,
                                         const Tensor& X, const Tensor& Y,
                                         const zidata::SpatioTemporalGraph& graph,
                                         const attack::AdversarialExample& adv,
                                         const attack::AttackSpec& spec) {
  const Lambdas& lam = reweighter.config().lambdas;
  lam.validate();
  if (adv.X.shape() != X.shape() || adv.loss_trace.empty()) {
    throw std::invalid_argument("adversarial example does not belong to this batch");
  }
  const Shape& s = X.shape();
  const zidata::ClassPartition partition = zidata::class_partition(Y);
  Stage2Breakdown out;

  ad::Tape tape;
  const auto p = reweighter.params().bind(tape, true);
  const auto att = reweighter.attention_vars(p, reweighter.encode(p, tape.constant(X)));
  const Tensor grad = model.input_gradient(loss_fn, X, Y, graph);
  const ad::Var grad_hat = reweight_gradients(tape.constant(grad), att.sg, att.te, att.sp);

  out.raw_task = adv.final_loss();
  ad::Var total = tape.constant(Tensor::scalar(lam.task * out.raw_task));
  if (lam.task > 0.0) {
    // The loss at the generated example depends on the reweighter only
    // through which nodes are perturbed. The first-order payoff of toggling
    // each unit enters through a soft mask whose forward value cancels.
    const Tensor adv_grad = model.input_gradient(loss_fn, adv.X_adv, Y, graph);
    const std::size_t k = spec.budget.victim_count(s[2]);
    ad::Var saliency;
    Tensor payoff;
    if (spec.per_segment_mask) {
      saliency = ad::sqrt(ad::sum(ad::square(ad::relu(grad_hat)), {1, 3}) + kSqrtGuard);  // (B, N)
      payoff = Tensor({s[0], s[2]});
    } else {
      saliency = ad::sqrt(ad::sum(ad::square(ad::relu(ad::mean(grad_hat, {0}))), {0, 2}) + kSqrtGuard);
      payoff = Tensor({s[2]});
    }
    for (std::size_t b = 0; b < s[0]; ++b)
      for (std::size_t t = 0; t < s[1]; ++t)
        for (std::size_t n = 0; n < s[2]; ++n)
          for (std::size_t d = 0; d < s[3]; ++d) {
            const std::size_t i = ((b * s[1] + t) * s[2] + n) * s[3] + d;
            const double delta = adv.mask.selected(b, n) ? adv.X_adv[i] - X[i]
                                                         : spec.budget.epsilon * (adv_grad[i] > 0 ? 1.0 : (adv_grad[i] < 0 ? -1.0 : 0.0));
            payoff[spec.per_segment_mask ? b * s[2] + n : n] += adv_grad[i] * delta;
          }
    ad::Var m;
    if (spec.per_segment_mask) {
      std::vector<ad::Var> rows;
      for (std::size_t b = 0; b < s[0]; ++b) {
        rows.push_back(soft_mask(ad::select(saliency, 0, b), k, reweighter.config().mask_temperature));
      }
      m = ad::stack(rows, 0);
    } else {
      m = soft_mask(saliency, k, reweighter.config().mask_temperature);
    }
    const ad::Var surrogate = ad::sum((m - ad::detach(m)) * tape.constant(std::move(payoff)));
    total = total + lam.task * surrogate;
  }
  out.task = total.value()[0];

  if (partition.degenerate()) {
    out.regularizers_skipped = true;
    out.warning = partition.minority_count() == 0 ? "batch has no minority pairs; gap and attention terms skipped"
                                                  : "batch has no majority pairs; gap and attention terms skipped";
  } else {
    const ad::Var gap = gradient_gap(grad_hat, partition);
    const ad::Var att1 = ad::reshape(att.sg + att.sp, {s[0], s[2]});
    const ad::Var reg_min = ad::sqrt(ad::sum(ad::square((1.0 - att1) * tape.constant(class_mask(partition, true)))) + kSqrtGuard);
    const ad::Var reg_maj = ad::sqrt(ad::sum(ad::square(att1 * tape.constant(class_mask(partition, false)))) + kSqrtGuard);
    out.raw_gap = gap.value()[0];
    out.raw_minority = reg_min.value()[0];
    out.raw_majority = reg_maj.value()[0];
    const ad::Var w_gap = lam.gap * gap;
    const ad::Var w_min = lam.minority * reg_min;
    const ad::Var w_maj = lam.majority * reg_maj;
    out.gap = w_gap.value()[0];
    out.minority = w_min.value()[0];
    out.majority = w_maj.value()[0];
    total = total + w_gap + w_min + w_maj;
  }
  out.total = total.value()[0];

  tape.backward(total);
  std::vector<Tensor> grads;
  grads.reserve(p.size());
  for (const auto& v : p) grads.push_back(tape.grad(v));
  reweighter.optimizer().step(reweighter.params(), grads);
  return out;
}

}  // namespace zistorm::mingre
