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

#include "zistorm/stmodel.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace zistorm::stmodel {

void RegressorConfig::validate() const {
  if (hidden_dim < 4) throw std::invalid_argument("hidden_dim must be >= 4");
  if (num_gc_layers < 1) throw std::invalid_argument("num_gc_layers must be >= 1");
  if (recurrent_dim < 1) throw std::invalid_argument("recurrent_dim must be >= 1");
  if (horizon < 1 || history < 1) throw std::invalid_argument("horizon and history must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must be in [0, 1)");
}

Tensor normalized_adjacency(const zidata::SpatioTemporalGraph& graph) {
  graph.validate();
  const std::size_t n = graph.num_nodes;
  Tensor out({n, n});
  for (const Tensor& a : graph.adjacency_views) {
    std::vector<double> inv_sqrt_deg(n);
    for (std::size_t i = 0; i < n; ++i) {
      double deg = 1.0;
      for (std::size_t j = 0; j < n; ++j) deg += a[i * n + j];
      inv_sqrt_deg[i] = 1.0 / std::sqrt(deg);
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double w = a[i * n + j] + (i == j ? 1.0 : 0.0);
        out[i * n + j] += w * inv_sqrt_deg[i] * inv_sqrt_deg[j];
      }
    }
  }
  const double inv_views = 1.0 / static_cast<double>(graph.num_views());
  for (auto& v : out.storage()) v *= inv_views;
  return out;
}

STRegressor::STRegressor(RegressorConfig config, std::size_t num_nodes,
                         std::size_t feature_dim)
    : config_(config), num_nodes_(num_nodes), feature_dim_(feature_dim) {
  config_.validate();
  if (num_nodes < 1 || feature_dim < 1) {
    throw std::invalid_argument("model needs at least one node and one feature");
  }
  nn::Rng rng(config_.seed);
  const std::size_t h = config_.hidden_dim;
  const std::size_t r = config_.recurrent_dim;
  std::size_t in = feature_dim;
  for (std::size_t l = 0; l < config_.num_gc_layers; ++l) {
    gc_.push_back(nn::add_dense(params_, "gc" + std::to_string(l), in, h, rng));
    in = h;
  }
  gru_xr_ = nn::add_dense(params_, "gru.xr", h, r, rng);
  gru_xz_ = nn::add_dense(params_, "gru.xz", h, r, rng);
  gru_xn_ = nn::add_dense(params_, "gru.xn", h, r, rng);
  gru_hr_ = nn::add_dense(params_, "gru.hr", r, r, rng);
  gru_hz_ = nn::add_dense(params_, "gru.hz", r, r, rng);
  gru_hn_ = nn::add_dense(params_, "gru.hn", r, r, rng);
  embed_ = nn::add_dense(params_, "embed", r, h, rng);
  head_ = nn::add_dense(params_, "head", h, config_.horizon, rng);
  mu_head_ = nn::add_dense(params_, "nb.mu", h, config_.horizon, rng);
  alpha_head_ = nn::add_dense(params_, "nb.alpha", h, config_.horizon, rng);
  // Start the NB mean near the sparse-count regime.
  for (auto& v : params_[mu_head_.bias].storage()) v = -1.0;
  node_bias_ = params_.add("head.node_bias", Tensor({num_nodes}, 0.0));
  node_mu_bias_ = params_.add("nb.mu.node_bias", Tensor({num_nodes}, 0.0));
}

void STRegressor::check_input(const Tensor& X, const zidata::SpatioTemporalGraph& graph) const {
  if (X.rank() != 4) {
    throw std::invalid_argument("X must be (B, T, N, D), got " + shape_str(X.shape()));
  }
  if (graph.num_nodes != X.dim(2)) {
    throw std::invalid_argument("X has " + std::to_string(X.dim(2)) +
                                " nodes but the graph has " + std::to_string(graph.num_nodes));
  }
  if (X.dim(2) != num_nodes_ || X.dim(3) != feature_dim_) {
    throw std::invalid_argument("X shape " + shape_str(X.shape()) +
                                " does not match the model's node/feature dims");
  }
  if (X.dim(1) != config_.history) {
    throw std::invalid_argument("X history " + std::to_string(X.dim(1)) +
                                " does not match configured history " +
                                std::to_string(config_.history));
  }
}

ad::Var STRegressor::build_embedding(ad::Var X, const std::vector<ad::Var>& p,
                                     const Tensor& adjacency, nn::Rng* dropout_rng) const {
  ad::Tape& tape = *X.tape();
  ad::Var adj = tape.constant(adjacency);
  ad::Var z = X;
  for (const auto& layer : gc_) {
    z = ad::relu(nn::apply_dense(p, layer, ad::matmul(adj, z)));
    if (dropout_rng && config_.dropout > 0.0) {
      std::bernoulli_distribution keep(1.0 - config_.dropout);
      Tensor mask(z.shape());
      const double scale = 1.0 / (1.0 - config_.dropout);
      for (auto& m : mask.storage()) m = keep(*dropout_rng) ? scale : 0.0;
      z = z * tape.constant(std::move(mask));
    }
  }
  const Shape& zs = z.shape();
  const std::size_t b = zs[0];
  const std::size_t t_len = zs[1];
  const std::size_t n = zs[2];
  ad::Var h = tape.constant(Tensor({b, n, config_.recurrent_dim}));
  ad::Var pooled;
  for (std::size_t t = 0; t < t_len; ++t) {
    ad::Var x = ad::select(z, 1, t);
    ad::Var reset = ad::sigmoid(nn::apply_dense(p, gru_xr_, x) + nn::apply_dense(p, gru_hr_, h));
    ad::Var update = ad::sigmoid(nn::apply_dense(p, gru_xz_, x) + nn::apply_dense(p, gru_hz_, h));
    ad::Var cand = ad::tanh(nn::apply_dense(p, gru_xn_, x) + reset * nn::apply_dense(p, gru_hn_, h));
    h = (1.0 - update) * cand + update * h;
    pooled = t == 0 ? h : pooled + h;
  }
  pooled = pooled * (1.0 / static_cast<double>(t_len));
  return ad::tanh(nn::apply_dense(p, embed_, pooled));
}

ad::Var STRegressor::build_output_layer(const std::vector<ad::Var>& p, ad::Var H) const {
  ad::Var out = ad::permute(nn::apply_dense(p, head_, H), {0, 2, 1});
  return out + p[node_bias_];
}

void STRegressor::build_nb_decoder(const std::vector<ad::Var>& p, ad::Var H, ad::Var& mu,
                                   ad::Var& alpha) const {
  ad::Var mu_logit = ad::permute(nn::apply_dense(p, mu_head_, H), {0, 2, 1}) + p[node_mu_bias_];
  mu = ad::softplus(mu_logit) + kNbFloor;
  alpha = ad::softplus(ad::permute(nn::apply_dense(p, alpha_head_, H), {0, 2, 1})) + kNbFloor;
}

ModelOutputs STRegressor::build(ad::Tape&, ad::Var X, const std::vector<ad::Var>& p,
                                const Tensor& adjacency, nn::Rng* dropout_rng) const {
  ModelOutputs out;
  out.embedding = build_embedding(X, p, adjacency, dropout_rng);
  out.prediction = build_output_layer(p, out.embedding);
  build_nb_decoder(p, out.embedding, out.mu, out.alpha);
  return out;
}

Tensor STRegressor::forward(const Tensor& X, const zidata::SpatioTemporalGraph& graph) const {
  return output_layer(embed(X, graph).H);
}

HiddenEmbedding STRegressor::embed(const Tensor& X, const zidata::SpatioTemporalGraph& graph) const {
  check_input(X, graph);
  ad::Tape tape;
  const auto p = params_.bind(tape, false);
  return {build_embedding(tape.constant(X), p, normalized_adjacency(graph)).value()};
}

Tensor STRegressor::output_layer(const Tensor& H) const {
  ad::Tape tape;
  const auto p = params_.bind(tape, false);
  return build_output_layer(p, tape.constant(H)).value();
}

NBParams STRegressor::decode_nb(const Tensor& H) const {
  ad::Tape tape;
  const auto p = params_.bind(tape, false);
  ad::Var mu;
  ad::Var alpha;
  build_nb_decoder(p, tape.constant(H), mu, alpha);
  return {mu.value(), alpha.value()};
}

Tensor STRegressor::predict(const Tensor& X, const zidata::SpatioTemporalGraph& graph) const {
  const Tensor H = embed(X, graph).H;
  if (config_.prediction_head == PredictionHead::kNbMean) return decode_nb(H).mu;
  return output_layer(H);
}

double STRegressor::loss(const LossFn& loss_fn, const Tensor& X, const Tensor& Y,
                         const zidata::SpatioTemporalGraph& graph) const {
  check_input(X, graph);
  ad::Tape tape;
  const auto p = params_.bind(tape, false);
  const ModelOutputs out = build(tape, tape.constant(X), p, normalized_adjacency(graph));
  ad::Var l = loss_fn(tape, out, Y);
  if (l.numel() != 1) throw std::invalid_argument("non-scalar loss of shape " + shape_str(l.shape()));
  return l.value()[0];
}

Tensor STRegressor::input_gradient(const LossFn& loss_fn, const Tensor& X, const Tensor& Y,
                                   const zidata::SpatioTemporalGraph& graph,
                                   double* loss_value) const {
  check_input(X, graph);
  ad::Tape tape;
  const auto p = params_.bind(tape, false);
  ad::Var x = tape.variable(X);
  const ModelOutputs out = build(tape, x, p, normalized_adjacency(graph));
  ad::Var l = loss_fn(tape, out, Y);
  if (l.numel() != 1) throw std::invalid_argument("non-scalar loss of shape " + shape_str(l.shape()));
  if (loss_value) *loss_value = l.value()[0];
  tape.backward(l);
  return tape.grad(x);
}

STRegressor::LossAndGrads STRegressor::parameter_gradients(
    const LossFn& loss_fn, const Tensor& X, const Tensor& Y,
    const zidata::SpatioTemporalGraph& graph, nn::Rng* dropout_rng) const {
  check_input(X, graph);
  ad::Tape tape;
  const auto p = params_.bind(tape, true);
  const ModelOutputs out = build(tape, tape.constant(X), p, normalized_adjacency(graph), dropout_rng);
  ad::Var l = loss_fn(tape, out, Y);
  if (l.numel() != 1) throw std::invalid_argument("non-scalar loss of shape " + shape_str(l.shape()));
  tape.backward(l);
  LossAndGrads result;
  result.loss = l.value()[0];
  result.grads.reserve(p.size());
  for (const auto& v : p) result.grads.push_back(tape.grad(v));
  return result;
}

}  // namespace zistorm::stmodel
