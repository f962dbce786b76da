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

#ifndef ZISTORM_STMODEL_HPP_
#define ZISTORM_STMODEL_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "zistorm/autograd.hpp"
#include "zistorm/nn.hpp"
#include "zistorm/tensor.hpp"
#include "zistorm/zidata.hpp"

namespace zistorm::stmodel {

// Which head supplies point predictions for ranking metrics.
enum class PredictionHead { kRegression, kNbMean };

struct RegressorConfig {
  std::size_t hidden_dim = 16;
  std::size_t num_gc_layers = 1;
  std::size_t recurrent_dim = 32;
  std::size_t horizon = 2;
  std::size_t history = 6;
  double dropout = 0.0;
  std::uint64_t seed = 0;
  PredictionHead prediction_head = PredictionHead::kRegression;

  void validate() const;
};

// Temporally pooled node representation before the output layer.
struct HiddenEmbedding {
  Tensor H;  // (B, N, hidden_dim)
};

struct NBParams {
  Tensor mu;     // (B, horizon, N)
  Tensor alpha;  // (B, horizon, N)
};

// Everything one recorded forward pass exposes to a loss.
struct ModelOutputs {
  ad::Var embedding;   // (B, N, hidden_dim)
  ad::Var prediction;  // (B, horizon, N), regression head
  ad::Var mu;          // (B, horizon, N)
  ad::Var alpha;       // (B, horizon, N)
};

// Scalar objective over model outputs and labels Y (B, horizon, N).
using LossFn = std::function<ad::Var(ad::Tape&, const ModelOutputs&, const Tensor& Y)>;

// Link floor for NB parameters.
inline constexpr double kNbFloor = 1e-6;

// Mean over views of D^-1/2 (A + I) D^-1/2.
Tensor normalized_adjacency(const zidata::SpatioTemporalGraph& graph);

// Graph convolution per time step, a GRU over time, temporal mean pooling
// into an embedding, then a linear regression head and a softplus NB
// decoder reading the same embedding.
class STRegressor {
 public:
  STRegressor(RegressorConfig config, std::size_t num_nodes, std::size_t feature_dim);

  const RegressorConfig& config() const { return config_; }
  std::size_t num_nodes() const { return num_nodes_; }
  std::size_t feature_dim() const { return feature_dim_; }
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }
  void set_prediction_head(PredictionHead head) { config_.prediction_head = head; }

  // Records a forward pass. `dropout_rng` enables training-mode dropout.
  ModelOutputs build(ad::Tape& tape, ad::Var X, const std::vector<ad::Var>& p,
                     const Tensor& adjacency, nn::Rng* dropout_rng = nullptr) const;
  ad::Var build_embedding(ad::Var X, const std::vector<ad::Var>& p,
                          const Tensor& adjacency, nn::Rng* dropout_rng = nullptr) const;
  ad::Var build_output_layer(const std::vector<ad::Var>& p, ad::Var H) const;
  void build_nb_decoder(const std::vector<ad::Var>& p, ad::Var H, ad::Var& mu,
                        ad::Var& alpha) const;

  // Evaluation-mode entry points.
  Tensor forward(const Tensor& X, const zidata::SpatioTemporalGraph& graph) const;
  HiddenEmbedding embed(const Tensor& X, const zidata::SpatioTemporalGraph& graph) const;
  Tensor output_layer(const Tensor& H) const;
  NBParams decode_nb(const Tensor& H) const;
  // Regression output or NB mean, per config().prediction_head.
  Tensor predict(const Tensor& X, const zidata::SpatioTemporalGraph& graph) const;

  double loss(const LossFn& loss_fn, const Tensor& X, const Tensor& Y,
              const zidata::SpatioTemporalGraph& graph) const;

  // Reverse-mode gradient of the scalar loss with respect to X; parameters
  // are held constant. Optionally reports the loss value.
  Tensor input_gradient(const LossFn& loss_fn, const Tensor& X, const Tensor& Y,
                        const zidata::SpatioTemporalGraph& graph,
                        double* loss_value = nullptr) const;

  struct LossAndGrads {
    double loss = 0.0;
    std::vector<Tensor> grads;
  };
  LossAndGrads parameter_gradients(const LossFn& loss_fn, const Tensor& X,
                                   const Tensor& Y,
                                   const zidata::SpatioTemporalGraph& graph,
                                   nn::Rng* dropout_rng = nullptr) const;

  void check_input(const Tensor& X, const zidata::SpatioTemporalGraph& graph) const;

 private:
  RegressorConfig config_;
  std::size_t num_nodes_;
  std::size_t feature_dim_;
  nn::ParameterSet params_;

  std::vector<nn::DenseRef> gc_;
  nn::DenseRef gru_xr_, gru_xz_, gru_xn_, gru_hr_, gru_hz_, gru_hn_;
  nn::DenseRef embed_;
  nn::DenseRef head_;
  nn::DenseRef mu_head_;
  nn::DenseRef alpha_head_;
  std::size_t node_bias_ = 0;
  std::size_t node_mu_bias_ = 0;
};

}  // namespace zistorm::stmodel

#endif  // ZISTORM_STMODEL_HPP_
