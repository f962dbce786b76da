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

#ifndef ZISTORM_MINGRE_HPP_
#define ZISTORM_MINGRE_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "zistorm/attack.hpp"
#include "zistorm/autograd.hpp"
#include "zistorm/nn.hpp"
#include "zistorm/stmodel.hpp"
#include "zistorm/tensor.hpp"
#include "zistorm/zidata.hpp"

// Minority-aware gradient reweighting: a cross-segment spatiotemporal
// encoder produces segment, temporal and spatial attention that rescales
// input gradients before victim selection and sign steps.
namespace zistorm::mingre {

struct EncoderConfig {
  std::size_t model_dim = 32;
  std::size_t num_heads = 4;
  std::size_t ffn_dim = 64;
  std::size_t mlp_hidden = 16;
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t head_dim() const { return model_dim / num_heads; }
};

struct AttentionWeights {
  Tensor att_sg;  // (B, 1, 1, 1)
  Tensor att_te;  // (1, T, 1, 1)
  Tensor att_sp;  // (1, 1, N, 1)

  // att_sg + att_sp, shaped (B, 1, N, 1).
  Tensor att1() const;
  static AttentionWeights constant(std::size_t B, std::size_t T, std::size_t N, double sg,
                                   double te, double sp);
};

struct Lambdas {
  double task = 1.0;
  double gap = 1.0;
  double minority = 0.01;
  double majority = 0.01;

  void validate() const;
};

struct ReweighterConfig {
  EncoderConfig encoder;
  Lambdas lambdas;
  double learning_rate = 1e-3;
  // Width of the soft victim mask used for the task term, relative to the
  // mean saliency.
  double mask_temperature = 0.1;
};

class Reweighter {
 public:
  Reweighter(ReweighterConfig config, std::size_t feature_dim);

  const ReweighterConfig& config() const { return config_; }
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }
  nn::Adam& optimizer() { return optimizer_; }

  // Attention across the batch axis of a (T, N, B, D_h) tensor.
  ad::Var abd_layer(const std::vector<ad::Var>& p, ad::Var x) const;
  ad::Var temporal_layer(const std::vector<ad::Var>& p, ad::Var x) const;  // (B, N, T, D_h)
  ad::Var spatial_layer(const std::vector<ad::Var>& p, ad::Var x) const;   // (B, T, N, D_h)

  // (B, T, N, D) features to (B, T, N, D_h).
  ad::Var encode(const std::vector<ad::Var>& p, ad::Var X) const;
  Tensor encode(const Tensor& X) const;

  struct AttentionVars {
    ad::Var sg;
    ad::Var te;
    ad::Var sp;
  };
  AttentionVars attention_vars(const std::vector<ad::Var>& p, ad::Var O) const;
  AttentionWeights attention_from_encoding(const Tensor& O) const;
  // Weights for a clean batch.
  AttentionWeights attention_weights(const Tensor& X) const;

 private:
  ReweighterConfig config_;
  std::size_t feature_dim_;
  nn::ParameterSet params_;
  nn::Adam optimizer_;
  nn::DenseRef input_;
  nn::AttentionBlockRef abd_;
  nn::AttentionBlockRef temporal_;
  nn::AttentionBlockRef spatial_;
  std::vector<nn::DenseRef> mlp_sg_;
  std::vector<nn::DenseRef> mlp_te_;
  std::vector<nn::DenseRef> mlp_sp_;
};

// (att_sg + att_sp) * grad * att_te with broadcasting.
Tensor reweight_gradients(const Tensor& grad, const AttentionWeights& weights);
ad::Var reweight_gradients(ad::Var grad, ad::Var att_sg, ad::Var att_te, ad::Var att_sp);

// Saliency-selected STPGD driven by reweighted gradients. The strategy in
// `spec` is ignored; selection always uses the reweighted saliency.
attack::AdversarialExample mingre_generate(const stmodel::STRegressor& model,
                                           const stmodel::LossFn& loss_fn, const Tensor& X,
                                           const Tensor& Y,
                                           const zidata::SpatioTemporalGraph& graph,
                                           const AttentionWeights& weights,
                                           const attack::AttackSpec& spec);

// |mean over minority pairs of the per-(segment, node) L2 gradient
// magnitude - the same mean over majority pairs|. Throws on an empty class.
double gradient_gap(const Tensor& grad_hat, const zidata::ClassPartition& partition);
ad::Var gradient_gap(ad::Var grad_hat, const zidata::ClassPartition& partition);

attack::AdversarialExample stage1_attack_step(const stmodel::STRegressor& model,
                                              const Reweighter& reweighter,
                                              const stmodel::LossFn& loss_fn, const Tensor& X,
                                              const Tensor& Y,
                                              const zidata::SpatioTemporalGraph& graph,
                                              const attack::AttackSpec& spec);

struct Stage2Breakdown {
  double task = 0.0;      // lambda-weighted terms
  double gap = 0.0;
  double minority = 0.0;
  double majority = 0.0;
  double total = 0.0;
  double raw_task = 0.0;  // unweighted values
  double raw_gap = 0.0;
  double raw_minority = 0.0;
  double raw_majority = 0.0;
  bool regularizers_skipped = false;
  std::string warning;
};

// One Adam step on the reweighter parameters; the target model is read only.
Stage2Breakdown stage2_reweighter_update(const stmodel::STRegressor& model,
                                         Reweighter& reweighter, const stmodel::LossFn& loss_fn,
                                         const Tensor& X, const Tensor& Y,
                                         const zidata::SpatioTemporalGraph& graph,
                                         const attack::AdversarialExample& adv,
                                         const attack::AttackSpec& spec);

}  // namespace zistorm::mingre

#endif  // ZISTORM_MINGRE_HPP_
