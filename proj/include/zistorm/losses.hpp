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

#ifndef ZISTORM_LOSSES_HPP_
#define ZISTORM_LOSSES_HPP_

#include <cstdint>
#include <vector>

#include "zistorm/autograd.hpp"
#include "zistorm/stmodel.hpp"
#include "zistorm/tensor.hpp"
#include "zistorm/zidata.hpp"

namespace zistorm::losses {

// Label-to-weight mapping for the weighted squared error.
enum class WeightRule {
  kOnePlusLabel,  // 1 for zero labels, 1 + y otherwise
  kUniform,
};

// How (mu, alpha) map onto the (n, p) form of the NB pmf.
enum class NbMapping {
  kNb2,      // n = 1/alpha, p = 1/(1 + mu alpha); mean mu
  kLiteral,  // n = mu alpha / (1 - alpha), p = 1/(1 + mu alpha); needs alpha < 1
};

struct AdvLossConfig {
  double beta1 = 1.0;
  double beta2 = 0.1;
  double gamma = 1.0;
  double tau = 0.1;
  NbMapping mapping = NbMapping::kNb2;

  void validate() const;
};

Tensor loss_weights(const Tensor& Y, WeightRule rule = WeightRule::kOnePlusLabel);

// Mean of w (y - yhat)^2 over every element. No square root is taken.
double wrmse(const Tensor& Yhat, const Tensor& Y, const Tensor& weights);
ad::Var wrmse(ad::Var Yhat, const Tensor& Y, const Tensor& weights);

double nb_log_pmf(double x, double mu, double alpha, NbMapping mapping = NbMapping::kNb2);
double nb_pmf(double x, double mu, double alpha, NbMapping mapping = NbMapping::kNb2);

// Mean negative log-likelihood over all (B, horizon, N) entries.
double nb_nll(const stmodel::NBParams& params, const Tensor& Y,
              NbMapping mapping = NbMapping::kNb2);
ad::Var nb_nll(ad::Var mu, ad::Var alpha, const Tensor& Y,
               NbMapping mapping = NbMapping::kNb2);

double uncertainty_weight(double alpha_hat, double gamma);
Tensor uncertainty_weight(const Tensor& alpha_hat, double gamma);
ad::Var uncertainty_weight(ad::Var alpha_hat, double gamma);

// Supervised contrastive loss over the rows of H (M, D). Rows are L2
// normalized here. labels[i] != 0 marks the minority class.
double supervised_contrastive(const Tensor& H, const std::vector<std::uint8_t>& labels,
                              double tau);
ad::Var supervised_contrastive(ad::Var H, const std::vector<std::uint8_t>& labels,
                               double tau);

struct AdvLossParts {
  double nb = 0.0;
  double u_bar = 0.0;
  double contrastive = 0.0;
  double total = 0.0;
  bool contrastive_skipped = false;
};

// beta1 * nb_nll + beta2 * mean(u) * contrastive(H). H is (B, N, D_h); anchors
// are its (segment, node) rows. The contrastive term is dropped when either
// class is empty. mean(u) enters as a constant multiplier.
ad::Var adv_loss(ad::Var mu, ad::Var alpha, const Tensor& Y, ad::Var H,
                 const zidata::ClassPartition& partition, const AdvLossConfig& cfg,
                 AdvLossParts* parts = nullptr);
double adv_loss(const stmodel::NBParams& params, const Tensor& Y, const Tensor& H,
                const zidata::ClassPartition& partition, const AdvLossConfig& cfg,
                AdvLossParts* parts = nullptr);

enum class LossKind { kWrmse, kNb, kAdv };

stmodel::LossFn make_loss(LossKind kind, const AdvLossConfig& cfg = {},
                          WeightRule rule = WeightRule::kOnePlusLabel);

}  // namespace zistorm::losses

#endif  // ZISTORM_LOSSES_HPP_
