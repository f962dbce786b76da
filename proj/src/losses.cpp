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

#include "zistorm/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace zistorm::losses {
namespace {

void check_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (a != b) {
    throw std::invalid_argument(std::string(what) + ": shape " + shape_str(a) +
                                " does not match " + shape_str(b));
  }
}

void check_weights(const Tensor& w) {
  for (double v : w.storage()) {
    if (!(v >= 0.0)) throw std::invalid_argument("loss weights must be non-negative");
  }
}

void check_nb_params(double mu, double alpha, NbMapping mapping) {
  if (std::isnan(mu) || std::isnan(alpha)) throw std::invalid_argument("NaN in NB parameters");
  if (!(mu > 0.0) || !(alpha > 0.0)) {
    throw std::invalid_argument("NB parameters must be positive");
  }
  if (mapping == NbMapping::kLiteral && !(alpha < 1.0)) {
    throw std::invalid_argument("literal NB mapping requires alpha < 1");
  }
}

void check_counts(const Tensor& Y) {
  for (double y : Y.storage()) {
    if (!(y >= 0.0) || y != std::floor(y)) {
      throw std::invalid_argument("NB targets must be non-negative integers");
    }
  }
}

struct ContrastiveForward {
  double loss = 0.0;
  std::vector<std::size_t> anchors;
  std::vector<std::size_t> positives;  // |P(i)| per row
  Tensor softmax;                       // (M, M), zero diagonal
};

// Loss and softmax rows over already normalized rows of Z.
ContrastiveForward contrastive_forward(const Tensor& Z, const std::vector<std::uint8_t>& labels,
                                       double tau) {
  const std::size_t m = Z.dim(0);
  const std::size_t d = Z.dim(1);
  ContrastiveForward f;
  f.positives.assign(m, 0);
  f.softmax = Tensor({m, m});
  std::vector<double> sim(m);
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (j != i && (labels[j] != 0) == (labels[i] != 0)) ++f.positives[i];
    }
    if (f.positives[i] == 0) continue;
    f.anchors.push_back(i);
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += Z[i * d + c] * Z[j * d + c];
      sim[j] = s / tau;
      if (j != i) top = std::max(top, sim[j]);
    }
    double denom = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      if (j != i) denom += std::exp(sim[j] - top);
    }
    const double lse = top + std::log(denom);
    double pos = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      if (j == i) continue;
      f.softmax[i * m + j] = std::exp(sim[j] - lse);
      if ((labels[j] != 0) == (labels[i] != 0)) pos += sim[j] - lse;
    }
    total += -pos / static_cast<double>(f.positives[i]);
  }
  if (f.anchors.empty()) {
    throw std::invalid_argument("supervised contrastive loss: no anchor has a positive");
  }
  f.loss = total / static_cast<double>(f.anchors.size());
  return f;
}

void check_contrastive_inputs(const Tensor& H, const std::vector<std::uint8_t>& labels,
                              double tau) {
  if (H.rank() != 2) throw std::invalid_argument("contrastive embeddings must be (M, D)");
  if (labels.size() != H.dim(0)) {
    throw std::invalid_argument("contrastive labels do not match the anchor count");
  }
  if (!(tau > 0.0)) throw std::invalid_argument("temperature must be positive");
  const std::size_t d = H.dim(1);
  for (std::size_t i = 0; i < H.dim(0); ++i) {
    double n2 = 0.0;
    for (std::size_t c = 0; c < d; ++c) n2 += H[i * d + c] * H[i * d + c];
    if (!(n2 > 0.0)) throw std::invalid_argument("zero-norm embedding at anchor " + std::to_string(i));
  }
}

std::vector<std::uint8_t> anchor_labels(const zidata::ClassPartition& partition) {
  return partition.mask();
}

}  // namespace

void AdvLossConfig::validate() const {
  if (!(beta1 >= 0.0) || !(beta2 >= 0.0)) throw std::invalid_argument("beta1, beta2 must be >= 0");
  if (!(beta1 + beta2 > 0.0)) throw std::invalid_argument("beta1 + beta2 must be positive");
  if (!(gamma > 0.0)) throw std::invalid_argument("gamma must be positive");
  if (!(tau > 0.0)) throw std::invalid_argument("tau must be positive");
}

Tensor loss_weights(const Tensor& Y, WeightRule rule) {
  Tensor w(Y.shape(), 1.0);
  if (rule == WeightRule::kOnePlusLabel) {
    for (std::size_t i = 0; i < Y.numel(); ++i) {
      if (Y[i] != 0.0) w[i] = 1.0 + Y[i];
    }
  }
  return w;
}

double wrmse(const Tensor& Yhat, const Tensor& Y, const Tensor& weights) {
  check_same_shape(Yhat.shape(), Y.shape(), "wrmse");
  check_same_shape(weights.shape(), Y.shape(), "wrmse weights");
  check_weights(weights);
  if (Y.numel() == 0) throw std::invalid_argument("wrmse of an empty tensor");
  double acc = 0.0;
  for (std::size_t i = 0; i < Y.numel(); ++i) {
    const double r = Y[i] - Yhat[i];
    acc += weights[i] * r * r;
  }
  return acc / static_cast<double>(Y.numel());
}

ad::Var wrmse(ad::Var Yhat, const Tensor& Y, const Tensor& weights) {
  check_same_shape(Yhat.shape(), Y.shape(), "wrmse");
  check_same_shape(weights.shape(), Y.shape(), "wrmse weights");
  check_weights(weights);
  ad::Tape& tape = *Yhat.tape();
  return ad::mean(tape.constant(weights) * ad::square(tape.constant(Y) - Yhat));
}

double nb_log_pmf(double x, double mu, double alpha, NbMapping mapping) {
  check_nb_params(mu, alpha, mapping);
  if (!(x >= 0.0) || x != std::floor(x)) {
    throw std::invalid_argument("NB support is the non-negative integers");
  }
  const double ma = mu * alpha;
  const double n = mapping == NbMapping::kNb2 ? 1.0 / alpha : ma / (1.0 - alpha);
  const double log_p = -std::log1p(ma);
  const double log_q = std::log(ma) - std::log1p(ma);
  return std::lgamma(x + n) - std::lgamma(n) - std::lgamma(x + 1.0) + n * log_p +
         (x > 0.0 ? x * log_q : 0.0);
}

double nb_pmf(double x, double mu, double alpha, NbMapping mapping) {
  return std::exp(nb_log_pmf(x, mu, alpha, mapping));
}

double nb_nll(const stmodel::NBParams& params, const Tensor& Y, NbMapping mapping) {
  if (Y.numel() == 0) throw std::invalid_argument("nb_nll of an empty tensor");
  ad::Tape tape;
  return nb_nll(tape.constant(params.mu), tape.constant(params.alpha), Y, mapping).value()[0];
}

ad::Var nb_nll(ad::Var mu, ad::Var alpha, const Tensor& Y, NbMapping mapping) {
  check_same_shape(mu.shape(), Y.shape(), "nb_nll mu");
  check_same_shape(alpha.shape(), Y.shape(), "nb_nll alpha");
  for (std::size_t i = 0; i < Y.numel(); ++i) {
    check_nb_params(mu.value()[i], alpha.value()[i], mapping);
  }
  check_counts(Y);
  ad::Tape& tape = *mu.tape();
  const ad::Var y = tape.constant(Y);
  Tensor lg_y1(Y.shape());
  for (std::size_t i = 0; i < Y.numel(); ++i) lg_y1[i] = std::lgamma(Y[i] + 1.0);
  const ad::Var ma = mu * alpha;
  const ad::Var n = mapping == NbMapping::kNb2 ? 1.0 / alpha : ma / (1.0 - alpha);
  const ad::Var log1p_ma = ad::log(1.0 + ma);
  const ad::Var log_q = ad::log(ma) - log1p_ma;
  const ad::Var ll = ad::lgamma(y + n) - ad::lgamma(n) - tape.constant(std::move(lg_y1)) -
                     n * log1p_ma + y * log_q;
  return -ad::mean(ll);
}

double uncertainty_weight(double alpha_hat, double gamma) {
  if (!(gamma > 0.0)) throw std::invalid_argument("gamma must be positive");
  if (!(alpha_hat >= 0.0)) throw std::invalid_argument("alpha_hat must be non-negative");
  return 2.0 / (1.0 + std::exp(-alpha_hat / gamma)) - 1.0;
}

Tensor uncertainty_weight(const Tensor& alpha_hat, double gamma) {
  Tensor u(alpha_hat.shape());
  for (std::size_t i = 0; i < u.numel(); ++i) u[i] = uncertainty_weight(alpha_hat[i], gamma);
  return u;
}

ad::Var uncertainty_weight(ad::Var alpha_hat, double gamma) {
  if (!(gamma > 0.0)) throw std::invalid_argument("gamma must be positive");
  return 2.0 * ad::sigmoid(alpha_hat * (1.0 / gamma)) - 1.0;
}

double supervised_contrastive(const Tensor& H, const std::vector<std::uint8_t>& labels,
                              double tau) {
  check_contrastive_inputs(H, labels, tau);
  const std::size_t d = H.dim(1);
  Tensor Z = H;
  for (std::size_t i = 0; i < H.dim(0); ++i) {
    double n2 = 0.0;
    for (std::size_t c = 0; c < d; ++c) n2 += H[i * d + c] * H[i * d + c];
    const double inv = 1.0 / std::sqrt(n2);
    for (std::size_t c = 0; c < d; ++c) Z[i * d + c] *= inv;
  }
  return contrastive_forward(Z, labels, tau).loss;
}

ad::Var supervised_contrastive(ad::Var H, const std::vector<std::uint8_t>& labels, double tau) {
  check_contrastive_inputs(H.value(), labels, tau);
  const ad::Var Z = H / ad::sqrt(ad::sum(ad::square(H), {1}, true));
  ContrastiveForward f = contrastive_forward(Z.value(), labels, tau);
  const double loss = f.loss;
  const ad::Var inputs[] = {Z};
  return Z.tape()->record(
      Tensor::scalar(loss), inputs,
      [Z, labels, tau, f = std::move(f)](ad::Tape& t, const Tensor& g, const Tensor&) {
        const Tensor& z = t.value(Z);
        const std::size_t m = z.dim(0);
        const std::size_t d = z.dim(1);
        // dL/dS_ij for S = Z Z^T / tau; the full gradient is (G + G^T) Z / tau.
        Tensor G({m, m});
        const double inv_anchors = 1.0 / static_cast<double>(f.anchors.size());
        for (std::size_t i : f.anchors) {
          const double inv_pos = 1.0 / static_cast<double>(f.positives[i]);
          for (std::size_t j = 0; j < m; ++j) {
            if (j == i) continue;
            double gij = f.softmax[i * m + j];
            if ((labels[j] != 0) == (labels[i] != 0)) gij -= inv_pos;
            G[i * m + j] = inv_anchors * gij;
          }
        }
        Tensor& dz = t.grad_buffer(Z);
        const double scale = g[0] / tau;
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < m; ++j) {
            const double w = (G[i * m + j] + G[j * m + i]) * scale;
            if (w == 0.0) continue;
            for (std::size_t c = 0; c < d; ++c) dz[i * d + c] += w * z[j * d + c];
          }
        }
      });
}

ad::Var adv_loss(ad::Var mu, ad::Var alpha, const Tensor& Y, ad::Var H,
                 const zidata::ClassPartition& partition, const AdvLossConfig& cfg,
                 AdvLossParts* parts) {
  cfg.validate();
  const ad::Var nb = nb_nll(mu, alpha, Y, cfg.mapping);
  AdvLossParts local;
  local.nb = nb.value()[0];
  ad::Var total = cfg.beta1 * nb;
  const bool skip = cfg.beta2 == 0.0 || partition.degenerate();
  local.contrastive_skipped = skip;
  if (!skip) {
    const Shape& hs = H.shape();
    if (hs.size() != 3 || hs[0] != partition.segments() || hs[1] != partition.nodes()) {
      throw std::invalid_argument("embedding shape " + shape_str(H.shape()) +
                                  " does not match the class partition");
    }
    const Tensor u = uncertainty_weight(alpha.value(), cfg.gamma);
    for (double v : u.storage()) local.u_bar += v;
    local.u_bar /= static_cast<double>(u.numel());
    const ad::Var flat = ad::reshape(H, {hs[0] * hs[1], hs[2]});
    const ad::Var scl = supervised_contrastive(flat, anchor_labels(partition), cfg.tau);
    local.contrastive = scl.value()[0];
    total = total + (cfg.beta2 * local.u_bar) * scl;
  }
  local.total = total.value()[0];
  if (parts) *parts = local;
  return total;
}

double adv_loss(const stmodel::NBParams& params, const Tensor& Y, const Tensor& H,
                const zidata::ClassPartition& partition, const AdvLossConfig& cfg,
                AdvLossParts* parts) {
  ad::Tape tape;
  return adv_loss(tape.constant(params.mu), tape.constant(params.alpha), Y, tape.constant(H),
                  partition, cfg, parts)
      .value()[0];
}

stmodel::LossFn make_loss(LossKind kind, const AdvLossConfig& cfg, WeightRule rule) {
  cfg.validate();
  switch (kind) {
    case LossKind::kWrmse:
      return [rule](ad::Tape&, const stmodel::ModelOutputs& out, const Tensor& Y) {
        return wrmse(out.prediction, Y, loss_weights(Y, rule));
      };
    case LossKind::kNb:
      return [cfg](ad::Tape&, const stmodel::ModelOutputs& out, const Tensor& Y) {
        return nb_nll(out.mu, out.alpha, Y, cfg.mapping);
      };
    case LossKind::kAdv:
      return [cfg](ad::Tape&, const stmodel::ModelOutputs& out, const Tensor& Y) {
        return adv_loss(out.mu, out.alpha, Y, out.embedding, zidata::class_partition(Y), cfg);
      };
  }
  throw std::invalid_argument("unknown loss kind");
}

}  // namespace zistorm::losses
