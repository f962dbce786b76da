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

// Acceptance suite: one PASS/FAIL line per criterion. Each criterion must
// hold and finish inside its time budget. Pass criterion numbers as
// arguments to run a subset.

#include <algorithm>
#include <bit>
#include <cstdarg>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "../metric_oracles.hpp"
#include "zistorm/attack.hpp"
#include "zistorm/losses.hpp"
#include "zistorm/metrics.hpp"
#include "zistorm/mingre.hpp"
#include "zistorm/stmodel.hpp"
#include "zistorm/trainer.hpp"
#include "zistorm/zidata.hpp"

using namespace zistorm;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

bool same_bits(double a, double b) {
  return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b);
}

Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(shape);
  for (auto& v : t.storage()) v = u(rng);
  return t;
}

stmodel::RegressorConfig desk_model(std::uint64_t seed) {
  stmodel::RegressorConfig c;
  c.history = 6;
  c.horizon = 2;
  c.seed = seed;
  return c;
}

// Relative error with an absolute floor, as used by all gradient checks.
double rel_err(double analytic, double numeric, double floor) {
  const double diff = std::abs(analytic - numeric);
  return diff / std::max(floor, std::max(std::abs(analytic), std::abs(numeric)));
}

// ---------------------------------------------------------------------------

Verdict disparity_arithmetic() {
  struct Row {
    double maj, min;
    int decimals;
    double expected;
  };
  // Clean Rec and MAP pairs of the naturally trained WRMSE rows and the
  // disparities reported for them.
  const Row rows[] = {{88.182, 33.956, 2, 54.23},
                      {0.7847, 0.1869, 4, 0.5978},
                      {94.132, 19.261, 2, 74.87},
                      {0.8928, 0.0747, 4, 0.8181}};
  std::string detail;
  bool ok = true;
  for (const auto& r : rows) {
    const double d = metrics::round_to(metrics::disparity(r.maj, r.min), r.decimals);
    ok = ok && d == r.expected;
    detail += fmt("%s%.*f", detail.empty() ? "" : " ", r.decimals, d);
  }
  return {ok, "disparities " + detail};
}

Verdict budget_fuzzing() {
  std::mt19937_64 rng(20260501);
  std::uniform_int_distribution<int> nodes_d(4, 12), t_d(1, 5), d_d(1, 3), b_d(1, 4), h_d(1, 2),
      iters_d(1, 5), strat_d(0, 4);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::size_t runs = 0, ball = 0, untouched = 0, count = 0;
  const auto loss = losses::make_loss(losses::LossKind::kWrmse);
  for (int m = 0; m < 100; ++m) {
    const std::size_t N = nodes_d(rng), T = t_d(rng), D = d_d(rng), B = b_d(rng), H = h_d(rng);
    stmodel::RegressorConfig cfg;
    cfg.history = T;
    cfg.horizon = H;
    cfg.hidden_dim = 4;
    cfg.recurrent_dim = 6;
    cfg.seed = rng();
    const stmodel::STRegressor model(cfg, N, D);
    const auto data = zidata::generate_synthetic_zid(N, 64, D, 0.7, rng());
    const auto batch = zidata::window(data, T, H, 1, B).front();
    for (int a = 0; a < 10; ++a, ++runs) {
      attack::AttackBudget budget;
      budget.epsilon = u01(rng) < 0.05 ? 0.0 : u01(rng);
      budget.step_alpha = budget.epsilon * u01(rng);
      budget.eta = std::max(1e-3, u01(rng));
      budget.num_iters = iters_d(rng);
      attack::AttackSpec spec;
      spec.budget = budget;
      spec.seed = rng();
      spec.per_segment_mask = u01(rng) < 0.3;
      const int s = strat_d(rng);
      attack::AdversarialExample ae;
      if (s == 4) {
        auto w = mingre::AttentionWeights::constant(batch.batch_size(), T, N, 0, 0, 0);
        for (auto* t : {&w.att_sg, &w.att_te, &w.att_sp}) {
          for (auto& v : t->storage()) v = 2.0 * u01(rng);
        }
        ae = mingre::mingre_generate(model, loss, batch.X, batch.Y, data.graph, w, spec);
      } else {
        spec.strategy = static_cast<attack::Strategy>(s);
        spec.reselect_each_iter = u01(rng) < 0.2;
        ae = attack::generate(model, loss, batch.X, batch.Y, data.graph, spec);
      }
      const Tensor dense = ae.mask.dense();
      bool in_ball = true, frozen = true;
      for (std::size_t i = 0; i < batch.X.numel(); ++i) {
        if (std::abs(ae.X_adv[i] - batch.X[i]) > budget.epsilon + 1e-7) in_ball = false;
        if (dense[i] == 0.0 && !same_bits(ae.X_adv[i], batch.X[i])) frozen = false;
      }
      const auto limit = static_cast<std::size_t>(std::ceil(budget.eta * static_cast<double>(N)));
      bool counted = true;
      for (std::size_t b = 0; b < batch.batch_size(); ++b) {
        if (ae.mask.nodes(b).size() > limit) counted = false;
      }
      ball += !in_ball;
      untouched += !frozen;
      count += !counted;
    }
  }
  return {ball + untouched + count == 0,
          fmt("%zu runs: %zu ball, %zu untouched-coordinate, %zu victim-count violations", runs, ball,
              untouched, count)};
}

Verdict gradient_oracles() {
  std::mt19937_64 rng(33);
  const auto data = zidata::generate_synthetic_zid(12, 64, 2, 0.8, 5);
  stmodel::RegressorConfig cfg = desk_model(4);
  const stmodel::STRegressor model(cfg, 12, 2);
  const auto batch = zidata::window(data, 6, 2, 3, 3).front();
  std::uniform_int_distribution<std::size_t> pick_x(0, batch.X.numel() - 1);

  // The adversarial loss holds mean(u) constant, so its finite differences
  // run on the same objective with mean(u) frozen at the clean input.
  const losses::AdvLossConfig adv_cfg;
  const auto part = zidata::class_partition(batch);
  const Tensor clean_alpha = model.decode_nb(model.embed(batch.X, data.graph).H).alpha;
  const Tensor u = losses::uncertainty_weight(clean_alpha, adv_cfg.gamma);
  const double u_bar = std::accumulate(u.storage().begin(), u.storage().end(), 0.0) /
                       static_cast<double>(u.numel());
  const stmodel::LossFn frozen_adv = [&](ad::Tape&, const stmodel::ModelOutputs& o, const Tensor& Y) {
    const Shape& hs = o.embedding.shape();
    const ad::Var flat = ad::reshape(o.embedding, {hs[0] * hs[1], hs[2]});
    return adv_cfg.beta1 * losses::nb_nll(o.mu, o.alpha, Y) +
           (adv_cfg.beta2 * u_bar) * losses::supervised_contrastive(flat, part.mask(), adv_cfg.tau);
  };

  double worst_input = 0.0;
  std::size_t kinks = 0;
  for (auto kind : {losses::LossKind::kWrmse, losses::LossKind::kNb, losses::LossKind::kAdv}) {
    const auto loss = losses::make_loss(kind, adv_cfg);
    const auto& reference = kind == losses::LossKind::kAdv ? frozen_adv : loss;
    const Tensor g = model.input_gradient(loss, batch.X, batch.Y, data.graph);
    const double f0 = model.loss(reference, batch.X, batch.Y, data.graph);
    auto shifted = [&](std::size_t i, double h) {
      Tensor x = batch.X;
      x[i] += h;
      return model.loss(reference, x, batch.Y, data.graph);
    };
    for (int checked = 0; checked < 10;) {
      const std::size_t i = pick_x(rng);
      const double h = 1e-5;
      const double up = shifted(i, h), down = shifted(i, -h);
      const double fd = (up - down) / (2 * h);
      // Non-differentiable points (a ReLU input at exactly zero) show up as
      // one-sided slopes that disagree.
      if (rel_err((up - f0) / h, (f0 - down) / h, 1e-6) > 1e-2) {
        ++kinks;
        continue;
      }
      worst_input = std::max(worst_input, rel_err(g[i], fd, 1e-6));
      ++checked;
    }
  }

  const Tensor mu = random_tensor({2, 2, 5}, rng, 0.3, 4.0);
  const Tensor alpha = random_tensor({2, 2, 5}, rng, 0.1, 2.0);
  Tensor Y({2, 2, 5});
  for (std::size_t i = 0; i < Y.numel(); ++i) Y[i] = static_cast<double>((i * 7) % 5);
  double worst_nb = 0.0;
  for (int which = 0; which < 2; ++which) {
    ad::Tape tape;
    ad::Var vmu = which == 0 ? tape.variable(mu) : tape.constant(mu);
    ad::Var valpha = which == 1 ? tape.variable(alpha) : tape.constant(alpha);
    tape.backward(losses::nb_nll(vmu, valpha, Y));
    const Tensor g = tape.grad(which == 0 ? vmu : valpha);
    std::uniform_int_distribution<std::size_t> pick(0, mu.numel() - 1);
    for (int r = 0; r < 10; ++r) {
      const std::size_t i = pick(rng);
      Tensor mp = mu, mm = mu, ap = alpha, am = alpha;
      const double h = 1e-6;
      (which == 0 ? mp : ap)[i] += h;
      (which == 0 ? mm : am)[i] -= h;
      const double fd = (losses::nb_nll({mp, ap}, Y) - losses::nb_nll({mm, am}, Y)) / (2 * h);
      worst_nb = std::max(worst_nb, rel_err(g[i], fd, 1e-8));
    }
  }

  // Decoder parameters through a random linear read-out of mu and alpha.
  const Tensor H = model.embed(batch.X, data.graph).H;
  const Tensor wmu = random_tensor({3, 2, 12}, rng, -1, 1);
  const Tensor walpha = random_tensor({3, 2, 12}, rng, -1, 1);
  auto objective = [&](const nn::ParameterSet& ps, std::vector<ad::Var>* vars, ad::Tape& tape) {
    const auto p = ps.bind(tape, vars != nullptr);
    if (vars) *vars = p;
    ad::Var m, a;
    model.build_nb_decoder(p, tape.constant(H), m, a);
    return ad::sum(m * tape.constant(wmu)) + ad::sum(a * tape.constant(walpha));
  };
  ad::Tape tape;
  std::vector<ad::Var> vars;
  tape.backward(objective(model.params(), &vars, tape));
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t k = 0; k < model.params().size(); ++k) {
    if (model.params().name(k).rfind("nb.", 0) != 0) continue;
    for (std::size_t i = 0; i < model.params()[k].numel(); ++i) coords.push_back({k, i});
  }
  std::shuffle(coords.begin(), coords.end(), rng);
  double worst_dec = 0.0;
  for (std::size_t c = 0; c < 10 && c < coords.size(); ++c) {
    const auto [k, i] = coords[c];
    nn::ParameterSet plus = model.params(), minus = model.params();
    const double h = 1e-6;
    plus[k][i] += h;
    minus[k][i] -= h;
    ad::Tape tp, tm;
    const double fd =
        (objective(plus, nullptr, tp).value()[0] - objective(minus, nullptr, tm).value()[0]) / (2 * h);
    worst_dec = std::max(worst_dec, rel_err(tape.grad(vars[k])[i], fd, 1e-8));
  }
  const bool ok = worst_input < 1e-3 && worst_nb < 1e-4 && worst_dec < 1e-4 && coords.size() >= 10;
  return {ok, fmt("max rel err: input %.2e (3 losses x 10, %zu kink coordinates redrawn), NB-NLL %.2e "
                  "(20), decoder %.2e (10)",
                  worst_input, kinks, worst_nb, worst_dec)};
}

Verdict nb_correctness() {
  std::mt19937_64 rng(4242);
  std::uniform_real_distribution<double> mu_d(0.2, 5.0), a_d(0.05, 2.0), u(0.0, 1.0);
  double worst_sum = 0.0, worst_z = 0.0;
  for (int r = 0; r < 10; ++r) {
    const double mu = mu_d(rng), alpha = a_d(rng);
    // Sum of the pmf over 0..500, accumulated smallest terms first.
    std::vector<double> pmf(501);
    for (int x = 0; x <= 500; ++x) pmf[x] = losses::nb_pmf(x, mu, alpha);
    double total = 0.0;
    for (int x = 500; x >= 0; --x) total += pmf[x];
    worst_sum = std::max(worst_sum, std::abs(total - 1.0));
    // Inverse-CDF samples from the implemented pmf.
    std::vector<double> cdf(501);
    std::partial_sum(pmf.begin(), pmf.end(), cdf.begin());
    double sum = 0.0;
    const int n = 100000;
    for (int s = 0; s < n; ++s) {
      const double target = u(rng) * cdf.back();
      sum += static_cast<double>(std::lower_bound(cdf.begin(), cdf.end(), target) - cdf.begin());
    }
    const double sigma = std::sqrt((mu + alpha * mu * mu) / n);
    worst_z = std::max(worst_z, std::abs(sum / n - mu) / sigma);
  }
  return {worst_sum <= 1e-9 && worst_z <= 3.0,
          fmt("max |sum pmf - 1| %.2e; max |sample mean - mu| %.2f sigma over 10 (mu, alpha)", worst_sum,
              worst_z)};
}

Verdict metric_oracles() {
  std::mt19937_64 rng(515);
  std::uniform_int_distribution<int> nd(1, 8), level(0, 5), lab(0, 3), style(0, 1);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::size_t mismatch = 0, variance = 0;
  const std::vector<std::function<double(double)>> transforms = {
      [](double x) { return std::exp(2.0 * x) - 3.0; }, [](double x) { return x * x * x + 5.0 * x; },
      [](double x) { return 4.0 * x + 1.0; }};
  for (int trial = 0; trial < 10000; ++trial) {
    const int n = nd(rng);
    std::vector<double> p(n), y(n);
    const bool ties = style(rng) == 0;
    for (int i = 0; i < n; ++i) {
      p[i] = ties ? 0.5 * level(rng) : gauss(rng);
      y[i] = lab(rng) == 0 ? lab(rng) + 1 : 0;
    }
    const auto rmin = metrics::recall_min(p, y), rmaj = metrics::recall_maj(p, y);
    const auto amin = metrics::ap_min(p, y), amaj = metrics::ap_maj(p, y);
    mismatch += rmin != oracle::recall(p, y, true);
    mismatch += rmaj != oracle::recall(p, y, false);
    mismatch += amin != oracle::ap(p, y, true);
    mismatch += amaj != oracle::ap(p, y, false);
    for (const auto& f : transforms) {
      std::vector<double> tp(n);
      std::transform(p.begin(), p.end(), tp.begin(), f);
      variance += metrics::recall_min(tp, y) != rmin;
      variance += metrics::recall_maj(tp, y) != rmaj;
      variance += metrics::ap_min(tp, y) != amin;
      variance += metrics::ap_maj(tp, y) != amaj;
    }
  }
  return {mismatch == 0 && variance == 0,
          fmt("10000 instances: %zu oracle mismatches, %zu changes under 3 increasing transforms",
              mismatch, variance)};
}

Verdict baseline_reduction() {
  std::mt19937_64 rng(66);
  const auto loss = losses::make_loss(losses::LossKind::kAdv);
  std::size_t equal = 0;
  const std::size_t total = 20;
  for (std::size_t i = 0; i < total; ++i) {
    const std::size_t N = 8 + i % 9;
    const auto data = zidata::generate_synthetic_zid(N, 64, 2, 0.85, rng());
    const stmodel::STRegressor model(desk_model(rng()), N, 2);
    const auto batches = zidata::window(data, 6, 2, 1, 4);
    const auto& batch = batches[i % batches.size()];
    attack::AttackSpec spec;
    spec.strategy = attack::Strategy::kSaliency;
    spec.seed = rng();
    spec.budget.eta = 0.1 + 0.04 * static_cast<double>(i);
    spec.per_segment_mask = i % 4 == 3;
    const auto base = attack::generate(model, loss, batch.X, batch.Y, data.graph, spec);
    const auto ours = mingre::mingre_generate(
        model, loss, batch.X, batch.Y, data.graph,
        mingre::AttentionWeights::constant(batch.batch_size(), 6, N, 1.0, 1.0, 1.0), spec);
    bool same = ours.mask == base.mask && ours.loss_trace == base.loss_trace;
    for (std::size_t k = 0; same && k < base.X_adv.numel(); ++k) {
      same = same_bits(ours.X_adv[k], base.X_adv[k]);
    }
    equal += same;
  }
  return {equal == total, fmt("%zu/%zu batches bitwise equal", equal, total)};
}

// Shared by the gap-closure and minority-inclusion criteria: a trained,
// frozen target and a reweighter fitted with 200 stage-two steps.
struct ReweighterStudy {
  double gap_before = 0.0;
  double gap_after = 0.0;
  double att1_before = 0.0;  // mean Att1 over the fitting batches
  double att1_after = 0.0;
  double minority_mingre = 0.0;  // mean victim minority-node fraction
  double minority_stpgd = 0.0;
  std::size_t batches = 0;
};

ReweighterStudy reweighter_study(std::uint64_t seed) {
  const auto data = zidata::generate_synthetic_zid(16, 240, 2, 0.9, seed);
  stmodel::STRegressor model(desk_model(seed), 16, 2);
  const auto loss = losses::make_loss(losses::LossKind::kAdv);
  const auto train_batches = zidata::window(data, 6, 2, 2, 8);
  nn::Adam opt(1e-2);
  for (int e = 0; e < 5; ++e) {
    for (const auto& b : train_batches) {
      const auto r = model.parameter_gradients(loss, b.X, b.Y, data.graph);
      opt.step(model.params(), r.grads);
    }
  }
  mingre::ReweighterConfig cfg;
  cfg.encoder.seed = seed;
  mingre::Reweighter rw(cfg, 2);
  attack::AttackSpec spec;
  spec.seed = seed;

  std::vector<zidata::SegmentBatch> fit;
  for (const auto& b : train_batches) {
    if (!zidata::class_partition(b).degenerate() && fit.size() < 4) fit.push_back(b);
  }
  auto mean_att1 = [&] {
    double s = 0.0;
    for (const auto& b : fit) {
      const Tensor a = rw.attention_weights(b.X).att1();
      s += std::accumulate(a.storage().begin(), a.storage().end(), 0.0) /
           static_cast<double>(a.numel());
    }
    return s / static_cast<double>(fit.size());
  };
  auto mean_gap = [&] {
    double s = 0.0;
    for (const auto& b : fit) {
      const Tensor g = model.input_gradient(loss, b.X, b.Y, data.graph);
      s += mingre::gradient_gap(mingre::reweight_gradients(g, rw.attention_weights(b.X)),
                                zidata::class_partition(b));
    }
    return s / static_cast<double>(fit.size());
  };
  ReweighterStudy out;
  out.gap_before = mean_gap();
  out.att1_before = mean_att1();
  for (int step = 0; step < 200; ++step) {
    const auto& b = fit[step % fit.size()];
    const auto adv = mingre::stage1_attack_step(model, rw, loss, b.X, b.Y, data.graph, spec);
    mingre::stage2_reweighter_update(model, rw, loss, b.X, b.Y, data.graph, adv, spec);
  }
  out.gap_after = mean_gap();
  out.att1_after = mean_att1();

  auto fraction = [](const attack::PerturbationMask& m, const std::vector<std::uint8_t>& minority) {
    const auto nodes = m.nodes();
    double k = 0.0;
    for (auto n : nodes) k += minority[n];
    return k / static_cast<double>(nodes.size());
  };
  const auto eval_batches = zidata::window(data, 6, 2, 1, 8);
  for (const auto& b : eval_batches) {
    const auto part = zidata::class_partition(b);
    if (part.degenerate()) continue;
    const auto minority = part.minority_nodes();
    const auto base = attack::generate(model, loss, b.X, b.Y, data.graph, spec);
    const auto ours = mingre::stage1_attack_step(model, rw, loss, b.X, b.Y, data.graph, spec);
    out.minority_stpgd += fraction(base.mask, minority);
    out.minority_mingre += fraction(ours.mask, minority);
    if (++out.batches == 20) break;
  }
  out.minority_stpgd /= static_cast<double>(out.batches);
  out.minority_mingre /= static_cast<double>(out.batches);
  return out;
}

const std::vector<ReweighterStudy>& reweighter_studies() {
  static const std::vector<ReweighterStudy> studies = [] {
    std::vector<ReweighterStudy> s;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) s.push_back(reweighter_study(seed));
    return s;
  }();
  return studies;
}

Verdict gap_closure() {
  std::vector<double> reductions, before, after;
  std::string detail;
  for (const auto& s : reweighter_studies()) {
    reductions.push_back(1.0 - s.gap_after / s.gap_before);
    before.push_back(s.att1_before);
    after.push_back(s.att1_after);
    detail += fmt(" %.3f", reductions.back());
  }
  const double med = median(reductions);
  return {med >= 0.20, fmt("median gap reduction %.3f (seeds:%s); median mean Att1 %.3g -> %.3g", med,
                           detail.c_str(), median(before), median(after))};
}

Verdict minority_inclusion() {
  std::vector<double> ours, base;
  std::size_t batches = 0;
  for (const auto& s : reweighter_studies()) {
    ours.push_back(s.minority_mingre);
    base.push_back(s.minority_stpgd);
    batches += s.batches;
  }
  const double mo = median(ours), mb = median(base);
  return {mo >= mb && batches == 100,
          fmt("median victim minority fraction: MinGRE %.3f vs STPGD-saliency %.3f (%zu batches)", mo,
              mb, batches)};
}

Verdict disparity_direction() {
  std::vector<double> tnds, ours;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto data = zidata::generate_synthetic_zid(16, 800, 2, 0.9, seed);
    auto split = zidata::split_chronological(data, 0.6, 0.2);
    const auto stats = zidata::feature_stats(split.train);
    zidata::standardize(split.train, stats);
    zidata::standardize(split.val, stats);
    zidata::standardize(split.test, stats);
    const auto test = zidata::window(split.test, 6, 2, 1, 16);
    double recd[2] = {0, 0};
    for (int m = 0; m < 2; ++m) {
      stmodel::STRegressor model(desk_model(seed), 16, 2);
      trainer::TrainConfig tc;
      tc.mode = m == 0 ? trainer::Mode::kAtTnds : trainer::Mode::kMingre;
      tc.loss = m == 0 ? losses::LossKind::kWrmse : losses::LossKind::kAdv;
      tc.epochs = 20;
      tc.batch_size = 8;
      tc.learning_rate = 5e-3;
      tc.seed = seed;
      tc.reweighter.encoder.seed = seed;
      mingre::Reweighter rw(tc.reweighter, 2);
      trainer::train(model, m == 1 ? &rw : nullptr, {split.train, split.val}, tc);
      attack::AttackSpec spec;
      spec.strategy = attack::Strategy::kSaliency;
      spec.seed = seed;
      const auto table = attack::clean_vs_adv_eval(model, losses::make_loss(tc.loss), test,
                                                   split.test.graph, spec);
      recd[m] = table.adversarial.rec_d;
    }
    tnds.push_back(recd[0]);
    ours.push_back(recd[1]);
    detail += fmt(" %.3f/%.3f", recd[1], recd[0]);
  }
  const double mo = median(ours), mt = median(tnds);
  return {mo <= mt, fmt("median attacked Rec-D: MinGRE %.4f vs AT-TNDS %.4f (per seed MinGRE/AT-TNDS:%s)",
                        mo, mt, detail.c_str())};
}

Verdict degenerate_collapses() {
  // Zero budget adversarial training against natural training.
  const auto data = zidata::generate_synthetic_zid(10, 96, 2, 0.85, 8);
  auto split = zidata::split_chronological(data, 0.7, 0.15);
  stmodel::RegressorConfig mc;
  mc.history = 4;
  mc.horizon = 2;
  mc.hidden_dim = 8;
  mc.recurrent_dim = 16;
  mc.seed = 3;
  trainer::TrainConfig base;
  base.epochs = 4;
  base.batch_size = 8;
  base.stride = 2;
  base.learning_rate = 5e-3;
  base.seed = 12;
  stmodel::STRegressor natural(mc, 10, 2);
  const auto rn = trainer::natural_train(natural, {split.train, split.val}, base);
  std::size_t at_equal = 0;
  const trainer::Mode modes[] = {trainer::Mode::kAtRandom, trainer::Mode::kAtDegree,
                                 trainer::Mode::kAtPagerank, trainer::Mode::kAtTnds};
  for (auto mode : modes) {
    auto cfg = base;
    cfg.mode = mode;
    cfg.budget.epsilon = 0.0;
    cfg.budget.step_alpha = 0.0;
    stmodel::STRegressor adv(mc, 10, 2);
    const auto ra = trainer::adversarial_train(adv, {split.train, split.val}, cfg);
    bool same = adv.params() == natural.params() && ra.history.steps.size() == rn.history.steps.size();
    for (std::size_t i = 0; same && i < ra.history.steps.size(); ++i) {
      same = same_bits(ra.history.steps[i].loss, rn.history.steps[i].loss);
    }
    at_equal += same;
  }

  // beta2 = 0 against beta1 * nb_nll.
  std::mt19937_64 rng(1010);
  std::size_t beta_equal = 0;
  const std::size_t beta_trials = 50;
  for (std::size_t t = 0; t < beta_trials; ++t) {
    const Tensor mu = random_tensor({2, 2, 6}, rng, 0.1, 5.0);
    const Tensor alpha = random_tensor({2, 2, 6}, rng, 0.05, 3.0);
    const Tensor H = random_tensor({2, 6, 5}, rng, -1, 1);
    Tensor Y({2, 2, 6});
    for (auto& v : Y.storage()) v = static_cast<double>(rng() % 4 == 0 ? rng() % 5 : 0);
    losses::AdvLossConfig cfg;
    cfg.beta1 = 0.1 + 0.05 * static_cast<double>(t);
    cfg.beta2 = 0.0;
    const auto part = zidata::class_partition(Y);
    const double value = losses::adv_loss({mu, alpha}, Y, H, part, cfg);
    ad::Tape tape;
    const double via_tape = losses::adv_loss(tape.constant(mu), tape.constant(alpha), Y,
                                             tape.constant(H), part, cfg).value()[0];
    const double ref = cfg.beta1 * losses::nb_nll({mu, alpha}, Y);
    beta_equal += same_bits(value, ref) && same_bits(via_tape, ref);
  }

  // Contrastive contribution as the predicted dispersion shrinks.
  const Tensor mu = random_tensor({2, 1, 6}, rng, 0.5, 2.0);
  const Tensor H = random_tensor({2, 6, 4}, rng, -1, 1);
  const Tensor Y({2, 1, 6}, std::vector<double>{0, 1, 0, 0, 3, 0, 0, 0, 2, 0, 0, 0});
  const auto part = zidata::class_partition(Y);
  losses::AdvLossConfig cfg;
  cfg.beta2 = 1.0;
  std::vector<double> contributions;
  for (int e = 1; e <= 10; ++e) {
    losses::AdvLossParts parts;
    losses::adv_loss({mu, Tensor({2, 1, 6}, std::pow(10.0, -e))}, Y, H, part, cfg, &parts);
    contributions.push_back(cfg.beta2 * parts.u_bar * parts.contrastive);
  }
  bool shrinking = contributions.back() < 1e-9 && contributions.front() > 0.0;
  for (std::size_t i = 1; i < contributions.size(); ++i) {
    shrinking = shrinking && contributions[i] < contributions[i - 1];
  }
  return {at_equal == 4 && beta_equal == beta_trials && shrinking,
          fmt("eps=0 AT == natural: %zu/4 modes; beta2=0: %zu/%zu bitwise; contrastive term %.2e -> %.2e "
              "as alpha 1e-1 -> 1e-10",
              at_equal, beta_equal, beta_trials, contributions.front(), contributions.back())};
}

Verdict attack_effectiveness() {
  const auto data = zidata::generate_synthetic_zid(16, 420, 2, 0.9, 11);
  stmodel::STRegressor model(desk_model(11), 16, 2);
  trainer::TrainConfig tc;
  tc.epochs = 5;
  tc.batch_size = 8;
  tc.stride = 2;
  tc.learning_rate = 5e-3;
  tc.patience = 0;
  tc.seed = 11;
  trainer::natural_train(model, {data, std::nullopt}, tc);
  const auto loss = losses::make_loss(losses::LossKind::kWrmse);
  const auto batches = zidata::window(data, 6, 2, 1, 4);
  std::size_t raised = 0, total = 0;
  attack::AttackSpec spec;
  spec.strategy = attack::Strategy::kSaliency;
  for (std::size_t i = 0; i < batches.size() && total < 100; ++i, ++total) {
    spec.seed = i;
    const auto ae = attack::generate(model, loss, batches[i].X, batches[i].Y, data.graph, spec);
    raised += ae.final_loss() > ae.clean_loss();
  }
  const bool ok = total == 100 && static_cast<double>(raised) >= 0.95 * static_cast<double>(total);
  return {ok, fmt("loss increased in %zu/%zu batches", raised, total)};
}

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;
  Verdict (*run)();
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "disparity arithmetic", 1, disparity_arithmetic},
      {2, "budget soundness fuzzing", 120, budget_fuzzing},
      {3, "gradient oracles", 60, gradient_oracles},
      {4, "negative binomial correctness", 60, nb_correctness},
      {5, "metric oracle equivalence", 120, metric_oracles},
      {6, "baseline reduction", 60, baseline_reduction},
      {7, "gap closure", 600, gap_closure},
      {8, "minority inclusion", 600, minority_inclusion},
      {9, "disparity direction", 3600, disparity_direction},
      {10, "degenerate collapses", 300, degenerate_collapses},
      {11, "attack effectiveness", 300, attack_effectiveness},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  double shared_seconds = 0.0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    // Criteria 7 and 8 share one study; each is charged the full cost.
    if (c.id == 7) shared_seconds = seconds;
    if (c.id == 8) seconds += shared_seconds;
    const bool in_time = seconds <= c.budget_seconds;
    const bool pass = v.pass && in_time;
    failures += !pass;
    std::printf("%s [%2d] %-30s %s | %.1f s of %.0f s%s\n", pass ? "PASS" : "FAIL", c.id, c.name,
                v.detail.c_str(), seconds, c.budget_seconds, in_time ? "" : " (over budget)");
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
