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

#include "zistorm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace zistorm::trainer {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kAttackStream = 0xA77AC4D5EEDULL;
constexpr std::uint64_t kDropoutStream = 0xD80907ULL;

template <class T>
json opt_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

template <class T>
std::optional<T> opt_from(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

json report_json(const metrics::MetricReport& r) {
  return {{"rec_maj", r.rec_maj}, {"rec_min", r.rec_min}, {"map_maj", r.map_maj},
          {"map_min", r.map_min}, {"rec_d", r.rec_d},     {"map_d", r.map_d},
          {"instants", r.instants}, {"skipped_min", r.skipped_min}, {"skipped_maj", r.skipped_maj}};
}

metrics::MetricReport report_from(const json& j) {
  metrics::MetricReport r;
  r.rec_maj = j.at("rec_maj").get<double>();
  r.rec_min = j.at("rec_min").get<double>();
  r.map_maj = j.at("map_maj").get<double>();
  r.map_min = j.at("map_min").get<double>();
  r.rec_d = j.at("rec_d").get<double>();
  r.map_d = j.at("map_d").get<double>();
  r.instants = j.at("instants").get<std::size_t>();
  r.skipped_min = j.at("skipped_min").get<std::size_t>();
  r.skipped_maj = j.at("skipped_maj").get<std::size_t>();
  return r;
}

template <class R>
std::string rng_state(const R& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

template <class R>
void set_rng_state(R& rng, const std::string& s) {
  std::istringstream is(s);
  is >> rng;
  if (!is) throw std::runtime_error("corrupt random generator state in checkpoint");
}

void save_tensors(const fs::path& path, const std::vector<Tensor>& tensors) {
  nn::ParameterSet ps;
  for (std::size_t i = 0; i < tensors.size(); ++i) ps.add("t" + std::to_string(i), tensors[i]);
  ps.save(path);
}

std::vector<Tensor> load_tensors(const fs::path& path, const nn::ParameterSet& like) {
  nn::ParameterSet ps;
  for (std::size_t i = 0; i < like.size(); ++i) ps.add("t" + std::to_string(i), Tensor(like[i].shape()));
  ps.load(path);
  return ps.values();
}

void save_adam(const fs::path& dir, const std::string& stem, const nn::Adam& opt) {
  const auto st = opt.state();
  if (st.steps == 0) return;
  save_tensors(dir / (stem + "_m.zsck"), st.m);
  save_tensors(dir / (stem + "_v.zsck"), st.v);
}

void load_adam(const fs::path& dir, const std::string& stem, std::size_t steps,
               const nn::ParameterSet& params, nn::Adam& opt) {
  if (steps == 0) return;
  nn::Adam::State st;
  st.steps = steps;
  st.m = load_tensors(dir / (stem + "_m.zsck"), params);
  st.v = load_tensors(dir / (stem + "_v.zsck"), params);
  opt.restore(std::move(st));
}

// Per-(segment, node) L2 magnitudes of the k largest pairs, split by class.
void record_topk(const Tensor& grad, const zidata::ClassPartition& part, std::size_t k,
                 StepRecord& rec) {
  const Shape& s = grad.shape();
  std::vector<double> mag(s[0] * s[2], 0.0);
  for (std::size_t b = 0; b < s[0]; ++b)
    for (std::size_t t = 0; t < s[1]; ++t)
      for (std::size_t n = 0; n < s[2]; ++n)
        for (std::size_t d = 0; d < s[3]; ++d) {
          const double v = grad[((b * s[1] + t) * s[2] + n) * s[3] + d];
          mag[b * s[2] + n] += v * v;
        }
  for (double& m : mag) m = std::sqrt(m);
  for (std::size_t i : attack::top_k(mag, std::min(k, mag.size()))) {
    (part.mask()[i] ? rec.topk_grad_minority : rec.topk_grad_majority).push_back(mag[i]);
  }
}

double minority_fraction(const attack::PerturbationMask& mask, const zidata::ClassPartition& part,
                         bool per_segment) {
  std::size_t hits = 0;
  std::size_t total = 0;
  if (per_segment) {
    for (std::size_t b = 0; b < mask.batch(); ++b) {
      for (std::size_t n : mask.nodes(b)) {
        hits += part.is_minority(b, n);
        ++total;
      }
    }
  } else {
    const auto bearing = part.minority_nodes();
    for (std::size_t n : mask.nodes(0)) {
      hits += bearing[n];
      ++total;
    }
  }
  return total ? static_cast<double>(hits) / static_cast<double>(total) : 0.0;
}

class Runner {
 public:
  Runner(stmodel::STRegressor& model, mingre::Reweighter* rw, const TrainData& data,
         const TrainConfig& cfg, const TrainHooks& hooks)
      : model_(model),
        rw_(rw),
        data_(data),
        cfg_(cfg),
        hooks_(hooks),
        opt_(cfg.learning_rate),
        shuffle_rng_(cfg.seed),
        attack_rng_(cfg.seed ^ kAttackStream),
        dropout_rng_(cfg.seed ^ kDropoutStream) {
    cfg_.validate();
    if (cfg_.mode == Mode::kMingre && rw_ == nullptr) {
      throw std::invalid_argument("mingre training needs a reweighter");
    }
    model_.set_prediction_head(prediction_head_for(cfg_.loss));
    const auto& mc = model_.config();
    all_ = zidata::window_all(data_.train, mc.history, mc.horizon, cfg_.stride);
    if (data_.val) val_ = zidata::window(*data_.val, mc.history, mc.horizon, cfg_.stride, cfg_.batch_size);
    plain_loss_ = losses::make_loss(cfg_.loss, cfg_.adv, cfg_.weight_rule);
    stage2_loss_ = losses::make_loss(cfg_.stage2_loss.value_or(cfg_.loss), cfg_.adv, cfg_.weight_rule);
    if (cfg_.loss == losses::LossKind::kAdv) {
      const losses::AdvLossConfig adv = cfg_.adv;
      update_loss_ = [adv, this](ad::Tape&, const stmodel::ModelOutputs& out, const Tensor& Y) {
        return losses::adv_loss(out.mu, out.alpha, Y, out.embedding, zidata::class_partition(Y), adv,
                                &parts_);
      };
    } else {
      update_loss_ = plain_loss_;
    }
  }

  TrainResult run() {
    std::size_t start_epoch = 0;
    if (hooks_.resume) start_epoch = load_checkpoint();
    TrainResult result;
    result.history = std::move(history_);
    std::size_t ran = 0;
    bool stopped = false;
    for (std::size_t epoch = start_epoch; epoch < cfg_.epochs; ++epoch) {
      run_epoch(epoch, result.history);
      stopped = result.history.epochs.back().stopped;
      ++ran;
      if (!hooks_.checkpoint_dir.empty()) save_checkpoint(epoch + 1, result.history);
      if (stopped) break;
      if (hooks_.max_epochs_this_run && ran >= *hooks_.max_epochs_this_run && epoch + 1 < cfg_.epochs) {
        result.best_epoch = best_epoch_;
        result.best_val_rec_min = best_val_;
        return result;
      }
    }
    if (best_params_) model_.params() = *best_params_;
    result.best_epoch = best_epoch_;
    result.best_val_rec_min = best_val_;
    result.early_stopped = stopped;
    result.completed = true;
    return result;
  }

 private:
  void run_epoch(std::size_t epoch, History& history) {
    std::vector<std::size_t> order(all_.batch_size());
    std::iota(order.begin(), order.end(), 0);
    if (cfg_.shuffle) std::shuffle(order.begin(), order.end(), shuffle_rng_);

    EpochRecord er;
    er.epoch = epoch;
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t first = 0, index = 0; first < order.size(); first += cfg_.batch_size, ++index) {
      const std::size_t last = std::min(order.size(), first + cfg_.batch_size);
      const auto batch = all_.gather(std::span<const std::size_t>(order.data() + first, last - first));
      StepRecord rec = run_step(batch);
      rec.step = step_++;
      rec.epoch = epoch;
      rec.batch = index;
      rec.segments = batch.batch_size();
      if (!std::isfinite(rec.loss)) {
        throw std::runtime_error("training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                                 ", batch " + std::to_string(index));
      }
      loss_sum += rec.loss * static_cast<double>(rec.segments);
      seen += rec.segments;
      ++er.steps;
      if (rec.adv_parts && rec.adv_parts->contrastive_skipped) ++er.contrastive_skipped;
      if (rec.stage2 && rec.stage2->regularizers_skipped) ++er.regularizers_skipped;
      if (hooks_.on_step) hooks_.on_step(rec);
      history.steps.push_back(std::move(rec));
    }
    er.train_loss = loss_sum / static_cast<double>(seen);

    if (!val_.empty()) {
      const Evaluation ev = evaluate_clean(model_, plain_loss_, val_, data_.val->graph);
      er.val_loss = ev.loss;
      er.val = ev.report;
      if (!best_epoch_ || ev.report.rec_min > best_val_) {
        er.improved = true;
        best_epoch_ = epoch;
        best_val_ = ev.report.rec_min;
        best_params_ = model_.params();
        since_best_ = 0;
      } else {
        ++since_best_;
      }
      er.stopped = cfg_.patience > 0 && since_best_ >= cfg_.patience;
    }
    history.epochs.push_back(er);
  }

  StepRecord run_step(const zidata::SegmentBatch& batch) {
    StepRecord rec;
    const auto& graph = data_.train.graph;
    const auto strategy = attack_strategy(cfg_.mode);
    bool clean = !strategy.has_value();
    attack::AttackSpec spec;
    if (!clean) {
      spec.name = to_string(cfg_.mode);
      spec.strategy = *strategy;
      spec.budget = cfg_.budget;
      spec.seed = attack_rng_();
      spec.per_segment_mask = cfg_.per_segment_mask;
      if (cfg_.clean_ratio > 0.0) {
        clean = std::uniform_real_distribution<double>(0.0, 1.0)(attack_rng_) < cfg_.clean_ratio;
      }
    }
    const auto partition = zidata::class_partition(batch.Y);
    rec.minority_absent = partition.minority_count() == 0;
    parts_ = {};

    if (clean) {
      const auto r = model_.parameter_gradients(update_loss_, batch.X, batch.Y, graph, &dropout_rng_);
      opt_.step(model_.params(), r.grads);
      rec.loss = r.loss;
      rec.clean_loss = r.loss;
    } else {
      rec.clean_batch = false;
      rec.strategy = attack::to_string(spec.strategy);
      const std::size_t k = cfg_.budget.victim_count(batch.num_nodes()) * batch.batch_size();
      StageHashes h;
      attack::AdversarialExample adv;
      if (cfg_.mode == Mode::kMingre) {
        rec.strategy = "mingre";
        h.theta_start = model_.params().hash();
        h.psi_start = rw_->params().hash();
        const auto weights = hooks_.attention_override ? hooks_.attention_override(batch)
                                                       : rw_->attention_weights(batch.X);
        adv = mingre::mingre_generate(model_, plain_loss_, batch.X, batch.Y, graph, weights, spec);
        h.theta_after_attack = model_.params().hash();
        h.psi_after_attack = rw_->params().hash();
        const Tensor g = model_.input_gradient(plain_loss_, batch.X, batch.Y, graph);
        record_topk(mingre::reweight_gradients(g, weights), partition, k, rec);
      } else {
        adv = attack::generate(model_, plain_loss_, batch.X, batch.Y, graph, spec);
        record_topk(model_.input_gradient(plain_loss_, batch.X, batch.Y, graph), partition, k, rec);
      }
      const auto r = model_.parameter_gradients(update_loss_, adv.X_adv, batch.Y, graph, &dropout_rng_);
      opt_.step(model_.params(), r.grads);
      rec.loss = r.loss;
      rec.clean_loss = adv.clean_loss();
      rec.adv_loss = adv.final_loss();
      rec.victims = adv.mask.max_selected();
      rec.minority_fraction = minority_fraction(adv.mask, partition, cfg_.per_segment_mask);
      if (cfg_.mode == Mode::kMingre) {
        h.theta_after_update = model_.params().hash();
        h.psi_after_update = rw_->params().hash();
        const auto br = mingre::stage2_reweighter_update(model_, *rw_, stage2_loss_, batch.X, batch.Y,
                                                         graph, adv, spec);
        h.theta_after_reweight = model_.params().hash();
        h.psi_after_reweight = rw_->params().hash();
        if (!br.regularizers_skipped) rec.gradient_gap = br.raw_gap;
        rec.stage2 = br;
        rec.hashes = h;
      }
    }
    if (cfg_.loss == losses::LossKind::kAdv) rec.adv_parts = parts_;
    return rec;
  }

  void save_checkpoint(std::size_t next_epoch, const History& history) {
    const fs::path& dir = hooks_.checkpoint_dir;
    fs::create_directories(dir);
    model_.params().save(dir / "model.zsck");
    save_adam(dir, "model_adam", opt_);
    if (best_params_) best_params_->save(dir / "best.zsck");
    json st = {{"next_epoch", next_epoch},
               {"step", step_},
               {"adam_steps", opt_.steps()},
               {"shuffle_rng", rng_state(shuffle_rng_)},
               {"attack_rng", rng_state(attack_rng_)},
               {"dropout_rng", rng_state(dropout_rng_)},
               {"best_epoch", opt_json(best_epoch_)},
               {"best_val_rec_min", best_val_},
               {"since_best", since_best_},
               {"mode", to_string(cfg_.mode)},
               {"seed", cfg_.seed}};
    if (rw_) {
      rw_->params().save(dir / "reweighter.zsck");
      save_adam(dir, "reweighter_adam", rw_->optimizer());
      st["reweighter_adam_steps"] = rw_->optimizer().steps();
    }
    history.save_jsonl(dir / "history.jsonl");
    const fs::path tmp = dir / "state.json.tmp";
    {
      std::ofstream os(tmp);
      os << st.dump(2) << '\n';
      if (!os) throw std::runtime_error("cannot write checkpoint state in " + dir.string());
    }
    fs::rename(tmp, dir / "state.json");
  }

  std::size_t load_checkpoint() {
    const fs::path& dir = hooks_.checkpoint_dir;
    if (dir.empty()) throw std::invalid_argument("resume requested without a checkpoint directory");
    std::ifstream is(dir / "state.json");
    if (!is) throw std::runtime_error("no checkpoint state in " + dir.string());
    const json st = json::parse(is);
    if (st.at("mode").get<std::string>() != to_string(cfg_.mode) ||
        st.at("seed").get<std::uint64_t>() != cfg_.seed) {
      throw std::runtime_error("checkpoint in " + dir.string() + " was written by a different configuration");
    }
    model_.params().load(dir / "model.zsck");
    load_adam(dir, "model_adam", st.at("adam_steps").get<std::size_t>(), model_.params(), opt_);
    if (rw_) {
      rw_->params().load(dir / "reweighter.zsck");
      load_adam(dir, "reweighter_adam", st.at("reweighter_adam_steps").get<std::size_t>(), rw_->params(),
                rw_->optimizer());
    }
    step_ = st.at("step").get<std::size_t>();
    set_rng_state(shuffle_rng_, st.at("shuffle_rng").get<std::string>());
    set_rng_state(attack_rng_, st.at("attack_rng").get<std::string>());
    set_rng_state(dropout_rng_, st.at("dropout_rng").get<std::string>());
    best_epoch_ = opt_from<std::size_t>(st, "best_epoch");
    best_val_ = st.at("best_val_rec_min").get<double>();
    since_best_ = st.at("since_best").get<std::size_t>();
    if (best_epoch_) {
      best_params_ = model_.params();
      best_params_->load(dir / "best.zsck");
    }
    history_ = History::load_jsonl(dir / "history.jsonl");
    return st.at("next_epoch").get<std::size_t>();
  }

  stmodel::STRegressor& model_;
  mingre::Reweighter* rw_;
  const TrainData& data_;
  TrainConfig cfg_;
  const TrainHooks& hooks_;
  nn::Adam opt_;
  nn::Rng shuffle_rng_;
  nn::Rng attack_rng_;
  nn::Rng dropout_rng_;
  zidata::SegmentBatch all_;
  std::vector<zidata::SegmentBatch> val_;
  stmodel::LossFn plain_loss_;
  stmodel::LossFn stage2_loss_;
  stmodel::LossFn update_loss_;
  losses::AdvLossParts parts_;
  std::size_t step_ = 0;
  std::optional<std::size_t> best_epoch_;
  double best_val_ = 0.0;
  std::size_t since_best_ = 0;
  std::optional<nn::ParameterSet> best_params_;
  History history_;
};

}  // namespace

std::string to_string(Mode mode) {
  switch (mode) {
    case Mode::kNatural: return "natural";
    case Mode::kAtRandom: return "at_random";
    case Mode::kAtDegree: return "at_degree";
    case Mode::kAtPagerank: return "at_pagerank";
    case Mode::kAtTnds: return "at_tnds";
    case Mode::kMingre: return "mingre";
  }
  return "unknown";
}

Mode mode_from_string(const std::string& name) {
  for (Mode m : {Mode::kNatural, Mode::kAtRandom, Mode::kAtDegree, Mode::kAtPagerank, Mode::kAtTnds,
                 Mode::kMingre}) {
    if (to_string(m) == name) return m;
  }
  throw std::invalid_argument("unknown training mode '" + name + "'");
}

std::optional<attack::Strategy> attack_strategy(Mode mode) {
  switch (mode) {
    case Mode::kNatural: return std::nullopt;
    case Mode::kAtRandom: return attack::Strategy::kRandom;
    case Mode::kAtDegree: return attack::Strategy::kDegree;
    case Mode::kAtPagerank: return attack::Strategy::kPagerank;
    case Mode::kAtTnds:
    case Mode::kMingre: return attack::Strategy::kSaliency;
  }
  return std::nullopt;
}

std::string to_string(losses::LossKind kind) {
  switch (kind) {
    case losses::LossKind::kWrmse: return "wrmse";
    case losses::LossKind::kNb: return "nb";
    case losses::LossKind::kAdv: return "adv";
  }
  return "unknown";
}

losses::LossKind loss_from_string(const std::string& name) {
  if (name == "wrmse") return losses::LossKind::kWrmse;
  if (name == "nb") return losses::LossKind::kNb;
  if (name == "adv") return losses::LossKind::kAdv;
  throw std::invalid_argument("unknown loss '" + name + "'");
}

stmodel::PredictionHead prediction_head_for(losses::LossKind kind) {
  return kind == losses::LossKind::kWrmse ? stmodel::PredictionHead::kRegression
                                          : stmodel::PredictionHead::kNbMean;
}

void TrainConfig::validate() const {
  if (epochs == 0) throw std::invalid_argument("epochs must be at least 1");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be at least 1");
  if (stride == 0) throw std::invalid_argument("stride must be at least 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw std::invalid_argument("learning_rate must be positive");
  }
  if (!(clean_ratio >= 0.0 && clean_ratio <= 1.0)) {
    throw std::invalid_argument("clean_ratio must lie in [0, 1]");
  }
  adv.validate();
  if (mode != Mode::kNatural) budget.validate();
  if (mode == Mode::kMingre) {
    if (loss != losses::LossKind::kAdv) throw std::invalid_argument("mode mingre requires loss adv");
    reweighter.encoder.validate();
    reweighter.lambdas.validate();
  }
}

json to_json(const StepRecord& r) {
  json j = {{"type", "step"},
            {"step", r.step},
            {"epoch", r.epoch},
            {"batch", r.batch},
            {"segments", r.segments},
            {"strategy", r.strategy},
            {"clean_batch", r.clean_batch},
            {"loss", r.loss},
            {"clean_loss", r.clean_loss},
            {"adv_loss", opt_json(r.adv_loss)},
            {"victims", r.victims},
            {"minority_fraction", opt_json(r.minority_fraction)},
            {"gradient_gap", opt_json(r.gradient_gap)},
            {"topk_grad_minority", r.topk_grad_minority},
            {"topk_grad_majority", r.topk_grad_majority},
            {"minority_absent", r.minority_absent}};
  if (r.adv_parts) {
    const auto& p = *r.adv_parts;
    j["adv_parts"] = {{"nb", p.nb}, {"u_bar", p.u_bar}, {"contrastive", p.contrastive},
                      {"total", p.total}, {"contrastive_skipped", p.contrastive_skipped}};
  } else {
    j["adv_parts"] = nullptr;
  }
  if (r.stage2) {
    const auto& s = *r.stage2;
    j["stage2"] = {{"task", s.task},
                   {"gap", s.gap},
                   {"minority", s.minority},
                   {"majority", s.majority},
                   {"total", s.total},
                   {"raw_task", s.raw_task},
                   {"raw_gap", s.raw_gap},
                   {"raw_minority", s.raw_minority},
                   {"raw_majority", s.raw_majority},
                   {"regularizers_skipped", s.regularizers_skipped},
                   {"warning", s.warning}};
  } else {
    j["stage2"] = nullptr;
  }
  if (r.hashes) {
    const auto& h = *r.hashes;
    j["hashes"] = {{"theta", {h.theta_start, h.theta_after_attack, h.theta_after_update, h.theta_after_reweight}},
                   {"psi", {h.psi_start, h.psi_after_attack, h.psi_after_update, h.psi_after_reweight}}};
  } else {
    j["hashes"] = nullptr;
  }
  return j;
}

StepRecord step_from_json(const json& j) {
  StepRecord r;
  r.step = j.at("step").get<std::size_t>();
  r.epoch = j.at("epoch").get<std::size_t>();
  r.batch = j.at("batch").get<std::size_t>();
  r.segments = j.at("segments").get<std::size_t>();
  r.strategy = j.at("strategy").get<std::string>();
  r.clean_batch = j.at("clean_batch").get<bool>();
  r.loss = j.at("loss").get<double>();
  r.clean_loss = j.at("clean_loss").get<double>();
  r.adv_loss = opt_from<double>(j, "adv_loss");
  r.victims = j.at("victims").get<std::size_t>();
  r.minority_fraction = opt_from<double>(j, "minority_fraction");
  r.gradient_gap = opt_from<double>(j, "gradient_gap");
  r.topk_grad_minority = j.at("topk_grad_minority").get<std::vector<double>>();
  r.topk_grad_majority = j.at("topk_grad_majority").get<std::vector<double>>();
  r.minority_absent = j.at("minority_absent").get<bool>();
  if (!j.at("adv_parts").is_null()) {
    const json& p = j.at("adv_parts");
    r.adv_parts = losses::AdvLossParts{p.at("nb").get<double>(), p.at("u_bar").get<double>(),
                                       p.at("contrastive").get<double>(), p.at("total").get<double>(),
                                       p.at("contrastive_skipped").get<bool>()};
  }
  if (!j.at("stage2").is_null()) {
    const json& s = j.at("stage2");
    mingre::Stage2Breakdown b;
    b.task = s.at("task").get<double>();
    b.gap = s.at("gap").get<double>();
    b.minority = s.at("minority").get<double>();
    b.majority = s.at("majority").get<double>();
    b.total = s.at("total").get<double>();
    b.raw_task = s.at("raw_task").get<double>();
    b.raw_gap = s.at("raw_gap").get<double>();
    b.raw_minority = s.at("raw_minority").get<double>();
    b.raw_majority = s.at("raw_majority").get<double>();
    b.regularizers_skipped = s.at("regularizers_skipped").get<bool>();
    b.warning = s.at("warning").get<std::string>();
    r.stage2 = b;
  }
  if (!j.at("hashes").is_null()) {
    const auto th = j.at("hashes").at("theta").get<std::vector<std::uint32_t>>();
    const auto ps = j.at("hashes").at("psi").get<std::vector<std::uint32_t>>();
    if (th.size() != 4 || ps.size() != 4) throw std::runtime_error("malformed stage hashes in history");
    r.hashes = StageHashes{th[0], th[1], th[2], th[3], ps[0], ps[1], ps[2], ps[3]};
  }
  return r;
}

json to_json(const EpochRecord& r) {
  return {{"type", "epoch"},
          {"epoch", r.epoch},
          {"steps", r.steps},
          {"train_loss", r.train_loss},
          {"val_loss", opt_json(r.val_loss)},
          {"val", r.val ? report_json(*r.val) : json(nullptr)},
          {"improved", r.improved},
          {"stopped", r.stopped},
          {"contrastive_skipped", r.contrastive_skipped},
          {"regularizers_skipped", r.regularizers_skipped}};
}

EpochRecord epoch_from_json(const json& j) {
  EpochRecord r;
  r.epoch = j.at("epoch").get<std::size_t>();
  r.steps = j.at("steps").get<std::size_t>();
  r.train_loss = j.at("train_loss").get<double>();
  r.val_loss = opt_from<double>(j, "val_loss");
  if (!j.at("val").is_null()) r.val = report_from(j.at("val"));
  r.improved = j.at("improved").get<bool>();
  r.stopped = j.at("stopped").get<bool>();
  r.contrastive_skipped = j.at("contrastive_skipped").get<std::size_t>();
  r.regularizers_skipped = j.at("regularizers_skipped").get<std::size_t>();
  return r;
}

void History::save_jsonl(const fs::path& path) const {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write history " + path.string());
  // Steps of each epoch precede its summary.
  std::size_t s = 0;
  for (const auto& e : epochs) {
    for (; s < steps.size() && steps[s].epoch <= e.epoch; ++s) os << to_json(steps[s]).dump() << '\n';
    os << to_json(e).dump() << '\n';
  }
  for (; s < steps.size(); ++s) os << to_json(steps[s]).dump() << '\n';
  if (!os) throw std::runtime_error("failed writing history " + path.string());
}

History History::load_jsonl(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read history " + path.string());
  History h;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    const std::string type = j.at("type").get<std::string>();
    if (type == "step") {
      h.steps.push_back(step_from_json(j));
    } else if (type == "epoch") {
      h.epochs.push_back(epoch_from_json(j));
    } else {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": unknown record type " + type);
    }
  }
  return h;
}

HistoryAggregate aggregate(const History& history) {
  HistoryAggregate a;
  std::size_t s = 0;
  for (const auto& e : history.epochs) {
    double sum = 0.0;
    std::size_t n = 0;
    std::size_t seen = 0;
    for (; s < history.steps.size() && history.steps[s].epoch == e.epoch; ++s) {
      const auto& r = history.steps[s];
      sum += r.loss * static_cast<double>(r.segments);
      seen += r.segments;
      ++n;
      if (r.adv_parts && r.adv_parts->contrastive_skipped) ++a.contrastive_skipped;
      if (r.stage2 && r.stage2->regularizers_skipped) ++a.regularizers_skipped;
      if (r.minority_absent) ++a.minority_absent;
    }
    a.epoch_steps.push_back(n);
    a.epoch_train_loss.push_back(seen ? sum / static_cast<double>(seen) : 0.0);
  }
  return a;
}

bool replay_consistent(const History& history) {
  const HistoryAggregate a = aggregate(history);
  std::size_t contrastive = 0;
  std::size_t regularizers = 0;
  for (std::size_t i = 0; i < history.epochs.size(); ++i) {
    const auto& e = history.epochs[i];
    if (e.steps != a.epoch_steps[i] || e.train_loss != a.epoch_train_loss[i]) return false;
    contrastive += e.contrastive_skipped;
    regularizers += e.regularizers_skipped;
  }
  for (std::size_t i = 1; i < history.steps.size(); ++i) {
    if (history.steps[i].step != history.steps[i - 1].step + 1) return false;
  }
  return contrastive == a.contrastive_skipped && regularizers == a.regularizers_skipped;
}

Evaluation evaluate_clean(const stmodel::STRegressor& model, const stmodel::LossFn& loss_fn,
                          const std::vector<zidata::SegmentBatch>& batches,
                          const zidata::SpatioTemporalGraph& graph) {
  Evaluation ev;
  metrics::MetricAccumulator acc;
  for (const auto& b : batches) {
    ev.loss += model.loss(loss_fn, b.X, b.Y, graph);
    acc.add_batch(model.predict(b.X, graph), b.Y);
  }
  if (!batches.empty()) ev.loss /= static_cast<double>(batches.size());
  ev.report = acc.report();
  return ev;
}

TrainResult natural_train(stmodel::STRegressor& model, const TrainData& data, const TrainConfig& cfg,
                          const TrainHooks& hooks) {
  if (cfg.mode != Mode::kNatural) throw std::invalid_argument("natural_train needs mode natural");
  return Runner(model, nullptr, data, cfg, hooks).run();
}

TrainResult adversarial_train(stmodel::STRegressor& model, const TrainData& data,
                              const TrainConfig& cfg, const TrainHooks& hooks) {
  if (cfg.mode == Mode::kNatural || cfg.mode == Mode::kMingre) {
    throw std::invalid_argument("adversarial_train needs one of the at_* modes, got " + to_string(cfg.mode));
  }
  return Runner(model, nullptr, data, cfg, hooks).run();
}

TrainResult mingre_train(stmodel::STRegressor& model, mingre::Reweighter& reweighter,
                         const TrainData& data, const TrainConfig& cfg, const TrainHooks& hooks) {
  if (cfg.mode != Mode::kMingre) throw std::invalid_argument("mingre_train needs mode mingre");
  return Runner(model, &reweighter, data, cfg, hooks).run();
}

TrainResult train(stmodel::STRegressor& model, mingre::Reweighter* reweighter, const TrainData& data,
                  const TrainConfig& cfg, const TrainHooks& hooks) {
  switch (cfg.mode) {
    case Mode::kNatural: return natural_train(model, data, cfg, hooks);
    case Mode::kMingre:
      if (!reweighter) throw std::invalid_argument("mingre training needs a reweighter");
      return mingre_train(model, *reweighter, data, cfg, hooks);
    default: return adversarial_train(model, data, cfg, hooks);
  }
}

}  // namespace zistorm::trainer
