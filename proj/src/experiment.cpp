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

#include "zistorm/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <thread>
#include <utility>

#include "zistorm/checksum.hpp"
#include "zistorm/losses.hpp"
#include "zistorm/metrics.hpp"

namespace zistorm::experiment {

using nlohmann::json;

namespace {

// Field access that records every key it touches so leftovers can be
// reported as unknown.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  [[noreturn]] static void fail(const std::string& path, const std::string& what) {
    throw ConfigError((path.empty() ? std::string("/") : path) + ": " + what);
  }

  std::string at(const std::string& key) const { return path_ + "/" + key; }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json& get(const std::string& key) {
    if (!j_.contains(key)) fail(at(key), "required field is missing");
    seen_.insert(key);
    return j_.at(key);
  }

  Reader object(const std::string& key) { return Reader(get(key), at(key)); }

  double real(const std::string& key, double lo, double hi, bool lo_open = false) {
    const json& v = get(key);
    if (!v.is_number()) fail(at(key), "expected a number");
    const double x = v.get<double>();
    const bool lo_ok = lo_open ? x > lo : x >= lo;
    if (!std::isfinite(x) || !lo_ok || x > hi) {
      fail(at(key), "value " + v.dump() + " outside " + (lo_open ? "(" : "[") +
                        json(lo).dump() + ", " + json(hi).dump() + "]");
    }
    return x;
  }

  std::uint64_t integer(const std::string& key, std::uint64_t lo,
                        std::uint64_t hi = UINT64_MAX) {
    const json& v = get(key);
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() &&
                                   v.get<std::int64_t>() < 0)) {
      fail(at(key), "expected a non-negative integer");
    }
    const auto x = v.get<std::uint64_t>();
    if (x < lo || x > hi) {
      fail(at(key), "value " + v.dump() + " outside [" + std::to_string(lo) + ", " +
                        std::to_string(hi) + "]");
    }
    return x;
  }

  bool boolean(const std::string& key) {
    const json& v = get(key);
    if (!v.is_boolean()) fail(at(key), "expected true or false");
    return v.get<bool>();
  }

  std::string choice(const std::string& key, const std::vector<std::string>& allowed) {
    const json& v = get(key);
    if (!v.is_string()) fail(at(key), "expected a string");
    const auto s = v.get<std::string>();
    if (std::find(allowed.begin(), allowed.end(), s) == allowed.end()) {
      std::string list;
      for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
      fail(at(key), "unknown value \"" + s + "\" (expected one of " + list + ")");
    }
    return s;
  }

  std::string text(const std::string& key) {
    const json& v = get(key);
    if (!v.is_string() || v.get<std::string>().empty()) {
      fail(at(key), "expected a non-empty string");
    }
    return v.get<std::string>();
  }

  const json& array(const std::string& key) {
    const json& v = get(key);
    if (!v.is_array() || v.empty()) fail(at(key), "expected a non-empty array");
    return v;
  }

  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.count(key)) fail(at(key), "unknown field");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

const std::vector<std::string> kModes = {"natural", "at_random", "at_degree",
                                         "at_pagerank", "at_tnds", "mingre"};
const std::vector<std::string> kLosses = {"wrmse", "nb", "adv"};
const std::vector<std::string> kStrategies = {"random", "degree", "pagerank", "saliency",
                                              "mingre"};

attack::AttackBudget read_budget(Reader& r) {
  attack::AttackBudget b;
  b.epsilon = r.real("epsilon", 0.0, 1e6);
  b.eta = r.real("eta", 0.0, 1.0, true);
  b.step_alpha = r.real("step_alpha", 0.0, 1e6);
  b.num_iters = r.integer("num_iters", 1, 100000);
  if (b.step_alpha > b.epsilon) {
    Reader::fail(r.at("step_alpha"), "must not exceed epsilon");
  }
  return b;
}

json budget_json(const attack::AttackBudget& b) {
  return {{"epsilon", b.epsilon},
          {"eta", b.eta},
          {"step_alpha", b.step_alpha},
          {"num_iters", b.num_iters}};
}

std::string weight_rule_name(losses::WeightRule rule) {
  return rule == losses::WeightRule::kUniform ? "uniform" : "one_plus_label";
}

std::string mapping_name(losses::NbMapping m) {
  return m == losses::NbMapping::kLiteral ? "literal" : "nb2";
}

std::string hash_of(const json& j) {
  Crc32 crc;
  crc.update(j.dump());
  return hex32(crc.value());
}

}  // namespace

ExperimentConfig parse_config(const json& j) {
  ExperimentConfig c;
  Reader root(j, "");
  c.seed = root.integer("seed", 0);
  c.output_dir = root.text("output_dir");

  {
    Reader ds = root.object("dataset");
    const bool synth = ds.has("synthetic");
    const bool path = ds.has("path");
    if (synth == path) {
      Reader::fail("/dataset", "exactly one of \"synthetic\" or \"path\" is required");
    }
    if (synth) {
      Reader s = ds.object("synthetic");
      SyntheticSpec spec;
      spec.num_nodes = s.integer("num_nodes", 2, 100000);
      spec.length = s.integer("length", 2, 10000000);
      spec.feature_dim = s.integer("feature_dim", 1, 4096);
      spec.zero_rate = s.real("zero_rate", 0.0, 1.0, true);
      if (spec.zero_rate >= 1.0) Reader::fail(s.at("zero_rate"), "must be below 1");
      spec.seed = s.integer("seed", 0);
      s.finish();
      c.dataset.synthetic = spec;
    } else {
      c.dataset.path = ds.text("path");
    }
    ds.finish();
  }

  {
    Reader sp = root.object("split");
    c.train_fraction = sp.real("train", 0.0, 1.0, true);
    c.val_fraction = sp.real("val", 0.0, 1.0);
    if (c.train_fraction + c.val_fraction >= 1.0) {
      Reader::fail("/split", "train + val must leave a non-empty test split");
    }
    sp.finish();
  }

  {
    Reader w = root.object("windows");
    c.history = w.integer("history", 1, 100000);
    c.horizon = w.integer("horizon", 1, 100000);
    c.stride = w.integer("stride", 1, 100000);
    w.finish();
  }

  {
    Reader m = root.object("model");
    c.model.hidden_dim = m.integer("hidden_dim", 1, 4096);
    c.model.num_gc_layers = m.integer("num_gc_layers", 1, 64);
    c.model.recurrent_dim = m.integer("recurrent_dim", 1, 4096);
    c.model.dropout = m.real("dropout", 0.0, 1.0);
    if (c.model.dropout >= 1.0) Reader::fail(m.at("dropout"), "must be below 1");
    m.finish();
  }

  {
    Reader t = root.object("train");
    auto& tc = c.train;
    tc.epochs = t.integer("epochs", 1, 100000);
    tc.batch_size = t.integer("batch_size", 1, 100000);
    tc.learning_rate = t.real("learning_rate", 0.0, 1e3, true);
    tc.clean_ratio = t.real("clean_ratio", 0.0, 1.0);
    tc.patience = t.integer("patience", 0);
    tc.shuffle = t.boolean("shuffle");
    tc.weight_rule = t.choice("weight_rule", {"one_plus_label", "uniform"}) == "uniform"
                         ? losses::WeightRule::kUniform
                         : losses::WeightRule::kOnePlusLabel;
    {
      Reader a = t.object("attack");
      tc.budget = read_budget(a);
      tc.per_segment_mask = a.boolean("per_segment_mask");
      a.finish();
    }
    {
      Reader a = t.object("adv_loss");
      tc.adv.beta1 = a.real("beta1", 0.0, 1e6);
      tc.adv.beta2 = a.real("beta2", 0.0, 1e6);
      tc.adv.gamma = a.real("gamma", 0.0, 1e6, true);
      tc.adv.tau = a.real("tau", 0.0, 1e6, true);
      tc.adv.mapping = a.choice("nb_mapping", {"nb2", "literal"}) == "literal"
                           ? losses::NbMapping::kLiteral
                           : losses::NbMapping::kNb2;
      a.finish();
    }
    {
      Reader r = t.object("reweighter");
      auto& rw = tc.reweighter;
      rw.encoder.model_dim = r.integer("model_dim", 1, 4096);
      rw.encoder.num_heads = r.integer("num_heads", 1, 4096);
      rw.encoder.ffn_dim = r.integer("ffn_dim", 1, 65536);
      rw.encoder.mlp_hidden = r.integer("mlp_hidden", 1, 65536);
      rw.learning_rate = r.real("learning_rate", 0.0, 1e3, true);
      rw.mask_temperature = r.real("mask_temperature", 0.0, 1e6, true);
      {
        Reader l = r.object("lambdas");
        rw.lambdas.task = l.real("task", 0.0, 1e6);
        rw.lambdas.gap = l.real("gap", 0.0, 1e6);
        rw.lambdas.minority = l.real("minority", 0.0, 1e6);
        rw.lambdas.majority = l.real("majority", 0.0, 1e6);
        l.finish();
      }
      const std::string s2 = r.choice("stage2_loss", {"same", "wrmse", "nb", "adv"});
      if (s2 == "same") {
        tc.stage2_loss.reset();
      } else {
        tc.stage2_loss = trainer::loss_from_string(s2);
      }
      if (rw.encoder.model_dim % rw.encoder.num_heads != 0) {
        Reader::fail(r.at("num_heads"), "must divide model_dim");
      }
      r.finish();
    }
    const json& runs = t.array("runs");
    std::set<std::pair<std::string, std::string>> unique;
    for (std::size_t i = 0; i < runs.size(); ++i) {
      const std::string p = t.at("runs") + "/" + std::to_string(i);
      Reader r(runs[i], p);
      RunSpec run;
      const std::string mode = r.choice("mode", kModes);
      const std::string loss = r.choice("loss", kLosses);
      r.finish();
      if (!unique.insert({mode, loss}).second) Reader::fail(p, "duplicate run");
      run.mode = trainer::mode_from_string(mode);
      run.loss = trainer::loss_from_string(loss);
      if (run.mode == trainer::Mode::kMingre && run.loss != losses::LossKind::kAdv) {
        Reader::fail(p + "/loss", "mode mingre requires loss adv");
      }
      c.runs.push_back(run);
    }
    t.finish();
  }

  {
    const json& attacks = root.array("attacks");
    std::set<std::string> names;
    for (std::size_t i = 0; i < attacks.size(); ++i) {
      const std::string p = "/attacks/" + std::to_string(i);
      Reader r(attacks[i], p);
      AttackEntry a;
      a.name = r.text("name");
      if (a.name == "clean") Reader::fail(r.at("name"), "\"clean\" is reserved");
      if (!names.insert(a.name).second) Reader::fail(r.at("name"), "duplicate attack name");
      a.strategy = r.choice("strategy", kStrategies);
      a.budget = read_budget(r);
      a.per_segment_mask = r.boolean("per_segment_mask");
      if (a.is_mingre()) {
        a.fit_steps = r.integer("fit_steps", 0, 1000000);
      } else if (r.has("fit_steps")) {
        Reader::fail(r.at("fit_steps"), "only allowed for strategy mingre");
      }
      r.finish();
      c.attacks.push_back(a);
    }
  }

  {
    Reader m = root.object("metrics");
    c.decimals = static_cast<int>(m.integer("decimals", 0, 12));
    c.eval_batch_size = m.integer("batch_size", 1, 100000);
    m.finish();
  }
  root.finish();

  set_seed(c, c.seed);
  c.model.history = c.history;
  c.model.horizon = c.horizon;
  c.train.stride = c.stride;
  try {
    c.model.validate();
    for (const auto& run : c.runs) train_config(c, run).validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("/: ") + e.what());
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in, nullptr, true, false);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": invalid JSON: " + e.what());
  }
  return parse_config(j);
}

json to_json(const ExperimentConfig& c) {
  json dataset;
  if (c.dataset.synthetic) {
    const auto& s = *c.dataset.synthetic;
    dataset["synthetic"] = {{"num_nodes", s.num_nodes},
                            {"length", s.length},
                            {"feature_dim", s.feature_dim},
                            {"zero_rate", s.zero_rate},
                            {"seed", s.seed}};
  } else {
    dataset["path"] = c.dataset.path.value_or("");
  }
  const auto& tc = c.train;
  json runs = json::array();
  for (const auto& r : c.runs) {
    runs.push_back({{"mode", trainer::to_string(r.mode)}, {"loss", trainer::to_string(r.loss)}});
  }
  json attack_budget = budget_json(tc.budget);
  attack_budget["per_segment_mask"] = tc.per_segment_mask;
  const auto& rw = tc.reweighter;
  json train = {
      {"runs", runs},
      {"epochs", tc.epochs},
      {"batch_size", tc.batch_size},
      {"learning_rate", tc.learning_rate},
      {"clean_ratio", tc.clean_ratio},
      {"patience", tc.patience},
      {"shuffle", tc.shuffle},
      {"weight_rule", weight_rule_name(tc.weight_rule)},
      {"attack", attack_budget},
      {"adv_loss",
       {{"beta1", tc.adv.beta1},
        {"beta2", tc.adv.beta2},
        {"gamma", tc.adv.gamma},
        {"tau", tc.adv.tau},
        {"nb_mapping", mapping_name(tc.adv.mapping)}}},
      {"reweighter",
       {{"model_dim", rw.encoder.model_dim},
        {"num_heads", rw.encoder.num_heads},
        {"ffn_dim", rw.encoder.ffn_dim},
        {"mlp_hidden", rw.encoder.mlp_hidden},
        {"learning_rate", rw.learning_rate},
        {"mask_temperature", rw.mask_temperature},
        {"lambdas",
         {{"task", rw.lambdas.task},
          {"gap", rw.lambdas.gap},
          {"minority", rw.lambdas.minority},
          {"majority", rw.lambdas.majority}}},
        {"stage2_loss", tc.stage2_loss ? trainer::to_string(*tc.stage2_loss) : "same"}}}};
  json attacks = json::array();
  for (const auto& a : c.attacks) {
    json e = budget_json(a.budget);
    e["name"] = a.name;
    e["strategy"] = a.strategy;
    e["per_segment_mask"] = a.per_segment_mask;
    if (a.is_mingre()) e["fit_steps"] = a.fit_steps;
    attacks.push_back(e);
  }
  return {{"seed", c.seed},
          {"output_dir", c.output_dir},
          {"dataset", dataset},
          {"split", {{"train", c.train_fraction}, {"val", c.val_fraction}}},
          {"windows", {{"history", c.history}, {"horizon", c.horizon}, {"stride", c.stride}}},
          {"model",
           {{"hidden_dim", c.model.hidden_dim},
            {"num_gc_layers", c.model.num_gc_layers},
            {"recurrent_dim", c.model.recurrent_dim},
            {"dropout", c.model.dropout}}},
          {"train", train},
          {"attacks", attacks},
          {"metrics", {{"decimals", c.decimals}, {"batch_size", c.eval_batch_size}}}};
}

void set_seed(ExperimentConfig& c, std::uint64_t seed) {
  c.seed = seed;
  c.model.seed = seed;
  c.train.seed = seed;
  c.train.reweighter.encoder.seed = seed;
}

std::string config_hash(const ExperimentConfig& c) { return hash_of(to_json(c)); }

std::string training_hash(const ExperimentConfig& c) {
  json j = to_json(c);
  json t;
  for (const char* key : {"seed", "dataset", "split", "windows", "model", "train"}) t[key] = j[key];
  return hash_of(t);
}

zidata::SeriesDataset materialize_dataset(const ExperimentConfig& c) {
  if (c.dataset.synthetic) {
    const auto& s = *c.dataset.synthetic;
    return zidata::generate_synthetic_zid(s.num_nodes, s.length, s.feature_dim, s.zero_rate,
                                          s.seed);
  }
  return zidata::load_dataset(*c.dataset.path);
}

PreparedData prepare_data(const ExperimentConfig& c, zidata::SeriesDataset dataset) {
  PreparedData out;
  out.split = zidata::split_chronological(dataset, c.train_fraction, c.val_fraction);
  out.stats = zidata::feature_stats(out.split.train);
  zidata::standardize(out.split.train, out.stats);
  zidata::standardize(out.split.val, out.stats);
  zidata::standardize(out.split.test, out.stats);
  const std::size_t need = c.history + c.horizon;
  if (out.split.train.length() < need || out.split.test.length() < need) {
    throw ConfigError("/split: train and test splits need at least history + horizon steps");
  }
  return out;
}

stmodel::RegressorConfig model_config(const ExperimentConfig& c) { return c.model; }

trainer::TrainConfig train_config(const ExperimentConfig& c, const RunSpec& run) {
  trainer::TrainConfig t = c.train;
  t.mode = run.mode;
  t.loss = run.loss;
  return t;
}

namespace {

std::size_t worker_limit() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("ZISTORM_NUM_THREADS")) {
    char* end = nullptr;
    const unsigned long v = std::strtoul(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) n = v;
  }
  return n;
}

double victim_minority_fraction(const attack::PerturbationMask& mask,
                                const zidata::ClassPartition& part) {
  std::size_t victims = 0;
  std::size_t minority = 0;
  for (std::size_t b = 0; b < mask.batch(); ++b) {
    for (std::size_t n : mask.nodes(b)) {
      ++victims;
      if (part.is_minority(b, n)) ++minority;
    }
  }
  return victims == 0 ? 0.0 : static_cast<double>(minority) / static_cast<double>(victims);
}

mingre::Reweighter fit_reweighter(const ExperimentConfig& c, const stmodel::STRegressor& model,
                                  const stmodel::LossFn& loss_fn,
                                  const stmodel::LossFn& stage2_loss, const AttackEntry& entry,
                                  const PreparedData& data) {
  mingre::Reweighter rw(c.train.reweighter, model.feature_dim());
  const auto batches =
      zidata::window(data.split.train, c.history, c.horizon, c.stride, c.train.batch_size);
  const auto& graph = data.split.train.graph;
  for (std::size_t step = 0; step < entry.fit_steps; ++step) {
    const auto& batch = batches[step % batches.size()];
    attack::AttackSpec spec{entry.name, attack::Strategy::kSaliency, entry.budget, 0, false,
                            entry.per_segment_mask};
    const auto adv = mingre::stage1_attack_step(model, rw, loss_fn, batch.X, batch.Y, graph, spec);
    mingre::stage2_reweighter_update(model, rw, stage2_loss, batch.X, batch.Y, graph, adv, spec);
  }
  return rw;
}

}  // namespace

std::vector<EvalRow> evaluate_run(const ExperimentConfig& c, const RunSpec& run,
                                  const stmodel::STRegressor& model,
                                  const mingre::Reweighter* reweighter,
                                  const PreparedData& data) {
  const auto batches =
      zidata::window(data.split.test, c.history, c.horizon, c.stride, c.eval_batch_size);
  const auto& graph = data.split.test.graph;
  const auto loss_fn = losses::make_loss(run.loss, c.train.adv, c.train.weight_rule);
  const auto stage2_loss = losses::make_loss(c.train.stage2_loss.value_or(run.loss),
                                             c.train.adv, c.train.weight_rule);

  std::vector<EvalRow> rows;
  EvalRow clean;
  clean.mode = trainer::to_string(run.mode);
  clean.loss = trainer::to_string(run.loss);
  clean.attack = "clean";
  {
    metrics::MetricAccumulator acc;
    for (const auto& b : batches) acc.add_batch(model.predict(b.X, graph), b.Y);
    clean.report = acc.report();
  }
  rows.push_back(clean);

  // Reweighters for MinGRE attacks are fitted up front so the parallel
  // section only reads shared state.
  std::vector<std::optional<mingre::Reweighter>> fitted(c.attacks.size());
  for (std::size_t i = 0; i < c.attacks.size(); ++i) {
    if (c.attacks[i].is_mingre() && reweighter == nullptr) {
      fitted[i].emplace(fit_reweighter(c, model, loss_fn, stage2_loss, c.attacks[i], data));
    }
  }

  std::vector<EvalRow> attacked(c.attacks.size());
  auto run_attack = [&](std::size_t i) {
    const AttackEntry& entry = c.attacks[i];
    const mingre::Reweighter* rw = fitted[i] ? &*fitted[i] : reweighter;
    attack::AttackSpec spec;
    spec.name = entry.name;
    spec.strategy = entry.is_mingre() ? attack::Strategy::kSaliency
                                      : attack::strategy_from_string(entry.strategy);
    spec.budget = entry.budget;
    spec.seed = c.seed + 1000003ULL * (i + 1);
    spec.per_segment_mask = entry.per_segment_mask;

    double fraction_sum = 0.0;
    double increase_sum = 0.0;
    const auto table = attack::clean_vs_adv_eval(
        model, batches, graph, [&](const zidata::SegmentBatch& batch, std::size_t index) {
          attack::AttackSpec s = spec;
          s.seed = spec.seed + 0x9E3779B97F4A7C15ULL * (index + 1);
          attack::AdversarialExample ae =
              entry.is_mingre()
                  ? mingre::mingre_generate(model, loss_fn, batch.X, batch.Y, graph,
                                            rw->attention_weights(batch.X), s)
                  : attack::generate(model, loss_fn, batch.X, batch.Y, graph, s);
          fraction_sum += victim_minority_fraction(ae.mask, zidata::class_partition(batch));
          increase_sum += ae.final_loss() - ae.clean_loss();
          return ae;
        });
    EvalRow row;
    row.mode = clean.mode;
    row.loss = clean.loss;
    row.attack = entry.name;
    row.report = table.adversarial;
    const double n = static_cast<double>(std::max<std::size_t>(1, batches.size()));
    row.minority_fraction = fraction_sum / n;
    row.mean_loss_increase = increase_sum / n;
    attacked[i] = row;
  };

  const std::size_t workers = std::min(worker_limit(), c.attacks.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < c.attacks.size(); ++i) run_attack(i);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < c.attacks.size(); i += workers) run_attack(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  rows.insert(rows.end(), attacked.begin(), attacked.end());
  return rows;
}

json to_json(const EvalRow& row, int decimals) {
  const auto& r = row.report;
  auto round = [&](double v) { return metrics::round_to(v, decimals); };
  json raw = {{"rec_maj", r.rec_maj}, {"rec_min", r.rec_min}, {"map_maj", r.map_maj},
              {"map_min", r.map_min}, {"rec_d", r.rec_d},     {"map_d", r.map_d}};
  json display = {{"rec_maj", round(100.0 * r.rec_maj)}, {"rec_min", round(100.0 * r.rec_min)},
                  {"map_maj", round(r.map_maj)},         {"map_min", round(r.map_min)},
                  {"rec_d", round(100.0 * r.rec_d)},     {"map_d", round(r.map_d)}};
  json j = {{"mode", row.mode},
            {"loss", row.loss},
            {"attack", row.attack},
            {"display", display},
            {"raw", raw},
            {"instants", r.instants},
            {"skipped_min", r.skipped_min},
            {"skipped_maj", r.skipped_maj}};
  j["minority_fraction"] = row.minority_fraction ? json(*row.minority_fraction) : json(nullptr);
  j["mean_loss_increase"] =
      row.mean_loss_increase ? json(*row.mean_loss_increase) : json(nullptr);
  return j;
}

}  // namespace zistorm::experiment
