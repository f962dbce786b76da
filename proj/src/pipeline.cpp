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

#include "zistorm/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <memory>

#include "zistorm/checksum.hpp"
#include "zistorm/metrics.hpp"
#include "zistorm/report.hpp"

namespace zistorm::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(path.string() + ": invalid JSON: " + e.what());
  }
}

// Write-then-rename so a crash never leaves a truncated file behind.
void write_json_file(const json& j, const fs::path& path) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << j.dump(2) << "\n";
    out.flush();
    if (!out) throw std::runtime_error("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string run_name(const experiment::RunSpec& r) {
  return trainer::to_string(r.mode) + "-" + trainer::to_string(r.loss);
}

std::string utc_stamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

void write_run_stamp(const fs::path& dir, const std::string& verb) {
  write_json_file({{"verb", verb}, {"created_utc", utc_stamp()}, {"zistorm", kVersion}},
                  dir / "run.json");
}

trainer::TrainData train_data(const experiment::ExperimentConfig& c,
                              const experiment::PreparedData& data, Outcome& outcome) {
  trainer::TrainData td{data.split.train, std::nullopt};
  if (data.split.val.length() >= c.history + c.horizon) {
    td.val = data.split.val;
  } else {
    outcome.warnings.push_back(
        "validation split is shorter than history + horizon; early stopping disabled");
  }
  return td;
}

struct LoadedRun {
  experiment::RunSpec spec;
  std::unique_ptr<stmodel::STRegressor> model;
  std::unique_ptr<mingre::Reweighter> reweighter;
  fs::path history;
};

LoadedRun load_run(const experiment::ExperimentConfig& c, const json& entry,
                   const fs::path& base, std::size_t num_nodes, std::size_t feature_dim) {
  LoadedRun r;
  r.spec.mode = trainer::mode_from_string(entry.at("mode").get<std::string>());
  r.spec.loss = trainer::loss_from_string(entry.at("loss").get<std::string>());
  r.model = std::make_unique<stmodel::STRegressor>(experiment::model_config(c), num_nodes,
                                                   feature_dim);
  r.model->params().load(base / entry.at("model").get<std::string>());
  r.model->set_prediction_head(trainer::prediction_head_for(r.spec.loss));
  if (!entry.at("reweighter").is_null()) {
    r.reweighter = std::make_unique<mingre::Reweighter>(c.train.reweighter, feature_dim);
    r.reweighter->params().load(base / entry.at("reweighter").get<std::string>());
  }
  r.history = base / entry.at("history").get<std::string>();
  return r;
}

// Accepts a bundle only when its config hash checks out and every file it
// names is present.
json load_bundle(const fs::path& dir) {
  const json bundle = read_json_file(dir / "results.json");
  const auto cfg = experiment::parse_config(bundle.at("config"));
  if (experiment::config_hash(cfg) != bundle.at("config_hash").get<std::string>()) {
    throw std::runtime_error(dir.string() + ": config hash does not match the embedded config");
  }
  const fs::path base = bundle.contains("train_dir")
                            ? fs::path(bundle.at("train_dir").get<std::string>())
                            : dir;
  for (const auto& run : bundle.at("runs")) {
    for (const char* key : {"history", "model", "reweighter"}) {
      if (run.at(key).is_null()) continue;
      const fs::path p = base / run.at(key).get<std::string>();
      if (!fs::exists(p)) throw std::runtime_error("bundle references a missing file: " + p.string());
    }
  }
  return bundle;
}

json train_bundle_json(const experiment::ExperimentConfig& c, const json& runs, bool complete) {
  return {{"kind", "train"},
          {"complete", complete},
          {"config", experiment::to_json(c)},
          {"config_hash", experiment::config_hash(c)},
          {"training_hash", experiment::training_hash(c)},
          {"environment", environment_stamp()},
          {"runs", runs},
          {"results", json::array()}};
}

}  // namespace

fs::path create_run_dir(const fs::path& root, const std::string& prefix) {
  fs::create_directories(root);
  const std::string base = prefix + "-" + utc_stamp();
  for (int i = 0;; ++i) {
    const fs::path dir = root / (i == 0 ? base : base + "-" + std::to_string(i));
    if (fs::create_directory(dir)) return dir;
  }
}

json environment_stamp() {
  return {{"zistorm", kVersion},
          {"compiler", __VERSION__},
          {"cxx_standard", static_cast<long>(__cplusplus)},
          {"scalar", "float64"}};
}

Outcome generate(const experiment::ExperimentConfig& c, const fs::path& out) {
  if (fs::exists(out) && !fs::is_empty(out)) {
    throw RefusedError("output directory " + out.string() + " already exists and is not empty");
  }
  const zidata::SeriesDataset ds = experiment::materialize_dataset(c);
  zidata::save_dataset(ds, out);
  Outcome o;
  o.dir = out;
  o.messages.push_back("wrote dataset to " + out.string());
  o.messages.push_back("zero_rate " + report::format_number(ds.zero_rate()));
  return o;
}

Outcome train(const experiment::ExperimentConfig& config, const TrainOptions& options) {
  Outcome o;
  experiment::ExperimentConfig c = config;
  json runs = json::array();
  if (!options.resume_dir.empty()) {
    o.dir = options.resume_dir;
    const json bundle = read_json_file(o.dir / "results.json");
    if (bundle.at("complete").get<bool>()) {
      throw RefusedError(o.dir.string() + " is complete; start a new run instead");
    }
    const auto stored = experiment::parse_config(bundle.at("config"));
    if (experiment::training_hash(stored) != experiment::training_hash(c)) {
      if (!options.force) {
        throw RefusedError("config does not match the interrupted run (training hash " +
                           experiment::training_hash(c) + " vs " +
                           bundle.at("training_hash").get<std::string>() +
                           "); pass --force to use the stored config");
      }
      o.warnings.push_back("config differs from the interrupted run; continuing with the stored config");
    }
    c = stored;
    runs = bundle.at("runs");
  } else {
    o.dir = create_run_dir(options.out_root.empty() ? fs::path(c.output_dir) : options.out_root,
                           "train");
    write_run_stamp(o.dir, "train");
    write_json_file(experiment::to_json(c), o.dir / "config.json");
    for (const auto& r : c.runs) {
      const std::string dir = "runs/" + run_name(r);
      runs.push_back({{"mode", trainer::to_string(r.mode)},
                      {"loss", trainer::to_string(r.loss)},
                      {"dir", dir},
                      {"history", dir + "/history.jsonl"},
                      {"model", nullptr},
                      {"reweighter", nullptr},
                      {"meta", dir + "/meta.json"},
                      {"completed", false},
                      {"best_epoch", nullptr},
                      {"early_stopped", false},
                      {"epochs_run", 0}});
    }
  }
  write_json_file(train_bundle_json(c, runs, false), o.dir / "results.json");

  const auto data = experiment::prepare_data(c, experiment::materialize_dataset(c));
  const auto td = train_data(c, data, o);
  const std::size_t N = data.split.train.num_nodes();
  const std::size_t D = data.split.train.feature_dim();

  bool all_done = true;
  for (std::size_t i = 0; i < c.runs.size(); ++i) {
    json& entry = runs[i];
    if (entry.at("completed").get<bool>()) continue;
    const auto& spec = c.runs[i];
    const fs::path run_dir = o.dir / entry.at("dir").get<std::string>();
    fs::create_directories(run_dir);

    stmodel::STRegressor model(experiment::model_config(c), N, D);
    std::unique_ptr<mingre::Reweighter> rw;
    if (spec.mode == trainer::Mode::kMingre) {
      rw = std::make_unique<mingre::Reweighter>(c.train.reweighter, D);
    }
    trainer::TrainHooks hooks;
    hooks.checkpoint_dir = run_dir;
    hooks.resume = fs::exists(run_dir / "state.json");
    hooks.max_epochs_this_run = options.stop_after_epochs;
    const auto result =
        trainer::train(model, rw.get(), td, experiment::train_config(c, spec), hooks);

    for (const auto& e : result.history.epochs) {
      if (e.contrastive_skipped > 0 || e.regularizers_skipped > 0) {
        o.warnings.push_back(run_name(spec) + " epoch " + std::to_string(e.epoch) + ": " +
                             std::to_string(e.contrastive_skipped) + " contrastive and " +
                             std::to_string(e.regularizers_skipped) +
                             " reweighter regularizer terms skipped on single-class batches");
        break;
      }
    }
    entry["epochs_run"] = result.history.epochs.size();
    if (!result.completed) {
      all_done = false;
      o.messages.push_back(run_name(spec) + ": stopped after " +
                           std::to_string(result.history.epochs.size()) + " epochs");
      continue;
    }
    model.params().save(run_dir / "final.zsck");
    entry["model"] = entry.at("dir").get<std::string>() + "/final.zsck";
    if (rw) {
      rw->params().save(run_dir / "reweighter_final.zsck");
      entry["reweighter"] = entry.at("dir").get<std::string>() + "/reweighter_final.zsck";
    }
    entry["completed"] = true;
    entry["early_stopped"] = result.early_stopped;
    entry["best_epoch"] = result.best_epoch ? json(*result.best_epoch) : json(nullptr);

    json losses = json::array();
    json val_rec_min = json::array();
    for (const auto& e : result.history.epochs) {
      losses.push_back(e.train_loss);
      val_rec_min.push_back(e.val ? json(e.val->rec_min) : json(nullptr));
    }
    write_json_file({{"mode", trainer::to_string(spec.mode)},
                     {"loss", trainer::to_string(spec.loss)},
                     {"seed", c.seed},
                     {"epoch", result.history.epochs.empty() ? 0 : result.history.epochs.back().epoch},
                     {"best_epoch", entry["best_epoch"]},
                     {"config", experiment::to_json(c)},
                     {"config_hash", experiment::config_hash(c)},
                     {"training_hash", experiment::training_hash(c)},
                     {"parameter_hash", hex32(model.params().hash())},
                     {"train_loss", losses},
                     {"val_rec_min", val_rec_min}},
                    run_dir / "meta.json");
    o.messages.push_back(run_name(spec) + ": " + std::to_string(result.history.epochs.size()) +
                         " epochs" + (result.early_stopped ? " (early stop)" : ""));
    write_json_file(train_bundle_json(c, runs, false), o.dir / "results.json");
  }
  write_json_file(train_bundle_json(c, runs, all_done), o.dir / "results.json");
  if (!all_done) {
    o.messages.push_back("training interrupted; continue with --resume " + o.dir.string());
  }
  return o;
}

experiment::ExperimentConfig bundle_config(const fs::path& bundle_dir) {
  return experiment::parse_config(read_json_file(bundle_dir / "results.json").at("config"));
}

Outcome evaluate(const experiment::ExperimentConfig& c, const EvaluateOptions& options) {
  Outcome o;
  const fs::path train_dir = fs::weakly_canonical(options.train_dir);
  const json bundle = load_bundle(train_dir);
  if (bundle.at("kind") != "train") {
    throw std::runtime_error(train_dir.string() + " is not a train directory");
  }
  const std::string stored_hash = bundle.at("training_hash").get<std::string>();
  const std::string hash = experiment::training_hash(c);
  if (hash != stored_hash) {
    if (!options.force) {
      throw RefusedError("checkpoint was trained with config hash " + stored_hash +
                         " but the given config hashes to " + hash + "; pass --force to evaluate anyway");
    }
    o.warnings.push_back("evaluating with a config that differs from the training config");
  }
  if (!bundle.at("complete").get<bool>()) {
    throw std::runtime_error(train_dir.string() + " holds an unfinished training run; resume it first");
  }

  const auto data = experiment::prepare_data(c, experiment::materialize_dataset(c));
  const std::size_t N = data.split.train.num_nodes();
  const std::size_t D = data.split.train.feature_dim();
  // Every run in the training bundle is evaluated, in its stored order.
  json runs = json::array();
  json rows = json::array();
  std::vector<experiment::EvalRow> table;
  for (const auto& entry : bundle.at("runs")) {
    LoadedRun run = load_run(c, entry, train_dir, N, D);
    const auto eval_rows =
        experiment::evaluate_run(c, run.spec, *run.model, run.reweighter.get(), data);
    for (const auto& r : eval_rows) {
      rows.push_back(experiment::to_json(r, c.decimals));
      table.push_back(r);
    }
    runs.push_back({{"mode", entry.at("mode")},
                    {"loss", entry.at("loss")},
                    {"history", entry.at("history")},
                    {"model", entry.at("model")},
                    {"reweighter", entry.at("reweighter")},
                    {"best_epoch", entry.at("best_epoch")}});
  }

  o.dir = create_run_dir(options.out_root.empty() ? fs::path(c.output_dir) : options.out_root,
                         "eval");
  write_run_stamp(o.dir, "evaluate");
  const json results = {{"kind", "evaluation"},
                        {"config", experiment::to_json(c)},
                        {"config_hash", experiment::config_hash(c)},
                        {"training_hash", stored_hash},
                        {"forced", hash != stored_hash},
                        {"train_dir", train_dir.string()},
                        {"environment", environment_stamp()},
                        {"runs", runs},
                        {"results", rows}};
  write_json_file(results, o.dir / "results.json");

  report::CsvTable csv;
  csv.header = {"mode", "loss", "attack", "rec_maj", "rec_min", "map_maj", "map_min", "rec_d", "map_d"};
  for (const auto& r : table) {
    auto f = [&](double v) { return report::format_number(metrics::round_to(v, c.decimals)); };
    csv.rows.push_back({r.mode, r.loss, r.attack, f(100 * r.report.rec_maj),
                        f(100 * r.report.rec_min), f(r.report.map_maj), f(r.report.map_min),
                        f(100 * r.report.rec_d), f(r.report.map_d)});
  }
  report::write_csv(csv, o.dir / "table.csv");
  o.messages.push_back("wrote " + std::to_string(table.size()) + " result rows to " +
                       (o.dir / "results.json").string());
  return o;
}

Outcome report(const fs::path& bundle_dir, const fs::path& out_root) {
  Outcome o;
  const json bundle = load_bundle(bundle_dir);
  const auto c = experiment::parse_config(bundle.at("config"));
  const fs::path base = bundle.contains("train_dir")
                            ? fs::path(bundle.at("train_dir").get<std::string>())
                            : bundle_dir;
  o.dir = create_run_dir(out_root.empty() ? fs::absolute(bundle_dir).parent_path() : out_root,
                         "report");
  write_run_stamp(o.dir, "report");

  auto emit = [&](const report::CsvTable& table, const std::string& stem,
                  std::string (*render)(const report::CsvTable&)) {
    report::write_csv(table, o.dir / (stem + ".csv"));
    // Charts are drawn from the file just written, not from memory.
    report::write_text(render(report::read_csv(o.dir / (stem + ".csv"))), o.dir / (stem + ".svg"));
    o.messages.push_back("wrote " + stem + ".csv and " + stem + ".svg");
  };

  const json& results = bundle.at("results");
  if (results.empty()) {
    o.warnings.push_back("recall: bundle has no evaluation results; plot skipped");
  } else {
    report::CsvTable t;
    t.header = {"mode", "loss", "attack", "rec_maj", "rec_min", "rec_d", "map_maj", "map_min", "map_d"};
    for (const auto& r : results) {
      const auto& raw = r.at("raw");
      auto f = [&](const char* k) { return report::format_number(raw.at(k).get<double>()); };
      t.rows.push_back({r.at("mode"), r.at("loss"), r.at("attack"), f("rec_maj"), f("rec_min"),
                        f("rec_d"), f("map_maj"), f("map_min"), f("map_d")});
    }
    emit(t, "recall", report::recall_svg);
  }

  const json& runs = bundle.at("runs");
  if (runs.empty()) throw std::runtime_error("bundle lists no runs");
  // Focus on the MinGRE run when present, then any adversarial run.
  auto find_mode = [&](auto pred) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < runs.size(); ++i) {
      if (pred(runs[i].at("mode").get<std::string>())) return i;
    }
    return std::nullopt;
  };
  const std::size_t focus =
      find_mode([](const std::string& m) { return m == "mingre"; })
          .value_or(find_mode([](const std::string& m) { return m != "natural"; }).value_or(0));
  const json& entry = runs[focus];
  const std::string label = entry.at("mode").get<std::string>() + "/" + entry.at("loss").get<std::string>();

  {
    const auto history = trainer::History::load_jsonl(base / entry.at("history").get<std::string>());
    report::CsvTable t;
    t.header = {"step", "epoch", "class", "magnitude"};
    std::size_t missing = 0;
    for (const auto& s : history.steps) {
      if (s.topk_grad_minority.empty() && s.topk_grad_majority.empty()) ++missing;
      for (double v : s.topk_grad_minority) {
        t.rows.push_back({std::to_string(s.step), std::to_string(s.epoch), "minority",
                          report::format_number(v)});
      }
      for (double v : s.topk_grad_majority) {
        t.rows.push_back({std::to_string(s.step), std::to_string(s.epoch), "majority",
                          report::format_number(v)});
      }
    }
    if (t.rows.empty()) {
      o.warnings.push_back("gradients: run " + label +
                           " has no top-k gradient records in its history; plot skipped");
    } else {
      if (missing > 0) {
        o.warnings.push_back("gradients: " + std::to_string(missing) + " steps of " + label +
                             " lack top-k gradient records");
      }
      emit(t, "gradients", report::gradient_svg);
    }
  }

  std::optional<experiment::PreparedData> data;
  try {
    data = experiment::prepare_data(c, experiment::materialize_dataset(c));
  } catch (const std::exception& e) {
    o.warnings.push_back(std::string("embedding and attention: dataset unavailable (") + e.what() +
                         "); plots skipped");
  }
  if (data) {
    const auto batches = zidata::window(data->split.test, c.history, c.horizon, c.stride,
                                        c.eval_batch_size);
    const auto& batch = batches.front();
    const auto& graph = data->split.test.graph;
    LoadedRun run = load_run(c, entry, base, data->split.train.num_nodes(),
                             data->split.train.feature_dim());
    const auto part = zidata::class_partition(batch);
    {
      const Tensor H = run.model->embed(batch.X, graph).H;
      const std::size_t B = H.dim(0), N = H.dim(1), Dh = H.dim(2);
      const Tensor proj = report::pca_2d(H.reshaped({B * N, Dh}));
      const Tensor alpha = run.model->decode_nb(H).alpha;  // (B, horizon, N)
      const std::size_t hz = alpha.dim(1);
      report::CsvTable t;
      t.header = {"segment", "node", "class", "pc1", "pc2", "alpha"};
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t n = 0; n < N; ++n) {
          double a = 0.0;
          for (std::size_t h = 0; h < hz; ++h) a += alpha[(b * hz + h) * N + n];
          t.rows.push_back({std::to_string(b), std::to_string(n),
                            part.is_minority(b, n) ? "minority" : "majority",
                            report::format_number(proj[(b * N + n) * 2]),
                            report::format_number(proj[(b * N + n) * 2 + 1]),
                            report::format_number(a / static_cast<double>(hz))});
        }
      }
      emit(t, "embedding", report::embedding_svg);
    }
    if (!run.reweighter) {
      o.warnings.push_back("attention: run " + label + " has no trained reweighter; plot skipped");
    } else {
      const auto w = run.reweighter->attention_weights(batch.X);
      const Tensor a1 = w.att1();  // (B, 1, N, 1)
      double te = 0.0;
      for (double v : w.att_te.storage()) te += v;
      te /= static_cast<double>(w.att_te.numel());
      report::CsvTable t;
      t.header = {"segment", "node", "weight"};
      const std::size_t B = a1.dim(0), N = a1.dim(2);
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t n = 0; n < N; ++n) {
          t.rows.push_back({std::to_string(b), std::to_string(n),
                            report::format_number(a1[b * N + n] * te)});
        }
      }
      emit(t, "attention", report::attention_svg);
    }
  }
  return o;
}

}  // namespace zistorm::pipeline
