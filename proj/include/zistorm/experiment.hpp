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

#ifndef ZISTORM_EXPERIMENT_HPP_
#define ZISTORM_EXPERIMENT_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "zistorm/attack.hpp"
#include "zistorm/mingre.hpp"
#include "zistorm/stmodel.hpp"
#include "zistorm/trainer.hpp"
#include "zistorm/zidata.hpp"

// Experiment configuration, data preparation and the clean/attacked
// evaluation table shared by the command-line verbs.
namespace zistorm::experiment {

// Schema violation; the message starts with the JSON pointer of the field.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SyntheticSpec {
  std::size_t num_nodes = 16;
  std::size_t length = 400;
  std::size_t feature_dim = 2;
  double zero_rate = 0.9;
  std::uint64_t seed = 0;
};

// Exactly one of the two is set.
struct DatasetSpec {
  std::optional<SyntheticSpec> synthetic;
  std::optional<std::string> path;
};

struct RunSpec {
  trainer::Mode mode = trainer::Mode::kNatural;
  losses::LossKind loss = losses::LossKind::kWrmse;
};

struct AttackEntry {
  std::string name;
  // "random", "degree", "pagerank", "saliency" or "mingre".
  std::string strategy;
  attack::AttackBudget budget;
  bool per_segment_mask = false;
  // Stage-two steps used to fit a reweighter for models trained without one.
  std::size_t fit_steps = 0;

  bool is_mingre() const { return strategy == "mingre"; }
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string output_dir;
  DatasetSpec dataset;
  double train_fraction = 0.6;
  double val_fraction = 0.2;
  std::size_t history = 6;
  std::size_t horizon = 2;
  std::size_t stride = 1;
  stmodel::RegressorConfig model;
  trainer::TrainConfig train;
  std::vector<RunSpec> runs;
  std::vector<AttackEntry> attacks;
  int decimals = 4;
  std::size_t eval_batch_size = 16;
};

// Strict parse: every field is required and unknown keys are rejected.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
// Canonical form; parse_config(to_json(c)) reproduces c.
nlohmann::json to_json(const ExperimentConfig& c);

// Replaces the master seed and every seed derived from it.
void set_seed(ExperimentConfig& c, std::uint64_t seed);

// CRC-32 of the canonical JSON, as 8 hex digits.
std::string config_hash(const ExperimentConfig& c);
// Same over the parts that determine trained parameters (data, model, train).
std::string training_hash(const ExperimentConfig& c);

zidata::SeriesDataset materialize_dataset(const ExperimentConfig& c);

struct PreparedData {
  zidata::DatasetSplit split;  // standardized with train statistics
  zidata::FeatureStats stats;
};
PreparedData prepare_data(const ExperimentConfig& c, zidata::SeriesDataset dataset);

stmodel::RegressorConfig model_config(const ExperimentConfig& c);
trainer::TrainConfig train_config(const ExperimentConfig& c, const RunSpec& run);

struct EvalRow {
  std::string mode;
  std::string loss;
  std::string attack;  // "clean" for the unattacked row
  metrics::MetricReport report;
  std::optional<double> minority_fraction;  // mean share of minority-bearing victims
  std::optional<double> mean_loss_increase;
};

// One clean row plus one row per configured attack. Models trained
// without a reweighter get one fitted with stage-two steps for MinGRE
// attacks.
std::vector<EvalRow> evaluate_run(const ExperimentConfig& c, const RunSpec& run,
                                  const stmodel::STRegressor& model,
                                  const mingre::Reweighter* reweighter,
                                  const PreparedData& data);

nlohmann::json to_json(const EvalRow& row, int decimals);

}  // namespace zistorm::experiment

#endif  // ZISTORM_EXPERIMENT_HPP_
