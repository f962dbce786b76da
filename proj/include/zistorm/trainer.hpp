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

#ifndef ZISTORM_TRAINER_HPP_
#define ZISTORM_TRAINER_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "zistorm/attack.hpp"
#include "zistorm/losses.hpp"
#include "zistorm/metrics.hpp"
#include "zistorm/mingre.hpp"
#include "zistorm/stmodel.hpp"
#include "zistorm/zidata.hpp"

// Natural training, attack-based adversarial training and the alternating
// reweighter/target loop, with JSON-lines histories and resumable
// checkpoints.
namespace zistorm::trainer {

enum class Mode { kNatural, kAtRandom, kAtDegree, kAtPagerank, kAtTnds, kMingre };

std::string to_string(Mode mode);
Mode mode_from_string(const std::string& name);
// Victim selection used by an adversarial mode; empty for natural training.
std::optional<attack::Strategy> attack_strategy(Mode mode);

std::string to_string(losses::LossKind kind);
losses::LossKind loss_from_string(const std::string& name);

struct TrainConfig {
  Mode mode = Mode::kNatural;
  losses::LossKind loss = losses::LossKind::kWrmse;
  losses::WeightRule weight_rule = losses::WeightRule::kOnePlusLabel;
  losses::AdvLossConfig adv;
  std::size_t epochs = 20;
  std::size_t batch_size = 8;
  std::size_t stride = 1;
  double learning_rate = 1e-2;
  attack::AttackBudget budget;
  bool per_segment_mask = false;
  // Share of batches trained on clean inputs in adversarial modes.
  double clean_ratio = 0.0;
  // Epochs without a validation Rec-min improvement before stopping; 0 runs
  // every epoch.
  std::size_t patience = 10;
  bool shuffle = true;
  std::uint64_t seed = 0;
  mingre::ReweighterConfig reweighter;
  // Task loss inside the reweighter objective; the training loss if unset.
  std::optional<losses::LossKind> stage2_loss;

  void validate() const;
};

// Parameter hashes around each phase of one alternating step.
struct StageHashes {
  std::uint32_t theta_start = 0;
  std::uint32_t theta_after_attack = 0;
  std::uint32_t theta_after_update = 0;
  std::uint32_t theta_after_reweight = 0;
  std::uint32_t psi_start = 0;
  std::uint32_t psi_after_attack = 0;
  std::uint32_t psi_after_update = 0;
  std::uint32_t psi_after_reweight = 0;

  // Target frozen during attack and reweighting; reweighter frozen during
  // attack and target update.
  bool separated() const {
    return theta_start == theta_after_attack && theta_after_update == theta_after_reweight &&
           psi_start == psi_after_attack && psi_after_attack == psi_after_update;
  }
};

struct StepRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  std::size_t batch = 0;
  std::size_t segments = 0;
  std::string strategy = "none";
  bool clean_batch = true;
  double loss = 0.0;  // objective of the target update
  double clean_loss = 0.0;
  std::optional<double> adv_loss;
  std::optional<losses::AdvLossParts> adv_parts;
  std::size_t victims = 0;
  std::optional<double> minority_fraction;  // share of victims with a minority pair
  std::optional<double> gradient_gap;
  std::optional<mingre::Stage2Breakdown> stage2;
  // Largest per-(segment, node) gradient magnitudes, split by class.
  std::vector<double> topk_grad_minority;
  std::vector<double> topk_grad_majority;
  std::optional<StageHashes> hashes;
  bool minority_absent = false;
};

struct EpochRecord {
  std::size_t epoch = 0;
  std::size_t steps = 0;
  double train_loss = 0.0;  // step losses weighted by segment count
  std::optional<double> val_loss;
  std::optional<metrics::MetricReport> val;
  bool improved = false;
  bool stopped = false;
  std::size_t contrastive_skipped = 0;
  std::size_t regularizers_skipped = 0;
};

nlohmann::json to_json(const StepRecord& r);
nlohmann::json to_json(const EpochRecord& r);
StepRecord step_from_json(const nlohmann::json& j);
EpochRecord epoch_from_json(const nlohmann::json& j);

struct History {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;

  // One object per line, each tagged with "type": "step" or "epoch".
  void save_jsonl(const std::filesystem::path& path) const;
  static History load_jsonl(const std::filesystem::path& path);
};

// Epoch summaries recomputed from the step records alone.
struct HistoryAggregate {
  std::vector<double> epoch_train_loss;
  std::vector<std::size_t> epoch_steps;
  std::size_t contrastive_skipped = 0;
  std::size_t regularizers_skipped = 0;
  std::size_t minority_absent = 0;
};

HistoryAggregate aggregate(const History& history);
// True when every epoch record matches the aggregate of its steps exactly.
bool replay_consistent(const History& history);

struct TrainData {
  zidata::SeriesDataset train;
  std::optional<zidata::SeriesDataset> val;
};

using AttentionOverride = std::function<mingre::AttentionWeights(const zidata::SegmentBatch&)>;

struct TrainHooks {
  // Replaces the reweighter output during attack generation.
  AttentionOverride attention_override;
  std::function<void(const StepRecord&)> on_step;
  // Epoch-end checkpoints and the best model go here when set.
  std::filesystem::path checkpoint_dir;
  // Continue from the checkpoint in checkpoint_dir and its stored history.
  bool resume = false;
  // Stop after this many epochs in this call (for interrupted runs).
  std::optional<std::size_t> max_epochs_this_run;
};

struct TrainResult {
  History history;
  std::optional<std::size_t> best_epoch;
  double best_val_rec_min = 0.0;
  bool early_stopped = false;
  bool completed = false;
};

TrainResult natural_train(stmodel::STRegressor& model, const TrainData& data,
                          const TrainConfig& cfg, const TrainHooks& hooks = {});
TrainResult adversarial_train(stmodel::STRegressor& model, const TrainData& data,
                              const TrainConfig& cfg, const TrainHooks& hooks = {});
TrainResult mingre_train(stmodel::STRegressor& model, mingre::Reweighter& reweighter,
                         const TrainData& data, const TrainConfig& cfg,
                         const TrainHooks& hooks = {});

// Dispatches on cfg.mode; the reweighter is required for mingre.
TrainResult train(stmodel::STRegressor& model, mingre::Reweighter* reweighter,
                  const TrainData& data, const TrainConfig& cfg, const TrainHooks& hooks = {});

// Loss value and ranking metrics on clean batches.
struct Evaluation {
  double loss = 0.0;
  metrics::MetricReport report;
};
Evaluation evaluate_clean(const stmodel::STRegressor& model, const stmodel::LossFn& loss_fn,
                          const std::vector<zidata::SegmentBatch>& batches,
                          const zidata::SpatioTemporalGraph& graph);

// Point predictions follow the NB mean for likelihood-based losses.
stmodel::PredictionHead prediction_head_for(losses::LossKind kind);

}  // namespace zistorm::trainer

#endif  // ZISTORM_TRAINER_HPP_
