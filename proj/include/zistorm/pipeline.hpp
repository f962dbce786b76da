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

#ifndef ZISTORM_PIPELINE_HPP_
#define ZISTORM_PIPELINE_HPP_

#include <cstddef>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "zistorm/experiment.hpp"

// The four command-line verbs as library calls. Each one writes a fresh
// run directory and never modifies a completed one.
namespace zistorm::pipeline {

// A precondition the caller can override with --force (hash mismatch), or
// an attempt to write into a completed run directory.
class RefusedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Outcome {
  std::filesystem::path dir;
  std::vector<std::string> messages;
  std::vector<std::string> warnings;
};

// Creates root/<prefix>-<UTC timestamp>, adding a numeric suffix on collision.
std::filesystem::path create_run_dir(const std::filesystem::path& root,
                                     const std::string& prefix);

// Build description stored in bundles. Contains no time or host data.
nlohmann::json environment_stamp();

// Writes the configured dataset to `out`, which must not exist yet.
Outcome generate(const experiment::ExperimentConfig& config, const std::filesystem::path& out);

struct TrainOptions {
  std::filesystem::path out_root;  // defaults to config.output_dir
  // Continue an interrupted train directory instead of creating one.
  std::filesystem::path resume_dir;
  bool force = false;
  // Stop each run after this many epochs in this invocation.
  std::optional<std::size_t> stop_after_epochs;
};
Outcome train(const experiment::ExperimentConfig& config, const TrainOptions& options);

// Config stored in a train or evaluation bundle.
experiment::ExperimentConfig bundle_config(const std::filesystem::path& bundle_dir);

struct EvaluateOptions {
  std::filesystem::path train_dir;
  std::filesystem::path out_root;  // defaults to config.output_dir
  bool force = false;
};
Outcome evaluate(const experiment::ExperimentConfig& config, const EvaluateOptions& options);

// Reads an evaluation or train bundle and writes CSVs and SVG charts into
// a new report directory under out_root (default: the bundle's parent).
Outcome report(const std::filesystem::path& bundle_dir, const std::filesystem::path& out_root = {});

}  // namespace zistorm::pipeline

#endif  // ZISTORM_PIPELINE_HPP_
