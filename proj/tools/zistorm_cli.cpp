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

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "zistorm/experiment.hpp"
#include "zistorm/pipeline.hpp"

namespace fs = std::filesystem;
using namespace zistorm;

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfigError = 2, kRefused = 3 };

void print(const pipeline::Outcome& o) {
  for (const auto& m : o.messages) std::cout << m << "\n";
  for (const auto& w : o.warnings) std::cerr << "warning: " << w << "\n";
  if (!o.dir.empty()) std::cout << "output: " << o.dir.string() << "\n";
  std::cout.flush();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"zistorm: adversarial attacks and minority-aware adversarial training for "
               "zero-inflated spatiotemporal graph regression"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool force = false;
  std::string checkpoint;
  std::string resume;
  std::optional<std::size_t> stop_after;
  std::string bundle;

  auto* gen = app.add_subcommand("generate", "Write the configured dataset in the zidata format");
  gen->add_option("--config", config_path, "Experiment config (JSON)")->required();
  gen->add_option("--out", out, "Dataset directory (default: <output_dir>/dataset-<time>)");
  gen->add_option("--seed", seed, "Synthetic dataset seed");

  auto* tr = app.add_subcommand("train", "Train every configured run");
  tr->add_option("--config", config_path, "Experiment config (JSON)");
  tr->add_option("--out", out, "Parent of the new run directory (default: output_dir)");
  tr->add_option("--seed", seed, "Master seed");
  tr->add_option("--resume", resume, "Continue an interrupted train directory");
  tr->add_option("--stop-after-epochs", stop_after,
                 "Stop each run after this many epochs in this invocation");
  tr->add_flag("--force", force, "Resume even when the config differs from the stored one");

  auto* ev = app.add_subcommand("evaluate", "Clean and attacked metrics for a trained directory");
  ev->add_option("--checkpoint", checkpoint, "Train run directory")->required();
  ev->add_option("--config", config_path, "Experiment config (default: the stored one)");
  ev->add_option("--out", out, "Parent of the new evaluation directory (default: output_dir)");
  ev->add_option("--seed", seed, "Master seed");
  ev->add_flag("--force", force, "Evaluate even when the config hash differs from training");

  auto* rep = app.add_subcommand("report", "CSV tables and SVG charts for a results bundle");
  rep->add_option("bundle", bundle, "Evaluation or train directory")->required();
  rep->add_option("--out", out, "Parent of the report directory (default: next to the bundle)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      auto cfg = experiment::load_config(config_path);
      if (seed && cfg.dataset.synthetic) cfg.dataset.synthetic->seed = *seed;
      const fs::path dir =
          out.empty() ? pipeline::create_run_dir(cfg.output_dir, "dataset") : fs::path(out);
      print(pipeline::generate(cfg, dir));
    } else if (*tr) {
      if (config_path.empty() && resume.empty()) {
        std::cerr << "error: train needs --config or --resume\n";
        return kConfigError;
      }
      auto cfg = config_path.empty() ? pipeline::bundle_config(resume)
                                     : experiment::load_config(config_path);
      if (seed) experiment::set_seed(cfg, *seed);
      pipeline::TrainOptions opts;
      opts.out_root = out;
      opts.resume_dir = resume;
      opts.force = force;
      opts.stop_after_epochs = stop_after;
      print(pipeline::train(cfg, opts));
    } else if (*ev) {
      auto cfg = config_path.empty() ? pipeline::bundle_config(checkpoint)
                                     : experiment::load_config(config_path);
      if (seed) experiment::set_seed(cfg, *seed);
      pipeline::EvaluateOptions opts;
      opts.train_dir = checkpoint;
      opts.out_root = out;
      opts.force = force;
      print(pipeline::evaluate(cfg, opts));
    } else if (*rep) {
      print(pipeline::report(bundle, out));
    }
  } catch (const experiment::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const pipeline::RefusedError& e) {
    std::cerr << "refused: " << e.what() << "\n";
    return kRefused;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kOk;
}
