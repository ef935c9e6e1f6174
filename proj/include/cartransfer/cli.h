// Copyright 2026 The CarTransfer Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Experiment configuration and the command-line driver.

#ifndef CARTRANSFER_CLI_H_
#define CARTRANSFER_CLI_H_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "cartransfer/env.h"
#include "cartransfer/eval.h"
#include "cartransfer/pipelines.h"
#include "cartransfer/serialization.h"

namespace cartransfer {

struct SweepGrid {
  std::vector<double> values;
  AdaptMethod method = AdaptMethod::kHardSwitch;
};

// One JSON document describes a whole experiment. `seed` is mandatory.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  EnvParams env;
  std::vector<Task> base_tasks;
  Task target_task;
  PretrainSpec pretrain;  // base_tasks and seed are filled from the fields above
  int demo_budget = 2000;
  double demo_noise = 0.0;
  AdaptSpec adapt;        // target_task, demo_budget and seeds filled in as well
  int eval_episodes = 100;
  ActMode eval_mode = ActMode::kMean;
  std::map<SweepAxis, SweepGrid> sweeps;

  // Per-stage seeds derived from `seed`.
  std::uint64_t collect_seed() const;
  std::uint64_t adapt_seed() const;
  std::uint64_t eval_seed() const;

  void Validate() const;
};

ExperimentConfig ConfigFromJson(const Json& j);
Json ToJson(const ExperimentConfig& config);
ExperimentConfig LoadConfig(const std::filesystem::path& path);
// 8 hex digits of a hash over the serialized config.
std::string ConfigHash(const ExperimentConfig& config);

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// Subcommands: pretrain, collect, adapt, eval, sweep. Returns the exit code.
int RunCli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cartransfer

#endif  // CARTRANSFER_CLI_H_
