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

// Rollout evaluation with Wilson confidence intervals, switching-rate
// measurement and one-axis sweeps over epsilon, alpha or demo budget.

#ifndef CARTRANSFER_EVAL_H_
#define CARTRANSFER_EVAL_H_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string_view>
#include <vector>

#include "cartransfer/env.h"
#include "cartransfer/pipelines.h"
#include "cartransfer/policies.h"

namespace cartransfer {

// two-sided 95%
inline constexpr double kZ95 = 1.959963984540054;

struct WilsonInterval {
  double low = 0.0;
  double high = 1.0;
};

WilsonInterval Wilson(int successes, int n, double z = kZ95);

struct EvalReport {
  int n_episodes = 0;
  int successes = 0;
  double success_rate = 0.0;
  double ci_low = 0.0;
  double ci_high = 1.0;
  double mean_return = 0.0;
  double mean_episode_len = 0.0;
  // switches per 100 steps; switching policies only
  std::optional<double> switching_rate;

  bool operator==(const EvalReport&) const = default;
};

struct EvalOptions {
  int n_episodes = 100;
  std::uint64_t seed = 0;
  ActMode mode = ActMode::kMean;
  int threads = 1;
};

// Per-episode weight vectors logged by switching policies.
using WeightLog = std::vector<std::vector<Vector>>;

// Runs n seeded episodes with a fresh clone of `policy` each (per-episode
// state is reset). Fills `weight_log` for switching policies when non-null.
EvalReport Evaluate(const Actor& policy, const Task& task, const EvalOptions& options,
                    const EnvParams& env_params = {}, WeightLog* weight_log = nullptr);

// 100 * (steps where the selection changed) / (total steps). The first step
// of each episode is never a switch. Throws on empty logs.
double SwitchingRate(const std::vector<std::vector<int>>& selections);

// Replays logged weights through the hysteresis rule with a new epsilon.
std::vector<std::vector<int>> ReplaySelections(const WeightLog& weights, double epsilon);
double ReplaySwitchingRate(const WeightLog& weights, double epsilon);

// Weights of `policy` along each episode of `data`, in record order.
WeightLog DatasetWeights(const SwitchingPolicy& policy, const TransitionDataset& data);
// Hard-switching rate of `policy` replayed along the dataset's own states.
double DatasetSwitchingRate(const SwitchingPolicy& policy, const TransitionDataset& data,
                            double epsilon);

enum class SweepAxis { kEpsilon, kAlpha, kDemoBudget };

std::string_view SweepAxisName(SweepAxis axis);
SweepAxis ParseSweepAxis(std::string_view name);

struct SweepSpec {
  SweepAxis axis = SweepAxis::kEpsilon;
  std::vector<double> values;
  AdaptSpec adapt;
  EvalOptions eval;
  std::uint64_t demo_seed = 0;   // demo_budget axis: collection seed
  double demo_noise = 0.0;       // demo_budget axis: execution noise

  void Validate() const;
};

struct SweepRow {
  double value = 0.0;
  EvalReport report;
  double final_loss = 0.0;
  // switching methods: hard-switching rate replayed on the training data
  std::optional<double> data_switching_rate;
};

// epsilon: one hard-switching network trained once, re-evaluated per value.
// alpha: one adaptation per value on `demos`.
// demo_budget: fresh expert demonstrations of each size, then adaptation.
// Every grid point uses the same evaluation seeds.
std::vector<SweepRow> Sweep(const SweepSpec& spec, const std::vector<BasePolicyPtr>& bases,
                            const TransitionDataset& demos, const EnvParams& env_params = {});

// Header: <axis>,success,ci_low,ci_high,switching_rate,data_switching_rate,final_loss
void WriteSweepCsv(std::ostream& out, SweepAxis axis, const std::vector<SweepRow>& rows);

}  // namespace cartransfer

#endif  // CARTRANSFER_EVAL_H_
