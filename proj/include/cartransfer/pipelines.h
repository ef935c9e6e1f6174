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

// End-to-end stages: pre-train one base policy per base task, collect expert
// demonstrations on the target task, and adapt the frozen bases to it.

#ifndef CARTRANSFER_PIPELINES_H_
#define CARTRANSFER_PIPELINES_H_

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "cartransfer/dataset.h"
#include "cartransfer/env.h"
#include "cartransfer/optim.h"
#include "cartransfer/policies.h"

namespace cartransfer {

// ---------------------------------------------------------------------------
// pre-training

struct PretrainSpec {
  std::vector<Task> base_tasks;
  std::vector<int> hidden = {64, 64};
  double log_std = 0.0;
  double init_gain = 1.0;
  CemConfig cem;
  // Episodes per objective evaluation, always started from the same seeds.
  int episodes_per_eval = 8;
  // Step cap for search rollouts; evaluation always uses the full episode.
  int rollout_horizon = 150;
  int eval_episodes = 100;
  double success_gate = 0.9;
  // Fresh searches (new init, search stream and objective episodes) tried
  // after a gate miss before giving up.
  int restarts = 2;
  std::uint64_t seed = 0;

  void Validate(const EnvParams& env) const;
};

// Thrown when policy search misses the success gate; carries what was found.
class PretrainGateError : public std::runtime_error {
 public:
  PretrainGateError(const std::string& what, BasePolicy best, double success_rate)
      : std::runtime_error(what), best_(std::move(best)), success_rate_(success_rate) {}
  const BasePolicy& best() const { return best_; }
  double success_rate() const { return success_rate_; }

 private:
  BasePolicy best_;
  double success_rate_;
};

struct PretrainResult {
  BasePolicy policy;
  double success_rate = 0.0;  // on its own task, eval_episodes episodes
  std::vector<CemIteration> history;  // of the accepted search
  int attempts = 1;
};

// CEM direct policy search over the flattened network maximising the mean
// undiscounted return of mean-mode rollouts. Throws PretrainGateError with the
// best attempt when every attempt misses the gate.
PretrainResult TrainBasePolicy(const Task& task, const PretrainSpec& spec,
                               const EnvParams& env_params = {}, int threads = 1);

// ---------------------------------------------------------------------------
// demonstrations

// Goal-aware controller: proportional steering toward the goal bearing,
// throttle proportional to distance with a floor.
Vector ScriptedExpertAction(const Vector& obs, const Task& task);

class ScriptedExpert final : public Actor {
 public:
  explicit ScriptedExpert(Task task) : task_(std::move(task)) {}
  Vector Act(const Vector& obs, ActMode, Rng&) override {
    return ScriptedExpertAction(obs, task_);
  }
  std::unique_ptr<Actor> Clone() const override {
    return std::make_unique<ScriptedExpert>(*this);
  }

 private:
  Task task_;
};

// Runs whole episodes (seeds derived from `seed`) until the retained
// successful episodes hold at least `budget` timesteps. Failed episodes are
// discarded. Throws if no episode succeeds within 10x budget timesteps.
// `execution_noise` perturbs the executed actions only; the recorded action
// is always the actor's own output.
TransitionDataset CollectDemos(const Actor& actor, const Task& task, int budget,
                               std::uint64_t seed, const EnvParams& env_params = {},
                               int threads = 1, DataSource source = DataSource::kExpert,
                               double execution_noise = 0.0);

// ---------------------------------------------------------------------------
// adaptation

enum class AdaptMethod { kObsAlign, kActionAlign, kActionRealign, kSoftSwitch, kHardSwitch };

std::string_view AdaptMethodName(AdaptMethod method);
// Throws ConfigError listing the valid names.
AdaptMethod ParseAdaptMethod(std::string_view name);
const std::vector<std::string>& AdaptMethodNames();

struct AdaptSpec {
  AdaptMethod method = AdaptMethod::kObsAlign;
  Task target_task;
  int demo_budget = 2000;
  double alpha = 0.9;
  double epsilon = 0.1;
  CemConfig cem;
  SgdConfig sgd;
  std::vector<int> switch_hidden = {64};
  std::uint64_t seed = 0;  // switching-network initialisation

  void Validate() const;
};

using TargetPolicyVariant =
    std::variant<ObsAlignPolicy, ActionAlignPolicy, ActionReAlignPolicy, SwitchingPolicy>;

struct TargetPolicy {
  AdaptMethod method;
  TargetPolicyVariant policy;
  int chosen_base = -1;  // ensemble methods only

  std::unique_ptr<Actor> MakeActor() const;
};

struct AdaptReport {
  AdaptMethod method;
  std::vector<double> per_base_losses;  // ensemble methods: one per base
  int chosen_base = -1;
  double final_loss = 0.0;
  std::vector<double> loss_history;  // CEM best-ever per iteration or SGD epoch loss
};

struct AdaptResult {
  TargetPolicy policy;
  AdaptReport report;
};

// Ensemble methods train one transform per base and keep the lowest-loss
// pair; switching methods train a weighting network over all bases. Base
// policies are never modified.
AdaptResult Adapt(const std::vector<BasePolicyPtr>& bases, const TransitionDataset& data,
                  const AdaptSpec& spec, int threads = 1);

}  // namespace cartransfer

#endif  // CARTRANSFER_PIPELINES_H_
