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

#include "cartransfer/rollout.h"

#include <algorithm>

namespace cartransfer {

EpisodeLog RunEpisode(const CarGoalEnv& env, const Task& task, Actor& actor,
                      std::uint64_t seed, const RolloutOptions& options) {
  auto [state, obs] = env.Reset(task, seed);
  Rng rng(DeriveSeed(seed, 1));
  Rng noise_rng(DeriveSeed(seed, 2));
  actor.BeginEpisode();

  EpisodeLog log;
  for (;;) {
    const Vector action = actor.Act(obs, options.mode, rng);
    if (const auto selection = actor.LastSelection()) log.selections.push_back(*selection);
    if (const Vector* w = actor.LastWeights(); w != nullptr && w->size() > 0) {
      log.weights.push_back(*w);
    }
    Vector executed = action;
    if (options.execution_noise > 0.0) {
      for (Eigen::Index i = 0; i < executed.size(); ++i) {
        executed[i] = std::clamp(executed[i] + options.execution_noise * noise_rng.Normal(),
                                 -1.0, 1.0);
      }
    }
    auto [next, result] = env.Step(state, executed, task);
    if (options.record_transitions) {
      log.transitions.push_back({obs, action, result.next_obs, 0, log.length});
    }
    if (options.record_trajectory) {
      log.trajectory.push_back({log.length, next,
                                Eigen::Vector2d(executed[0], executed[1]),
                                result.reward, result.done, result.success});
    }
    log.total_return += result.reward;
    ++log.length;
    state = next;
    obs = std::move(result.next_obs);
    if (result.done || log.length >= options.horizon) {
      log.success = result.success;
      return log;
    }
  }
}

}  // namespace cartransfer
