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

#ifndef CARTRANSFER_ROLLOUT_H_
#define CARTRANSFER_ROLLOUT_H_

#include <cstdint>
#include <limits>
#include <vector>

#include "cartransfer/dataset.h"
#include "cartransfer/env.h"
#include "cartransfer/policies.h"

namespace cartransfer {

struct RolloutOptions {
  ActMode mode = ActMode::kMean;
  // Stop after this many steps even if the environment has not ended.
  int horizon = std::numeric_limits<int>::max();
  // Std of Gaussian noise added to the executed action (then clamped to
  // [-1, 1]). Recorded transitions keep the actor's action.
  double execution_noise = 0.0;
  bool record_transitions = false;
  bool record_trajectory = false;
};

struct EpisodeLog {
  double total_return = 0.0;
  int length = 0;
  bool success = false;
  std::vector<int> selections;        // switching policies only
  std::vector<Vector> weights;        // switching policies only
  std::vector<Transition> transitions;
  std::vector<TrajectoryRow> trajectory;
};

// Runs one episode from Reset(task, seed). The actor's sampling noise and the
// execution noise use streams derived from the same seed. BeginEpisode() is
// called first.
EpisodeLog RunEpisode(const CarGoalEnv& env, const Task& task, Actor& actor,
                      std::uint64_t seed, const RolloutOptions& options = {});

}  // namespace cartransfer

#endif  // CARTRANSFER_ROLLOUT_H_
