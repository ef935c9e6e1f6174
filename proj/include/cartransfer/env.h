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

// CarGoal: drive a planar kinematic car from the arena centre to a goal
// region that the policy cannot observe. Tasks differ only by goal point.

#ifndef CARTRANSFER_ENV_H_
#define CARTRANSFER_ENV_H_

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "cartransfer/math_core.h"

namespace cartransfer {

inline constexpr int kObsDim = 5;     // x, y, cos(heading), sin(heading), speed/v_max
inline constexpr int kActionDim = 2;  // steer, throttle

struct EnvParams {
  double dt = 0.1;
  double v_max = 3.0;
  double accel_gain = 2.0;
  double drag = 0.1;
  double wheelbase = 0.5;
  double steer_gain = 0.6;  // radians of wheel angle per unit steer
  double arena_half_width = 10.0;
  int max_steps = 1000;
  double w_align = 0.05;
  double w_progress = 1.0;
  double w_goal = 100.0;

  void Validate() const;
};

struct Task {
  std::string task_id;
  Eigen::Vector2d goal = Eigen::Vector2d::Zero();
  double goal_radius = 1.0;

  void Validate(const EnvParams& params) const;
  bool operator==(const Task& other) const = default;
};

// Goal on a circle around the arena centre; angle in degrees.
Task PolarTask(std::string task_id, double angle_deg, double radius,
               double goal_radius = 1.0);
// Three goals at 0, 120 and 240 degrees, 6 m from the centre.
std::vector<Task> DefaultBaseTasks();
// 60 degrees, 8 m: outside the convex hull of the default base goals.
Task DefaultTargetTask();

struct CarState {
  Eigen::Vector2d position = Eigen::Vector2d::Zero();
  double heading = 0.0;  // (-pi, pi]
  double speed = 0.0;    // [0, v_max]
  int step_count = 0;

  bool operator==(const CarState& other) const = default;
};

struct StepResult {
  Vector next_obs;
  double reward = 0.0;
  bool done = false;
  bool success = false;
};

// Wraps an angle to (-pi, pi].
double WrapAngle(double angle);

// Stateless simulator; every method is a pure function of its arguments.
class CarGoalEnv {
 public:
  explicit CarGoalEnv(EnvParams params = {});

  const EnvParams& params() const { return params_; }

  // Car at the arena centre, heading uniform from the seed's stream.
  std::pair<CarState, Vector> Reset(const Task& task, std::uint64_t seed) const;

  std::pair<CarState, StepResult> Step(const CarState& state,
                                       const Eigen::Ref<const Vector>& action,
                                       const Task& task) const;

  // Kinematic update only (no reward, no termination).
  CarState Propagate(const CarState& state,
                     const Eigen::Ref<const Vector>& action) const;

  double Reward(const CarState& prev, const CarState& next,
                const Task& task) const;

  Vector Observe(const CarState& state) const;

 private:
  EnvParams params_;
};

// One row of a trajectory log.
struct TrajectoryRow {
  int step = 0;
  CarState state;
  Eigen::Vector2d action = Eigen::Vector2d::Zero();
  double reward = 0.0;
  bool done = false;
  bool success = false;
};

// CSV with header step,x,y,heading,speed,steer,throttle,reward,done,success.
void WriteTrajectoryCsv(std::ostream& out, const std::vector<TrajectoryRow>& rows);

}  // namespace cartransfer

#endif  // CARTRANSFER_ENV_H_
