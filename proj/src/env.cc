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

#include "cartransfer/env.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include <fmt/format.h>

namespace cartransfer {

void EnvParams::Validate() const {
  if (!(dt > 0.0) || !(v_max > 0.0) || !(wheelbase > 0.0) ||
      !(arena_half_width > 0.0) || max_steps <= 0) {
    throw ConfigError("env params: dt, v_max, wheelbase, arena and max_steps must be positive");
  }
}

void Task::Validate(const EnvParams& params) const {
  if (!(goal_radius > 0.0)) {
    throw ConfigError("task '" + task_id + "': goal_radius must be positive");
  }
  if (!goal.allFinite() || std::abs(goal.x()) > params.arena_half_width ||
      std::abs(goal.y()) > params.arena_half_width) {
    throw ConfigError("task '" + task_id + "': goal outside the arena");
  }
}

Task PolarTask(std::string task_id, double angle_deg, double radius,
               double goal_radius) {
  const double angle = angle_deg * std::numbers::pi / 180.0;
  return {std::move(task_id),
          Eigen::Vector2d(radius * std::cos(angle), radius * std::sin(angle)),
          goal_radius};
}

std::vector<Task> DefaultBaseTasks() {
  return {PolarTask("goal_000", 0.0, 6.0), PolarTask("goal_120", 120.0, 6.0),
          PolarTask("goal_240", 240.0, 6.0)};
}

Task DefaultTargetTask() { return PolarTask("target_060", 60.0, 8.0); }

double WrapAngle(double angle) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  double wrapped = std::remainder(angle, kTwoPi);  // [-pi, pi]
  if (wrapped <= -std::numbers::pi) wrapped += kTwoPi;
  return wrapped;
}

CarGoalEnv::CarGoalEnv(EnvParams params) : params_(params) {
  params_.Validate();
}

std::pair<CarState, Vector> CarGoalEnv::Reset(const Task& task,
                                              std::uint64_t seed) const {
  task.Validate(params_);
  Rng rng(DeriveSeed(seed, 0));
  CarState state;
  state.heading = WrapAngle(rng.Uniform(-std::numbers::pi, std::numbers::pi));
  return {state, Observe(state)};
}

CarState CarGoalEnv::Propagate(const CarState& state,
                               const Eigen::Ref<const Vector>& action) const {
  if (action.size() != kActionDim) {
    throw ConfigError("action must have 2 entries (steer, throttle)");
  }
  const double steer = std::clamp(action[0], -1.0, 1.0);
  const double throttle = std::clamp(action[1], -1.0, 1.0);
  const double dt = params_.dt;

  CarState next = state;
  next.speed = std::clamp(state.speed + params_.accel_gain * throttle * dt -
                              params_.drag * state.speed * dt,
                          0.0, params_.v_max);
  next.heading = WrapAngle(state.heading + next.speed / params_.wheelbase *
                                               std::tan(params_.steer_gain * steer) * dt);
  next.position = state.position +
                  next.speed * dt *
                      Eigen::Vector2d(std::cos(next.heading), std::sin(next.heading));
  next.position = next.position.cwiseMax(-params_.arena_half_width)
                      .cwiseMin(params_.arena_half_width);
  next.step_count = state.step_count + 1;
  return next;
}

double CarGoalEnv::Reward(const CarState& prev, const CarState& next,
                          const Task& task) const {
  const Eigen::Vector2d to_goal = task.goal - next.position;
  const double bearing = std::atan2(to_goal.y(), to_goal.x());
  const double d_prev = (task.goal - prev.position).norm();
  const double d_next = to_goal.norm();
  double r = params_.w_align * std::cos(next.heading - bearing) +
             params_.w_progress * (d_prev - d_next);
  if (d_next < task.goal_radius) r += params_.w_goal;
  return r;
}

std::pair<CarState, StepResult> CarGoalEnv::Step(
    const CarState& state, const Eigen::Ref<const Vector>& action,
    const Task& task) const {
  CarState next = Propagate(state, action);
  StepResult result;
  result.reward = Reward(state, next, task);
  result.success = (task.goal - next.position).norm() < task.goal_radius;
  result.done = result.success || next.step_count >= params_.max_steps;
  result.next_obs = Observe(next);
  return {next, result};
}

Vector CarGoalEnv::Observe(const CarState& state) const {
  Vector obs(kObsDim);
  obs << state.position.x(), state.position.y(), std::cos(state.heading),
      std::sin(state.heading), state.speed / params_.v_max;
  return obs;
}

void WriteTrajectoryCsv(std::ostream& out, const std::vector<TrajectoryRow>& rows) {
  out << "step,x,y,heading,speed,steer,throttle,reward,done,success\n";
  for (const auto& row : rows) {
    out << fmt::format("{},{},{},{},{},{},{},{},{},{}\n", row.step,
                       row.state.position.x(), row.state.position.y(),
                       row.state.heading, row.state.speed, row.action.x(),
                       row.action.y(), row.reward, row.done ? 1 : 0,
                       row.success ? 1 : 0);
  }
}

}  // namespace cartransfer
