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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include "cartransfer/env.h"

namespace cartransfer {
namespace {

Vector Action(double steer, double throttle) {
  Vector a(2);
  a << steer, throttle;
  return a;
}

Task GoalAt(double x, double y) {
  Task t;
  t.task_id = "test";
  t.goal = {x, y};
  return t;
}

TEST_CASE("reset is deterministic per seed") {
  const CarGoalEnv env;
  const Task task = DefaultTargetTask();
  const auto [s1, o1] = env.Reset(task, 42);
  const auto [s2, o2] = env.Reset(task, 42);
  CHECK(s1 == s2);
  CHECK(o1 == o2);
  CHECK(s1.speed == 0.0);
  CHECK(s1.step_count == 0);
  CHECK(s1.position == Eigen::Vector2d::Zero());
}

TEST_CASE("reset headings differ across seeds") {
  const CarGoalEnv env;
  std::set<double> headings;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const CarState s = env.Reset(DefaultTargetTask(), seed).first;
    CHECK(s.heading > -std::numbers::pi);
    CHECK(s.heading <= std::numbers::pi);
    headings.insert(s.heading);
  }
  CHECK(headings.size() == 100);
}

TEST_CASE("statics: no speed and no throttle leaves the car in place") {
  const CarGoalEnv env;
  const Task task = GoalAt(5.0, 0.0);
  CarState s;
  s.position = {1.0, 1.0};
  s.heading = 0.7;
  const auto [next, r] = env.Step(s, Action(0.5, 0.0), task);
  CHECK(next.position == s.position);
  CHECK(next.heading == s.heading);
  CHECK(next.step_count == 1);
  // progress term vanishes, only alignment remains
  const Eigen::Vector2d to_goal = task.goal - s.position;
  const double align = 0.05 * std::cos(s.heading - std::atan2(to_goal.y(), to_goal.x()));
  CHECK(r.reward == doctest::Approx(align).epsilon(1e-14));
  CHECK_FALSE(r.done);
}

TEST_CASE("entering the goal region ends the episode with the bonus") {
  const CarGoalEnv env;
  const Task task = GoalAt(5.0, 0.0);
  CarState s;
  s.position = {3.95, 0.0};
  s.speed = 1.0;
  const auto [next, r] = env.Step(s, Action(0.0, 1.0), task);
  CHECK(r.success);
  CHECK(r.done);
  CHECK(r.reward > 100.0);
}

TEST_CASE("single Euler step matches a hand computation") {
  const CarGoalEnv env;
  CarState s;
  s.position = {1.0, 2.0};
  s.heading = 0.3;
  s.speed = 1.5;
  // speed' = 1.5 + 2*0.7*0.1 - 0.1*1.5*0.1
  // heading' = 0.3 + speed'/0.5 * tan(0.6*0.4) * 0.1
  // position' = position + speed' * 0.1 * (cos, sin)(heading')
  const CarState next = env.Propagate(s, Action(0.4, 0.7));
  CHECK(std::abs(next.speed - 1.625) <= 1e-12);
  CHECK(std::abs(next.heading - 0.3795329283822011) <= 1e-12);
  CHECK(std::abs(next.position.x() - 1.1509361393632793) <= 1e-12);
  CHECK(std::abs(next.position.y() - 2.060204084862314) <= 1e-12);
}

TEST_CASE("reward examples") {
  const CarGoalEnv env;
  const Task task = GoalAt(5.0, 0.0);
  CarState s;  // at the origin
  s.heading = 0.0;
  CHECK(env.Reward(s, s, task) == doctest::Approx(0.05).epsilon(1e-14));
  s.heading = std::numbers::pi;
  CHECK(env.Reward(s, s, task) == doctest::Approx(-0.05).epsilon(1e-14));

  CarState prev;
  CarState next;
  next.position = {0.5, 0.0};
  next.heading = std::numbers::pi / 3.0;
  CHECK(env.Reward(prev, next, task) == doctest::Approx(0.05 * 0.5 + 0.5).epsilon(1e-12));
}

TEST_CASE("episodes stop at 1000 steps") {
  const CarGoalEnv env;
  const Task task = DefaultTargetTask();
  CarState s = env.Reset(task, 1).first;
  int steps = 0;
  for (;;) {
    auto [next, r] = env.Step(s, Action(0.0, 0.0), task);
    s = next;
    ++steps;
    if (r.done) {
      CHECK_FALSE(r.success);
      break;
    }
    REQUIRE(steps < 1000);
  }
  CHECK(steps == 1000);
  CHECK(s.step_count == 1000);
}

TEST_CASE("random rollouts keep speed, heading and position in bounds") {
  const CarGoalEnv env;
  const Task task = GoalAt(9.5, 9.5);
  Rng rng(3);
  CarState s = env.Reset(task, 3).first;
  for (int i = 0; i < 20000; ++i) {
    const Vector a = 3.0 * rng.NormalVector(2);  // often outside the unit box
    s = env.Propagate(s, a);
    s.step_count = 0;
    CHECK(s.speed >= 0.0);
    CHECK(s.speed <= 3.0);
    CHECK(s.heading > -std::numbers::pi);
    CHECK(s.heading <= std::numbers::pi);
    CHECK(s.position.cwiseAbs().maxCoeff() <= 10.0);
    const Vector obs = env.Observe(s);
    CHECK(std::abs(obs[2] * obs[2] + obs[3] * obs[3] - 1.0) <= 1e-9);
    CHECK(obs.allFinite());
  }
}

TEST_CASE("actions are clamped to the unit box") {
  const CarGoalEnv env;
  CarState s;
  s.speed = 1.0;
  CHECK(env.Propagate(s, Action(5.0, 9.0)) == env.Propagate(s, Action(1.0, 1.0)));
  CHECK(env.Propagate(s, Action(-5.0, -9.0)) == env.Propagate(s, Action(-1.0, -1.0)));
}

TEST_CASE("dynamics are deterministic") {
  const CarGoalEnv env;
  CarState s;
  s.position = {-2.0, 3.0};
  s.heading = -1.1;
  s.speed = 2.2;
  const Task task = DefaultTargetTask();
  const auto a = env.Step(s, Action(-0.3, 0.2), task);
  const auto b = env.Step(s, Action(-0.3, 0.2), task);
  CHECK(a.first == b.first);
  CHECK(a.second.next_obs == b.second.next_obs);
  CHECK(a.second.reward == b.second.reward);
}

TEST_CASE("the goal never reaches the observation") {
  const CarGoalEnv env;
  const Task a = GoalAt(8.0, -8.0);
  const Task b = GoalAt(-8.0, 8.0);
  auto [sa, oa] = env.Reset(a, 17);
  auto [sb, ob] = env.Reset(b, 17);
  CHECK(oa == ob);
  Rng rng(17);
  for (int i = 0; i < 300; ++i) {
    const Vector act = rng.NormalVector(2);
    auto ra = env.Step(sa, act, a);
    auto rb = env.Step(sb, act, b);
    sa = ra.first;
    sb = rb.first;
    CHECK(ra.second.next_obs == rb.second.next_obs);
  }
}

TEST_CASE("positions are clamped to the arena") {
  const CarGoalEnv env;
  CarState s;
  s.position = {9.95, 0.0};
  s.speed = 3.0;
  const CarState next = env.Propagate(s, Action(0.0, 1.0));
  CHECK(next.position.x() == 10.0);
}

TEST_CASE("task validation") {
  const EnvParams params;
  CHECK_NOTHROW(DefaultTargetTask().Validate(params));
  CHECK_THROWS_AS(GoalAt(11.0, 0.0).Validate(params), ConfigError);
  Task t = GoalAt(1.0, 1.0);
  t.goal_radius = 0.0;
  CHECK_THROWS_AS(t.Validate(params), ConfigError);
}

TEST_CASE("default task layout") {
  const std::vector<Task> bases = DefaultBaseTasks();
  REQUIRE(bases.size() == 3);
  for (const Task& t : bases) CHECK(t.goal.norm() == doctest::Approx(6.0));
  CHECK(bases[1].goal.y() == doctest::Approx(6.0 * std::sin(2.0 * std::numbers::pi / 3.0)));
  const Task target = DefaultTargetTask();
  CHECK(target.goal.norm() == doctest::Approx(8.0));
  CHECK(std::atan2(target.goal.y(), target.goal.x()) == doctest::Approx(std::numbers::pi / 3.0));
}

TEST_CASE("wrap angle range") {
  CHECK(WrapAngle(std::numbers::pi) == doctest::Approx(std::numbers::pi));
  CHECK(WrapAngle(-std::numbers::pi) == doctest::Approx(std::numbers::pi));
  CHECK(WrapAngle(3.0 * std::numbers::pi / 2.0) == doctest::Approx(-std::numbers::pi / 2.0));
}

TEST_CASE("trajectory csv header") {
  std::ostringstream out;
  TrajectoryRow row;
  row.step = 3;
  row.done = true;
  WriteTrajectoryCsv(out, {row});
  CHECK(out.str() == "step,x,y,heading,speed,steer,throttle,reward,done,success\n"
                     "3,0,0,0,0,0,0,0,1,0\n");
}

}  // namespace
}  // namespace cartransfer
