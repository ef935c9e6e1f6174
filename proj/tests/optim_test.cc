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
#include <limits>

#include "cartransfer/optim.h"

namespace cartransfer {
namespace {

double Rosenbrock(double x, double y) {
  return (1.0 - x) * (1.0 - x) + 100.0 * (y - x * x) * (y - x * x);
}

TEST_CASE("cem finds the optimum of a quadratic") {
  CemConfig config;
  config.iterations = 50;
  config.init_std = 2.0;  // the start is 3.6 away
  config.seed = 1;
  const CemResult r = CemOptimize(
      [](const Vector& x) { return (x - Eigen::Vector2d(3.0, -2.0)).squaredNorm(); }, 2, config);
  CHECK(std::abs(r.best_params[0] - 3.0) <= 1e-2);
  CHECK(std::abs(r.best_params[1] + 2.0) <= 1e-2);
  CHECK(r.history.size() == 50);
}

TEST_CASE("cem on a constant objective decays to the std floor") {
  CemConfig config;
  config.iterations = 100;
  config.init_std = 0.5;
  config.seed = 2;
  const Vector init = Vector::Constant(3, 1.0);
  const CemResult r = CemOptimize([](const Vector&) { return 4.0; }, init, config);
  CHECK(r.best_value == 4.0);
  CHECK(r.best_params == init);
  CHECK(r.final_std.maxCoeff() == doctest::Approx(config.std_floor));
  CHECK((r.final_mean - init).cwiseAbs().maxCoeff() <= 1.0);
}

TEST_CASE("cem on Rosenbrock agrees with a grid search") {
  // oracle: grid over [-2, 2]^2 with spacing 1e-3
  double grid_best = std::numeric_limits<double>::infinity();
  double gx = 0.0, gy = 0.0;
  for (int i = 0; i <= 4000; ++i) {
    for (int j = 0; j <= 4000; ++j) {
      const double x = -2.0 + 1e-3 * i, y = -2.0 + 1e-3 * j;
      const double f = Rosenbrock(x, y);
      if (f < grid_best) {
        grid_best = f;
        gx = x;
        gy = y;
      }
    }
  }
  CemConfig config;
  config.population = 64;
  config.iterations = 300;
  config.init_std = 1.0;
  // a smaller floor collapses the search before it follows the valley
  config.std_floor = 1e-2;
  config.seed = 3;
  const CemResult r = CemOptimize([](const Vector& p) { return Rosenbrock(p[0], p[1]); }, 2, config);
  CHECK(r.best_value <= 1e-3);
  CHECK(r.best_value <= grid_best + 1e-3);
  CHECK(std::abs(r.best_params[0] - gx) <= 0.05);
  CHECK(std::abs(r.best_params[1] - gy) <= 0.1);
}

TEST_CASE("cem best-ever record never gets worse") {
  CemConfig config;
  config.iterations = 60;
  config.population = 20;
  config.init_std = 2.0;
  config.seed = 4;
  const CemResult r = CemOptimize(
      [](const Vector& p) { return std::sin(3.0 * p[0]) + p.squaredNorm() * 0.1 + std::cos(p[1]); },
      2, config);
  for (std::size_t i = 1; i < r.history.size(); ++i) {
    CHECK(r.history[i].best <= r.history[i - 1].best);
  }
  CHECK(r.best_value == r.history.back().best);
}

TEST_CASE("cem ranks are invariant to monotone transforms") {
  CemConfig config;
  config.iterations = 30;
  config.seed = 5;
  auto f = [](const Vector& p) { return 0.1 * (p - Vector::Constant(3, 0.5)).squaredNorm(); };
  const CemResult a = CemOptimize(f, 3, config);
  const CemResult b = CemOptimize([&](const Vector& p) { return std::exp(f(p)); }, 3, config);
  CHECK(a.best_params == b.best_params);
  CHECK(a.final_mean == b.final_mean);
  CHECK(a.final_std == b.final_std);
}

TEST_CASE("cem is deterministic and independent of the thread count") {
  CemConfig config;
  config.iterations = 20;
  config.seed = 6;
  auto f = [](const Vector& p) { return std::abs(p[0] - 1.0) + std::abs(p[1] + p[2]); };
  const CemResult a = CemOptimize(f, 3, config, 1);
  const CemResult b = CemOptimize(f, 3, config, 8);
  CHECK(a.best_params == b.best_params);
  CHECK(a.final_mean == b.final_mean);
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].best == b.history[i].best);
    CHECK(a.history[i].mean == b.history[i].mean);
  }
}

TEST_CASE("cem ranks non-finite values last and aborts when all are non-finite") {
  CemConfig config;
  config.iterations = 40;
  config.init_std = 1.0;
  config.std_floor = 1e-2;
  config.seed = 7;
  const CemResult r = CemOptimize(
      [](const Vector& p) {
        return p[0] < 0.0 ? std::numeric_limits<double>::quiet_NaN() : (p[0] - 2.0) * (p[0] - 2.0);
      },
      Vector::Constant(1, 0.5), config);
  CHECK(std::isfinite(r.best_value));
  CHECK(r.best_params[0] == doctest::Approx(2.0).epsilon(1e-2));
  CHECK_THROWS_AS(
      CemOptimize([](const Vector&) { return std::numeric_limits<double>::infinity(); }, 2, config),
      OptimError);
}

TEST_CASE("cem config validation") {
  CemConfig c;
  c.population = 9;
  CHECK_THROWS_AS(c.Validate(), ConfigError);
  c = CemConfig{};
  c.elite_frac = 0.6;
  CHECK_THROWS_AS(c.Validate(), ConfigError);
  c = CemConfig{};
  c.std_floor = 0.0;
  CHECK_THROWS_AS(c.Validate(), ConfigError);
  CHECK(CemConfig{}.num_elites() == 8);
}

// Mean of (p - y_i)^2 / 2 over examples y_i = i.
LossAndGrad QuadraticBatch(const Vector& p, std::span<const std::size_t> batch) {
  LossAndGrad out{0.0, Vector::Zero(1)};
  for (std::size_t i : batch) {
    const double r = p[0] - static_cast<double>(i);
    out.loss += 0.5 * r * r;
    out.grad[0] += r;
  }
  out.loss /= static_cast<double>(batch.size());
  out.grad /= static_cast<double>(batch.size());
  return out;
}

TEST_CASE("sgd converges on a convex quadratic") {
  SgdConfig config;
  config.learning_rate = 0.1;
  config.batch_size = 5;  // full batch
  config.epochs = 400;
  const SgdResult r = SgdTrain(QuadraticBatch, Vector::Constant(1, 10.0), 5, config);
  CHECK(std::abs(r.params[0] - 2.0) <= 1e-6);
  CHECK(r.loss_history.size() == 400);
  CHECK(r.loss_history.back() < r.loss_history.front());
}

TEST_CASE("sgd with zero learning rate leaves the parameters unchanged") {
  SgdConfig config;
  config.learning_rate = 0.0;
  config.batch_size = 2;
  config.epochs = 10;
  const SgdResult r = SgdTrain(QuadraticBatch, Vector::Constant(1, 7.0), 5, config);
  CHECK(r.params[0] == 7.0);
}

TEST_CASE("sgd aborts when the analytic gradient is wrong") {
  SgdConfig config;
  auto wrong = [](const Vector& p, std::span<const std::size_t> batch) {
    LossAndGrad g = QuadraticBatch(p, batch);
    g.grad *= 1.01;
    return g;
  };
  CHECK_THROWS_AS(SgdTrain(wrong, Vector::Constant(1, 3.0), 5, config), OptimError);
  config.check_gradient = false;
  CHECK_NOTHROW(SgdTrain(wrong, Vector::Constant(1, 3.0), 5, config));
}

TEST_CASE("sgd halves the learning rate after a non-finite epoch") {
  SgdConfig config;
  config.learning_rate = 0.8;
  config.batch_size = 1;
  config.epochs = 1;
  config.check_gradient = false;
  // constant push upward; the loss is NaN once p exceeds 1.5, so an epoch of
  // three steps from p = 1 survives only with lr <= 0.25
  auto loss = [](const Vector& p, std::span<const std::size_t>) {
    return LossAndGrad{p[0] > 1.5 ? std::numeric_limits<double>::quiet_NaN() : -p[0],
                       -Vector::Ones(1)};
  };
  const SgdResult r = SgdTrain(loss, Vector::Constant(1, 1.0), 3, config);
  CHECK(r.final_learning_rate == 0.2);
  CHECK(r.params[0] == doctest::Approx(1.6).epsilon(1e-15));

  // the next epoch starts past the cliff and no halving helps
  config.epochs = 2;
  CHECK_THROWS_AS(SgdTrain(loss, Vector::Constant(1, 1.0), 3, config), OptimError);
}

TEST_CASE("sgd rejects a non-finite loss at init") {
  SgdConfig config;
  auto nan = [](const Vector&, std::span<const std::size_t>) {
    return LossAndGrad{std::numeric_limits<double>::quiet_NaN(), Vector::Zero(1)};
  };
  CHECK_THROWS_AS(SgdTrain(nan, Vector::Zero(1), 3, config), OptimError);
}

TEST_CASE("sgd is deterministic given the seed") {
  SgdConfig config;
  config.learning_rate = 0.05;
  config.batch_size = 2;
  config.epochs = 7;
  config.seed = 9;
  const SgdResult a = SgdTrain(QuadraticBatch, Vector::Constant(1, -4.0), 9, config);
  const SgdResult b = SgdTrain(QuadraticBatch, Vector::Constant(1, -4.0), 9, config);
  CHECK(a.params == b.params);
  CHECK(a.loss_history == b.loss_history);
}

TEST_CASE("finite differences") {
  const Vector g = FiniteDiffGrad([](const Vector& x) { return x[0] * x[0]; },
                                  Vector::Constant(1, 3.0), 1e-5);
  CHECK(std::abs(g[0] - 6.0) <= 1e-6);

  const Vector zero = FiniteDiffGrad([](const Vector&) { return 2.5; }, Vector::Ones(4), 1e-5);
  CHECK(zero.cwiseAbs().maxCoeff() == 0.0);

  Rng rng(10);
  Matrix m(4, 4);
  for (int r = 0; r < 4; ++r) m.row(r) = rng.NormalVector(4).transpose();
  const Matrix a = 0.5 * (m + m.transpose());
  const Vector x = rng.NormalVector(4);
  const Vector numeric =
      FiniteDiffGrad([&](const Vector& v) { return v.dot(a * v); }, x, 1e-5);
  CHECK((numeric - 2.0 * a * x).cwiseAbs().maxCoeff() <= 1e-6);

  CHECK_THROWS_AS(FiniteDiffGrad([](const Vector&) { return 0.0; }, x, 0.0), ConfigError);
}

TEST_CASE("relative error uses a floor") {
  CHECK(RelativeError(1.0, 1.1) == doctest::Approx(0.1 / 1.1));
  CHECK(RelativeError(0.0, 1e-9) == doctest::Approx(1e-5));
}

}  // namespace
}  // namespace cartransfer
