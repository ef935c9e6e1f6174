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

#include "cartransfer/optim.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "cartransfer/parallel.h"

namespace cartransfer {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double Sanitize(double value) { return std::isfinite(value) ? value : kInf; }

}  // namespace

// ---------------------------------------------------------------------------
// CEM

int CemConfig::num_elites() const {
  return std::max(1, static_cast<int>(std::lround(elite_frac * population)));
}

void CemConfig::Validate() const {
  if (population < 10) throw ConfigError("cem: population must be >= 10");
  if (!(elite_frac > 0.0 && elite_frac <= 0.5)) {
    throw ConfigError("cem: elite_frac must be in (0, 0.5]");
  }
  if (iterations < 1) throw ConfigError("cem: iterations must be >= 1");
  if (!(init_std > 0.0)) throw ConfigError("cem: init_std must be positive");
  if (!(std_floor > 0.0)) throw ConfigError("cem: std_floor must be positive");
}

CemResult CemOptimize(const Objective& objective, const Vector& init_mean,
                      const CemConfig& config, int threads) {
  config.Validate();
  const Eigen::Index dim = init_mean.size();
  if (dim < 1) throw ConfigError("cem: dimension must be >= 1");
  const int pop = config.population;
  const int n_elite = config.num_elites();

  Rng rng(config.seed);
  Vector mean = init_mean;
  Vector std = Vector::Constant(dim, config.init_std);

  CemResult result;
  result.best_params = init_mean;
  result.best_value = Sanitize(objective(init_mean));

  Matrix samples(dim, pop);
  std::vector<double> values(static_cast<std::size_t>(pop));
  std::vector<int> order(static_cast<std::size_t>(pop));

  for (int it = 0; it < config.iterations; ++it) {
    // draw serially so the stream is independent of the thread count
    for (int j = 0; j < pop; ++j) {
      for (Eigen::Index d = 0; d < dim; ++d) {
        samples(d, j) = mean[d] + std[d] * rng.Normal();
      }
    }
    ParallelFor(static_cast<std::size_t>(pop), threads, [&](std::size_t j) {
      values[j] = Sanitize(objective(samples.col(static_cast<Eigen::Index>(j))));
    });

    double finite_sum = 0.0;
    int finite_count = 0;
    for (double v : values) {
      if (v < kInf) {
        finite_sum += v;
        ++finite_count;
      }
    }
    if (finite_count == 0) {
      throw OptimError("cem: every candidate in iteration " + std::to_string(it) +
                       " produced a non-finite objective");
    }

    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return values[static_cast<std::size_t>(a)] < values[static_cast<std::size_t>(b)];
    });

    const int top = order.front();
    if (values[static_cast<std::size_t>(top)] < result.best_value) {
      result.best_value = values[static_cast<std::size_t>(top)];
      result.best_params = samples.col(top);
    }

    Vector new_mean = Vector::Zero(dim);
    for (int e = 0; e < n_elite; ++e) new_mean += samples.col(order[static_cast<std::size_t>(e)]);
    new_mean /= n_elite;
    Vector var = Vector::Zero(dim);
    for (int e = 0; e < n_elite; ++e) {
      var += (samples.col(order[static_cast<std::size_t>(e)]) - new_mean).cwiseAbs2();
    }
    var /= n_elite;
    mean = new_mean;
    std = var.cwiseSqrt().cwiseMax(config.std_floor);

    result.history.push_back({it, result.best_value, finite_sum / finite_count});
  }
  result.final_mean = mean;
  result.final_std = std;
  return result;
}

CemResult CemOptimize(const Objective& objective, int dim,
                      const CemConfig& config, int threads) {
  if (dim < 1) throw ConfigError("cem: dimension must be >= 1");
  return CemOptimize(objective, Vector::Zero(dim), config, threads);
}

// ---------------------------------------------------------------------------
// SGD

void SgdConfig::Validate() const {
  if (!(learning_rate >= 0.0)) throw ConfigError("sgd: learning_rate must be >= 0");
  if (batch_size < 1) throw ConfigError("sgd: batch_size must be >= 1");
  if (epochs < 0) throw ConfigError("sgd: epochs must be >= 0");
}

double RelativeError(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

Vector FiniteDiffGrad(const std::function<double(const Vector&)>& objective,
                      const Vector& params, double step) {
  if (!(step > 0.0)) throw ConfigError("finite differences: step must be positive");
  Vector grad(params.size());
  Vector probe = params;
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    probe[i] = params[i] + step;
    const double up = objective(probe);
    probe[i] = params[i] - step;
    const double down = objective(probe);
    probe[i] = params[i];
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

SgdResult SgdTrain(const BatchLossFn& loss_and_grad, Vector init_params,
                   std::size_t num_examples, const SgdConfig& config,
                   const AnchoredLossFn& check_loss) {
  config.Validate();
  if (num_examples == 0) throw ConfigError("sgd: no training examples");

  std::vector<std::size_t> index(num_examples);
  std::iota(index.begin(), index.end(), std::size_t{0});

  Vector params = std::move(init_params);
  {
    const LossAndGrad init = loss_and_grad(params, index);
    if (!std::isfinite(init.loss)) throw OptimError("sgd: loss is not finite at init");
  }

  if (config.check_gradient) {
    const std::size_t n = std::min<std::size_t>(num_examples, static_cast<std::size_t>(config.batch_size));
    const std::span<const std::size_t> batch(index.data(), n);
    const Vector analytic = loss_and_grad(params, batch).grad;
    const Vector anchor = params;
    const Vector numeric = FiniteDiffGrad(
        [&](const Vector& p) {
          return check_loss ? check_loss(p, anchor, batch) : loss_and_grad(p, batch).loss;
        },
        params, 1e-5);
    for (Eigen::Index i = 0; i < analytic.size(); ++i) {
      if (RelativeError(analytic[i], numeric[i]) > config.gradient_tolerance) {
        throw OptimError("sgd: gradient check failed at parameter " + std::to_string(i) +
                         " (analytic " + std::to_string(analytic[i]) + ", numeric " +
                         std::to_string(numeric[i]) + ")");
      }
    }
  }

  Rng rng(config.seed);
  SgdResult result;
  double lr = config.learning_rate;
  const auto batch_size = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(index.begin(), index.end(), rng.engine());
    int retries = 0;
    for (;;) {
      Vector trial = params;
      double weighted_loss = 0.0;
      bool finite = true;
      for (std::size_t start = 0; start < num_examples; start += batch_size) {
        const std::size_t n = std::min(batch_size, num_examples - start);
        const LossAndGrad step = loss_and_grad(trial, std::span(index).subspan(start, n));
        if (!std::isfinite(step.loss) || !step.grad.allFinite()) {
          finite = false;
          break;
        }
        weighted_loss += step.loss * static_cast<double>(n);
        trial -= lr * step.grad;
      }
      if (finite && trial.allFinite()) {
        params = std::move(trial);
        result.loss_history.push_back(weighted_loss / static_cast<double>(num_examples));
        break;
      }
      if (++retries > 3) {
        throw OptimError("sgd: non-finite loss in epoch " + std::to_string(epoch) +
                         " after 3 learning-rate halvings");
      }
      lr *= 0.5;
    }
  }
  result.params = std::move(params);
  result.final_learning_rate = lr;
  return result;
}

}  // namespace cartransfer
