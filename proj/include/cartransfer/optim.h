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

// Derivative-free and first-order trainers: the cross-entropy method over
// flat parameter vectors and plain minibatch SGD.

#ifndef CARTRANSFER_OPTIM_H_
#define CARTRANSFER_OPTIM_H_

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "cartransfer/math_core.h"

namespace cartransfer {

// Raised when an optimizer cannot continue (all candidates non-finite,
// diverging SGD, failed gradient check).
class OptimError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CemConfig {
  int population = 64;
  double elite_frac = 0.125;
  int iterations = 100;
  double init_std = 0.5;
  double std_floor = 1e-3;
  std::uint64_t seed = 0;

  int num_elites() const;
  void Validate() const;
};

struct CemIteration {
  int iteration = 0;
  double best = 0.0;  // best-ever objective so far
  double mean = 0.0;  // mean over the finite objectives of this population
};

struct CemResult {
  Vector best_params;
  double best_value = 0.0;
  std::vector<CemIteration> history;
  Vector final_mean;
  Vector final_std;
};

using Objective = std::function<double(const Vector&)>;

// Minimises `objective` with a diagonal-Gaussian CEM. The initial mean is
// evaluated too, so the best-ever result is never worse than the starting
// point. Non-finite objective values rank last; a population with no finite
// value aborts. Population evaluations run on up to `threads` workers and
// the result does not depend on the thread count.
CemResult CemOptimize(const Objective& objective, const Vector& init_mean,
                      const CemConfig& config, int threads = 1);
CemResult CemOptimize(const Objective& objective, int dim,
                      const CemConfig& config, int threads = 1);

struct SgdConfig {
  double learning_rate = 1e-2;
  int batch_size = 64;
  int epochs = 200;
  std::uint64_t seed = 0;
  // Compare the analytic gradient with central differences on the first
  // minibatch before training.
  bool check_gradient = true;
  double gradient_tolerance = 1e-4;

  void Validate() const;
};

struct LossAndGrad {
  double loss = 0.0;
  Vector grad;
};

// Loss and gradient of the mean loss over the examples in `batch`.
using BatchLossFn =
    std::function<LossAndGrad(const Vector& params, std::span<const std::size_t> batch)>;

// Loss with any stop-gradient quantities evaluated at `anchor` instead of
// `params`; lets the gradient check differentiate the same surrogate the
// analytic gradient describes.
using AnchoredLossFn = std::function<double(
    const Vector& params, const Vector& anchor, std::span<const std::size_t> batch)>;

struct SgdResult {
  Vector params;
  std::vector<double> loss_history;  // mean minibatch loss per epoch
  double final_learning_rate = 0.0;
};

// Plain minibatch SGD over shuffled epochs. A non-finite loss restarts the
// epoch with half the learning rate (at most three times).
SgdResult SgdTrain(const BatchLossFn& loss_and_grad, Vector init_params,
                   std::size_t num_examples, const SgdConfig& config,
                   const AnchoredLossFn& check_loss = nullptr);

// Central differences, one coordinate at a time.
Vector FiniteDiffGrad(const std::function<double(const Vector&)>& objective,
                      const Vector& params, double step);

// |a - b| / max(|a|, |b|, floor)
double RelativeError(double a, double b, double floor = 1e-4);

}  // namespace cartransfer

#endif  // CARTRANSFER_OPTIM_H_
