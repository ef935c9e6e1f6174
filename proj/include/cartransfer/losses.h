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

// Behavioural-cloning losses for the alignment policy classes and the
// regularised cross-entropy loss for switching networks.

#ifndef CARTRANSFER_LOSSES_H_
#define CARTRANSFER_LOSSES_H_

#include <span>
#include <variant>
#include <vector>

#include "cartransfer/dataset.h"
#include "cartransfer/math_core.h"
#include "cartransfer/optim.h"
#include "cartransfer/policies.h"

namespace cartransfer {

// Squashed actions are pulled back through atanh after clipping to this bound.
inline constexpr double kAtanhClip = 1.0 - 1e-6;

// Dataset in column form with actions mapped to pre-squash space.
struct BcData {
  Matrix obs;       // obs_dim x N
  Matrix next_obs;  // obs_dim x N
  Matrix targets;   // action_dim x N, atanh(clip(action))
  std::vector<bool> episode_final;

  std::size_t size() const { return static_cast<std::size_t>(obs.cols()); }
};

BcData MakeBcData(const TransitionDataset& data);

// Mean negative log-likelihood of targets under N(means, diag(exp(log_std))^2).
double DiagGaussianNll(const Eigen::Ref<const Matrix>& means, const Vector& log_std,
                       const Eigen::Ref<const Matrix>& targets);

double ObsAlignBcLoss(const BasePolicy& base, const AffineTransform& t_obs,
                      const BcData& data);
// base_means are the base policy's pre-squash means on data.obs.
double ActionAlignBcLoss(const AffineTransform& t_act, const Vector& base_log_std,
                         const Eigen::Ref<const Matrix>& base_means,
                         const Eigen::Ref<const Matrix>& targets);
// latent holds the base policy's final-layer inputs on data.obs.
double ReAlignBcLoss(const AffineTransform& t_latent, const Vector& base_log_std,
                     const Eigen::Ref<const Matrix>& latent,
                     const Eigen::Ref<const Matrix>& targets);
// Gradient with respect to the flattened transform, over the given columns.
LossAndGrad ReAlignBcLossAndGrad(const AffineTransform& t_latent,
                                 const Vector& base_log_std, const Matrix& latent,
                                 const Matrix& targets,
                                 std::span<const std::size_t> batch);

using AlignmentPolicy = std::variant<ObsAlignPolicy, ActionAlignPolicy, ActionReAlignPolicy>;

// Mean over records of -log p(action | obs) under the policy's pre-squash
// density. The tanh Jacobian is omitted (constant for fixed data).
double BcLossAlignment(const AlignmentPolicy& policy, const TransitionDataset& data);
double BcLossAlignment(const AlignmentPolicy& policy, const BcData& data);

// Per-record base likelihoods for the switching loss.
struct SwitchingData {
  Matrix obs;
  Matrix next_obs;
  Matrix posterior;  // n_base x N, softmax over bases of log-likelihoods
  std::vector<bool> episode_final;

  std::size_t size() const { return static_cast<std::size_t>(obs.cols()); }
};

SwitchingData MakeSwitchingData(const BcData& data,
                                const std::vector<BasePolicyPtr>& bases);

struct SwitchingLossTerms {
  double imitation = 0.0;  // mean CE(posterior, W(s))
  double temporal = 0.0;   // mean CE(W(s'), W(s)); zero for episode-final records
  double total = 0.0;      // alpha * imitation + (1 - alpha) * temporal
};

SwitchingLossTerms SwitchingLoss(const MlpParams& w_net, const SwitchingData& data,
                                 double alpha);
double SwitchingLoss(const MlpParams& w_net, const TransitionDataset& data,
                     const std::vector<BasePolicyPtr>& bases, double alpha);

// Minibatch loss and gradient w.r.t. the flattened w_net. W(s') is a fixed
// target: no gradient flows through it. It is computed with `target_net`
// when given (for finite-difference checks), otherwise with w_net.
LossAndGrad SwitchingLossAndGrad(const MlpParams& w_net, const SwitchingData& data,
                                 double alpha, std::span<const std::size_t> batch,
                                 const MlpParams* target_net = nullptr);

}  // namespace cartransfer

#endif  // CARTRANSFER_LOSSES_H_
