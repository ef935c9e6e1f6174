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

// Base Gaussian-MLP policies and the target policy classes built on top of
// them as frozen black boxes: observation alignment, action alignment,
// action re-alignment (latent readout) and soft/hard switching.

#ifndef CARTRANSFER_POLICIES_H_
#define CARTRANSFER_POLICIES_H_

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cartransfer/math_core.h"

namespace cartransfer {

enum class ActMode { kMean, kSample };

// Anything that maps observations to actions inside an episode.
class Actor {
 public:
  virtual ~Actor() = default;

  virtual Vector Act(const Vector& obs, ActMode mode, Rng& rng) = 0;
  // Clears per-episode state.
  virtual void BeginEpisode() {}
  // Independent copy for use on another thread.
  virtual std::unique_ptr<Actor> Clone() const = 0;
  // Base index used at the last step; switching policies only.
  virtual std::optional<int> LastSelection() const { return std::nullopt; }
  // Mixture weights computed at the last step; switching policies only.
  virtual const Vector* LastWeights() const { return nullptr; }
};

// Gaussian MLP policy; actions are tanh-squashed samples of
// N(body(obs), diag(exp(log_std))^2).
class BasePolicy {
 public:
  BasePolicy(std::string task_id, MlpParams body, Vector log_std);

  const std::string& task_id() const { return task_id_; }
  const MlpParams& body() const { return body_; }
  const Vector& log_std() const { return log_std_; }
  int obs_dim() const { return body_.input_dim(); }
  int latent_dim() const { return body_.latent_dim(); }

  ForwardPass Forward(const Vector& obs) const { return MlpForward(body_, obs); }
  GaussianHead Distribution(const Vector& obs) const;
  // tanh(mean) or tanh(mean + std * xi)
  Vector Act(const Vector& obs, ActMode mode, Rng& rng) const;
  // Squashes a pre-tanh mean with this policy's noise.
  Vector SquashWithNoise(const Vector& pre_mean, ActMode mode, Rng& rng) const;

  // FNV-1a over the parameter bytes; used to check read-only access.
  std::uint64_t ParamHash() const;

 private:
  std::string task_id_;
  MlpParams body_;
  Vector log_std_;
};

using BasePolicyPtr = std::shared_ptr<const BasePolicy>;

class BaseActor final : public Actor {
 public:
  explicit BaseActor(BasePolicyPtr base) : base_(std::move(base)) {}
  Vector Act(const Vector& obs, ActMode mode, Rng& rng) override {
    return base_->Act(obs, mode, rng);
  }
  std::unique_ptr<Actor> Clone() const override {
    return std::make_unique<BaseActor>(*this);
  }

 private:
  BasePolicyPtr base_;
};

// pi_base(a | T(s)).
class ObsAlignPolicy final : public Actor {
 public:
  ObsAlignPolicy(BasePolicyPtr base, AffineTransform t_obs);

  const BasePolicy& base() const { return *base_; }
  const BasePolicyPtr& base_ptr() const { return base_; }
  const AffineTransform& transform() const { return t_obs_; }

  GaussianHead Distribution(const Vector& obs) const;
  Vector Act(const Vector& obs, ActMode mode, Rng& rng) override;
  std::unique_ptr<Actor> Clone() const override {
    return std::make_unique<ObsAlignPolicy>(*this);
  }

 private:
  BasePolicyPtr base_;
  AffineTransform t_obs_;
};

// Affine map on the base policy's pre-squash action: a = tanh(A u + b) with
// u ~ N(mu(s), Sigma), so A u + b ~ N(A mu + b, A Sigma A^T).
class ActionAlignPolicy final : public Actor {
 public:
  ActionAlignPolicy(BasePolicyPtr base, AffineTransform t_act);

  const BasePolicy& base() const { return *base_; }
  const BasePolicyPtr& base_ptr() const { return base_; }
  const AffineTransform& transform() const { return t_act_; }

  // Mean and covariance of the transformed pre-squash action.
  std::pair<Vector, Matrix> Distribution(const Vector& obs) const;
  Vector Act(const Vector& obs, ActMode mode, Rng& rng) override;
  std::unique_ptr<Actor> Clone() const override {
    return std::make_unique<ActionAlignPolicy>(*this);
  }

 private:
  BasePolicyPtr base_;
  AffineTransform t_act_;
};

// Replaces the base policy's final layer with T(h), h being the latent that
// fed the removed layer.
class ActionReAlignPolicy final : public Actor {
 public:
  ActionReAlignPolicy(BasePolicyPtr base, AffineTransform t_latent);

  // T initialised to the base's own final layer.
  static AffineTransform FinalLayerCopy(const BasePolicy& base);

  const BasePolicy& base() const { return *base_; }
  const BasePolicyPtr& base_ptr() const { return base_; }
  const AffineTransform& transform() const { return t_latent_; }

  GaussianHead Distribution(const Vector& obs) const;
  Vector Act(const Vector& obs, ActMode mode, Rng& rng) override;
  std::unique_ptr<Actor> Clone() const override {
    return std::make_unique<ActionReAlignPolicy>(*this);
  }

 private:
  BasePolicyPtr base_;
  AffineTransform t_latent_;
};

enum class SwitchMode { kSoft, kHard };

std::string_view SwitchModeName(SwitchMode mode);
SwitchMode ParseSwitchMode(std::string_view name);

// Hysteresis rule: keep `current` unless some other base has weight at least
// `epsilon` above it, then move to the argmax (lowest index on ties). Without
// a current selection this is the argmax.
int HysteresisSelect(std::span<const double> weights, std::optional<int> current,
                     double epsilon);

// Index of the largest entry, lowest index on ties.
int ArgMax(std::span<const double> values);

// State-conditioned weighting over base policies, W(s) = softmax(w_net(s)).
// Soft mode mixes the base action distributions; hard mode follows one base
// at a time with hysteresis. Hard mode keeps per-episode state: use one
// instance (or Clone) per concurrent rollout.
class SwitchingPolicy final : public Actor {
 public:
  SwitchingPolicy(std::vector<BasePolicyPtr> bases, MlpParams w_net,
                  SwitchMode mode, double epsilon);

  const std::vector<BasePolicyPtr>& bases() const { return bases_; }
  const MlpParams& w_net() const { return w_net_; }
  SwitchMode mode() const { return mode_; }
  double epsilon() const { return epsilon_; }

  Vector Weights(const Vector& obs) const;
  const Vector& last_weights() const { return last_weights_; }

  Vector Act(const Vector& obs, ActMode mode, Rng& rng) override;
  void BeginEpisode() override;
  std::unique_ptr<Actor> Clone() const override {
    return std::make_unique<SwitchingPolicy>(*this);
  }
  std::optional<int> LastSelection() const override { return current_; }
  const Vector* LastWeights() const override { return &last_weights_; }

  // Same networks with a different mode / epsilon.
  SwitchingPolicy WithMode(SwitchMode mode, double epsilon) const;

 private:
  std::vector<BasePolicyPtr> bases_;
  MlpParams w_net_;
  SwitchMode mode_;
  double epsilon_;
  std::optional<int> current_;
  Vector last_weights_;
};

}  // namespace cartransfer

#endif  // CARTRANSFER_POLICIES_H_
