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

#include "cartransfer/policies.h"

#include <cmath>
#include <cstring>

namespace cartransfer {

BasePolicy::BasePolicy(std::string task_id, MlpParams body, Vector log_std)
    : task_id_(std::move(task_id)), body_(std::move(body)) {
  body_.Validate();
  if (log_std.size() != body_.output_dim()) {
    throw ConfigError("base policy: log_std length must equal action dim");
  }
  log_std_ = log_std.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
}

GaussianHead BasePolicy::Distribution(const Vector& obs) const {
  return GaussianHead(Forward(obs).output, log_std_);
}

Vector BasePolicy::SquashWithNoise(const Vector& pre_mean, ActMode mode,
                                   Rng& rng) const {
  Vector u = pre_mean;
  if (mode == ActMode::kSample) {
    for (Eigen::Index i = 0; i < u.size(); ++i) {
      u[i] += std::exp(log_std_[i]) * rng.Normal();
    }
  }
  return u.array().tanh();
}

Vector BasePolicy::Act(const Vector& obs, ActMode mode, Rng& rng) const {
  return SquashWithNoise(Forward(obs).output, mode, rng);
}

std::uint64_t BasePolicy::ParamHash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const double* data, Eigen::Index n) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < static_cast<std::size_t>(n) * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  const Vector flat = body_.Flatten();
  mix(flat.data(), flat.size());
  mix(log_std_.data(), log_std_.size());
  return h;
}

// ---------------------------------------------------------------------------

ObsAlignPolicy::ObsAlignPolicy(BasePolicyPtr base, AffineTransform t_obs)
    : base_(std::move(base)), t_obs_(std::move(t_obs)) {
  t_obs_.Validate();
  if (t_obs_.in_dim() != t_obs_.out_dim() || t_obs_.out_dim() != base_->obs_dim()) {
    throw ConfigError("obs alignment transform must be square with obs dim");
  }
}

GaussianHead ObsAlignPolicy::Distribution(const Vector& obs) const {
  return base_->Distribution(AffineApply(t_obs_, obs));
}

Vector ObsAlignPolicy::Act(const Vector& obs, ActMode mode, Rng& rng) {
  return base_->Act(AffineApply(t_obs_, obs), mode, rng);
}

// ---------------------------------------------------------------------------

ActionAlignPolicy::ActionAlignPolicy(BasePolicyPtr base, AffineTransform t_act)
    : base_(std::move(base)), t_act_(std::move(t_act)) {
  t_act_.Validate();
  const int action_dim = base_->body().output_dim();
  if (t_act_.in_dim() != action_dim || t_act_.out_dim() != action_dim) {
    throw ConfigError("action alignment transform must be square with action dim");
  }
}

std::pair<Vector, Matrix> ActionAlignPolicy::Distribution(const Vector& obs) const {
  const Vector mu = base_->Forward(obs).output;
  const Vector var = (2.0 * base_->log_std().array()).exp();
  return {AffineApply(t_act_, mu), t_act_.a * var.asDiagonal() * t_act_.a.transpose()};
}

Vector ActionAlignPolicy::Act(const Vector& obs, ActMode mode, Rng& rng) {
  Vector u = base_->Forward(obs).output;
  if (mode == ActMode::kSample) {
    for (Eigen::Index i = 0; i < u.size(); ++i) {
      u[i] += std::exp(base_->log_std()[i]) * rng.Normal();
    }
  }
  return AffineApply(t_act_, u).array().tanh();
}

// ---------------------------------------------------------------------------

ActionReAlignPolicy::ActionReAlignPolicy(BasePolicyPtr base,
                                         AffineTransform t_latent)
    : base_(std::move(base)), t_latent_(std::move(t_latent)) {
  t_latent_.Validate();
  if (t_latent_.in_dim() != base_->latent_dim()) {
    throw ConfigError("re-alignment transform input width " +
                      std::to_string(t_latent_.in_dim()) +
                      " does not match base latent width " +
                      std::to_string(base_->latent_dim()));
  }
  if (t_latent_.out_dim() != base_->body().output_dim()) {
    throw ConfigError("re-alignment transform must output the action dim");
  }
}

AffineTransform ActionReAlignPolicy::FinalLayerCopy(const BasePolicy& base) {
  const auto& last = base.body().layers.back();
  return {last.weight, last.bias};
}

GaussianHead ActionReAlignPolicy::Distribution(const Vector& obs) const {
  const ForwardPass pass = base_->Forward(obs);
  return GaussianHead(AffineApply(t_latent_, pass.activations.back()),
                      base_->log_std());
}

Vector ActionReAlignPolicy::Act(const Vector& obs, ActMode mode, Rng& rng) {
  const ForwardPass pass = base_->Forward(obs);
  return base_->SquashWithNoise(AffineApply(t_latent_, pass.activations.back()),
                                mode, rng);
}

// ---------------------------------------------------------------------------

std::string_view SwitchModeName(SwitchMode mode) {
  return mode == SwitchMode::kSoft ? "soft" : "hard";
}

SwitchMode ParseSwitchMode(std::string_view name) {
  if (name == "soft") return SwitchMode::kSoft;
  if (name == "hard") return SwitchMode::kHard;
  throw ConfigError("unknown switching mode '" + std::string(name) + "'");
}

int ArgMax(std::span<const double> values) {
  if (values.empty()) throw ConfigError("argmax of empty sequence");
  int best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

int HysteresisSelect(std::span<const double> weights, std::optional<int> current,
                     double epsilon) {
  if (!current.has_value()) return ArgMax(weights);
  const int h = *current;
  if (h < 0 || static_cast<std::size_t>(h) >= weights.size()) {
    throw ConfigError("hysteresis: current selection out of range");
  }
  const double threshold = weights[static_cast<std::size_t>(h)] + epsilon;
  for (std::size_t tau = 0; tau < weights.size(); ++tau) {
    if (static_cast<int>(tau) != h && weights[tau] >= threshold) {
      return ArgMax(weights);
    }
  }
  return h;
}

SwitchingPolicy::SwitchingPolicy(std::vector<BasePolicyPtr> bases, MlpParams w_net,
                                 SwitchMode mode, double epsilon)
    : bases_(std::move(bases)), w_net_(std::move(w_net)), mode_(mode),
      epsilon_(epsilon) {
  if (bases_.empty()) throw ConfigError("switching policy needs at least one base");
  w_net_.Validate();
  if (w_net_.output_dim() != static_cast<int>(bases_.size())) {
    throw ConfigError("switching network must output one logit per base");
  }
  if (!(epsilon_ >= 0.0)) throw ConfigError("switching epsilon must be >= 0");
}

Vector SwitchingPolicy::Weights(const Vector& obs) const {
  return Softmax(MlpForward(w_net_, obs).output);
}

void SwitchingPolicy::BeginEpisode() {
  current_.reset();
  last_weights_.resize(0);
}

Vector SwitchingPolicy::Act(const Vector& obs, ActMode mode, Rng& rng) {
  last_weights_ = Weights(obs);
  const std::span<const double> w(last_weights_.data(),
                                  static_cast<std::size_t>(last_weights_.size()));
  if (mode_ == SwitchMode::kHard) {
    current_ = HysteresisSelect(w, current_, epsilon_);
    return bases_[static_cast<std::size_t>(*current_)]->Act(obs, mode, rng);
  }
  if (mode == ActMode::kSample) {
    // ancestral sampling of the mixture
    std::discrete_distribution<int> pick(w.begin(), w.end());
    current_ = pick(rng.engine());
    return bases_[static_cast<std::size_t>(*current_)]->Act(obs, mode, rng);
  }
  // mean of the pre-squash mixture, then squashed
  current_ = ArgMax(w);
  Vector mean = Vector::Zero(bases_.front()->body().output_dim());
  for (std::size_t tau = 0; tau < bases_.size(); ++tau) {
    mean += w[tau] * bases_[tau]->Distribution(obs).mean();
  }
  return mean.array().tanh();
}

SwitchingPolicy SwitchingPolicy::WithMode(SwitchMode mode, double epsilon) const {
  return SwitchingPolicy(bases_, w_net_, mode, epsilon);
}

}  // namespace cartransfer
