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

#include "cartransfer/pipelines.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "cartransfer/losses.h"
#include "cartransfer/parallel.h"
#include "cartransfer/rollout.h"

namespace cartransfer {

namespace {

std::uint64_t HashString(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// stream tags for DeriveSeed
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kSearchStream = 2;
constexpr std::uint64_t kObjectiveEpisodeStream = 1000;
constexpr std::uint64_t kGateEpisodeStream = 100000;
constexpr std::uint64_t kRestartStream = 500000;

std::vector<int> LayerSizes(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> sizes{in};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(out);
  return sizes;
}

}  // namespace

// ---------------------------------------------------------------------------
// pre-training

void PretrainSpec::Validate(const EnvParams& env) const {
  if (base_tasks.empty()) throw ConfigError("pretrain: no base tasks");
  for (std::size_t i = 0; i < base_tasks.size(); ++i) {
    base_tasks[i].Validate(env);
    for (std::size_t j = 0; j < i; ++j) {
      if (base_tasks[i].task_id == base_tasks[j].task_id ||
          base_tasks[i].goal == base_tasks[j].goal) {
        throw ConfigError("pretrain: base tasks must be distinct ('" +
                          base_tasks[i].task_id + "')");
      }
    }
  }
  for (int width : hidden) {
    if (width <= 0) throw ConfigError("pretrain: hidden widths must be positive");
  }
  if (episodes_per_eval < 1) throw ConfigError("pretrain: episodes_per_eval must be >= 1");
  if (rollout_horizon < 1) throw ConfigError("pretrain: rollout_horizon must be >= 1");
  if (eval_episodes < 1) throw ConfigError("pretrain: eval_episodes must be >= 1");
  if (restarts < 0) throw ConfigError("pretrain: restarts must be >= 0");
  cem.Validate();
}

namespace {

struct Attempt {
  BasePolicy policy;
  double rate;
  std::vector<CemIteration> history;
};

// Episode seeds whose start headings fall in distinct, equal-width sectors:
// the k-th seed is the first of the derived stream landing in sector k.
std::vector<std::uint64_t> StratifiedEpisodeSeeds(const CarGoalEnv& env, const Task& task,
                                                  std::uint64_t seed, int count) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(count), 0);
  std::vector<char> filled(static_cast<std::size_t>(count), 0);
  int remaining = count;
  for (std::uint64_t m = 0; remaining > 0; ++m) {
    const std::uint64_t candidate = DeriveSeed(seed, kObjectiveEpisodeStream + m);
    const double heading = env.Reset(task, candidate).first.heading;
    const auto sector = std::min<std::size_t>(
        static_cast<std::size_t>((heading + std::numbers::pi) / kTwoPi * count),
        static_cast<std::size_t>(count - 1));
    if (!filled[sector]) {
      filled[sector] = 1;
      seeds[sector] = candidate;
      --remaining;
    }
  }
  return seeds;
}

Attempt SearchOnce(const Task& task, const PretrainSpec& spec, const CarGoalEnv& env,
                   int threads, int attempt) {
  const std::uint64_t task_seed = DeriveSeed(spec.seed, HashString(task.task_id));
  const std::uint64_t attempt_seed =
      attempt == 0 ? task_seed : DeriveSeed(task_seed, kRestartStream + attempt);
  const std::uint64_t episode_seed =
      attempt == 0 ? spec.seed : DeriveSeed(spec.seed, kRestartStream + attempt);
  const Vector log_std = Vector::Constant(kActionDim, spec.log_std);

  Rng init_rng(DeriveSeed(attempt_seed, kInitStream));
  const MlpParams init = MlpParams::Random(LayerSizes(kObsDim, spec.hidden, kActionDim),
                                           init_rng, spec.init_gain);

  const std::vector<std::uint64_t> episode_seeds =
      StratifiedEpisodeSeeds(env, task, episode_seed, spec.episodes_per_eval);
  RolloutOptions search_rollout;
  search_rollout.horizon = spec.rollout_horizon;
  auto objective = [&](const Vector& theta) {
    if (!theta.allFinite()) return std::numeric_limits<double>::infinity();
    MlpParams body = init;
    body.Unflatten(theta);
    BaseActor actor(std::make_shared<const BasePolicy>(task.task_id, std::move(body), log_std));
    double total = 0.0;
    for (int k = 0; k < spec.episodes_per_eval; ++k) {
      total += RunEpisode(env, task, actor, episode_seeds[static_cast<std::size_t>(k)],
                          search_rollout)
                   .total_return;
    }
    return -total / spec.episodes_per_eval;
  };

  CemConfig cem = spec.cem;
  cem.seed = DeriveSeed(attempt_seed, kSearchStream);
  const CemResult search = CemOptimize(objective, init.Flatten(), cem, threads);

  MlpParams body = init;
  body.Unflatten(search.best_params);
  auto policy = std::make_shared<const BasePolicy>(task.task_id, body, log_std);

  // the gate always uses the same episodes
  std::vector<char> success(static_cast<std::size_t>(spec.eval_episodes), 0);
  ParallelFor(success.size(), threads, [&](std::size_t i) {
    BaseActor actor(policy);
    success[i] = RunEpisode(env, task, actor, DeriveSeed(spec.seed, kGateEpisodeStream + i)).success;
  });
  const double rate = static_cast<double>(std::count(success.begin(), success.end(), 1)) /
                      static_cast<double>(success.size());
  return {*policy, rate, search.history};
}

}  // namespace

PretrainResult TrainBasePolicy(const Task& task, const PretrainSpec& spec,
                               const EnvParams& env_params, int threads) {
  spec.Validate(env_params);
  task.Validate(env_params);
  const CarGoalEnv env(env_params);
  std::optional<Attempt> best;
  for (int attempt = 0; attempt <= spec.restarts; ++attempt) {
    Attempt result = SearchOnce(task, spec, env, threads, attempt);
    if (result.rate >= spec.success_gate) {
      return {std::move(result.policy), result.rate, std::move(result.history), attempt + 1};
    }
    if (!best || result.rate > best->rate) best = std::move(result);
  }
  throw PretrainGateError(fmt::format("base policy for '{}' reached {:.3f} success after {} "
                                      "attempt(s), below the {:.2f} gate",
                                      task.task_id, best->rate, spec.restarts + 1,
                                      spec.success_gate),
                          best->policy, best->rate);
}

// ---------------------------------------------------------------------------
// demonstrations

Vector ScriptedExpertAction(const Vector& obs, const Task& task) {
  constexpr double kSteerGain = 2.0;
  constexpr double kThrottlePerMeter = 0.5;
  constexpr double kMinThrottle = 0.3;
  const Eigen::Vector2d to_goal = task.goal - obs.head<2>();
  const double bearing = std::atan2(to_goal.y(), to_goal.x());
  const double heading = std::atan2(obs[3], obs[2]);
  const double error = WrapAngle(bearing - heading);
  Vector action(kActionDim);
  action << std::clamp(kSteerGain * error, -1.0, 1.0),
      std::clamp(kThrottlePerMeter * to_goal.norm(), kMinThrottle, 1.0);
  return action;
}

TransitionDataset CollectDemos(const Actor& actor, const Task& task, int budget,
                               std::uint64_t seed, const EnvParams& env_params,
                               int threads, DataSource source, double execution_noise) {
  if (budget < 1) throw ConfigError("demonstration budget must be >= 1");
  if (!(execution_noise >= 0.0) || !std::isfinite(execution_noise)) {
    throw ConfigError("execution noise must be finite and >= 0");
  }
  const CarGoalEnv env(env_params);
  task.Validate(env_params);
  RolloutOptions options;
  options.record_transitions = true;
  options.execution_noise = execution_noise;

  TransitionDataset data;
  data.task_id = task.task_id;
  data.source = source;

  const std::size_t chunk = static_cast<std::size_t>(std::max(threads, 1)) * 4;
  const long long attempt_cap = 10LL * budget;
  long long attempted = 0;
  long long kept = 0;
  int episode_id = 0;
  for (std::uint64_t next = 0;; next += chunk) {
    std::vector<EpisodeLog> logs(chunk);
    ParallelFor(chunk, threads, [&](std::size_t i) {
      auto local = actor.Clone();
      logs[i] = RunEpisode(env, task, *local, DeriveSeed(seed, next + i), options);
    });
    // consume in index order so the result does not depend on `threads`
    for (EpisodeLog& log : logs) {
      attempted += log.length;
      if (log.success) {
        for (Transition& tr : log.transitions) {
          tr.episode_id = episode_id;
          data.records.push_back(std::move(tr));
        }
        ++episode_id;
        kept += log.length;
        if (kept >= budget) return data;
      }
      if (attempted >= attempt_cap) {
        if (data.empty()) {
          throw std::runtime_error(fmt::format(
              "no successful episode on '{}' within {} timesteps", task.task_id, attempt_cap));
        }
        return data;
      }
    }
  }
}

// ---------------------------------------------------------------------------
// adaptation

const std::vector<std::string>& AdaptMethodNames() {
  static const std::vector<std::string> names = {"obs_align", "action_align", "action_realign",
                                                 "soft_switch", "hard_switch"};
  return names;
}

std::string_view AdaptMethodName(AdaptMethod method) {
  return AdaptMethodNames()[static_cast<std::size_t>(method)];
}

AdaptMethod ParseAdaptMethod(std::string_view name) {
  const auto& names = AdaptMethodNames();
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return static_cast<AdaptMethod>(i);
  }
  throw ConfigError(fmt::format("unknown adaptation method '{}'; valid methods: {}", name,
                                fmt::join(names, ", ")));
}

void AdaptSpec::Validate() const {
  if (demo_budget <= 0) throw ConfigError("adapt: demo_budget must be > 0");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("adapt: alpha must lie in [0, 1]");
  if (!(epsilon >= 0.0)) throw ConfigError("adapt: epsilon must be >= 0");
  cem.Validate();
  sgd.Validate();
  for (int width : switch_hidden) {
    if (width <= 0) throw ConfigError("adapt: switch_hidden widths must be positive");
  }
}

std::unique_ptr<Actor> TargetPolicy::MakeActor() const {
  return std::visit(
      [](const auto& p) -> std::unique_ptr<Actor> {
        return std::make_unique<std::decay_t<decltype(p)>>(p);
      },
      policy);
}

namespace {

AdaptResult AdaptEnsemble(const std::vector<BasePolicyPtr>& bases, const BcData& bc,
                          const AdaptSpec& spec, int threads) {
  AdaptReport report{spec.method, {}, -1, 0.0, {}};
  std::vector<AffineTransform> transforms;
  std::vector<std::vector<double>> histories;

  for (const BasePolicyPtr& base : bases) {
    const Vector& log_std = base->log_std();
    if (spec.method == AdaptMethod::kActionRealign) {
      Matrix latent;
      MlpForwardBatch(base->body(), bc.obs, &latent);
      const AffineTransform init = ActionReAlignPolicy::FinalLayerCopy(*base);
      const int in = init.in_dim();
      const int out = init.out_dim();
      auto loss_fn = [&](const Vector& theta, std::span<const std::size_t> batch) {
        return ReAlignBcLossAndGrad(AffineTransform::Unflatten(in, out, theta), log_std,
                                    latent, bc.targets, batch);
      };
      const SgdResult sgd = SgdTrain(loss_fn, init.Flatten(), bc.size(), spec.sgd);
      AffineTransform t = AffineTransform::Unflatten(in, out, sgd.params);
      report.per_base_losses.push_back(ReAlignBcLoss(t, log_std, latent, bc.targets));
      transforms.push_back(std::move(t));
      histories.push_back(sgd.loss_history);
      continue;
    }

    Objective objective;
    int dim = 0;
    Matrix base_means;
    if (spec.method == AdaptMethod::kObsAlign) {
      dim = base->obs_dim();
      objective = [&, dim](const Vector& theta) {
        return ObsAlignBcLoss(*base, AffineTransform::Unflatten(dim, dim, theta), bc);
      };
    } else {
      dim = base->body().output_dim();
      base_means = MlpForwardBatch(base->body(), bc.obs);
      objective = [&, dim](const Vector& theta) {
        return ActionAlignBcLoss(AffineTransform::Unflatten(dim, dim, theta), log_std,
                                 base_means, bc.targets);
      };
    }
    // every base uses the same search stream: selection is order-independent
    const CemResult cem =
        CemOptimize(objective, AffineTransform::Identity(dim).Flatten(), spec.cem, threads);
    report.per_base_losses.push_back(cem.best_value);
    transforms.push_back(AffineTransform::Unflatten(dim, dim, cem.best_params));
    std::vector<double> history;
    for (const CemIteration& it : cem.history) history.push_back(it.best);
    histories.push_back(std::move(history));
  }

  const auto best = std::min_element(report.per_base_losses.begin(), report.per_base_losses.end());
  const auto k = static_cast<std::size_t>(best - report.per_base_losses.begin());
  report.chosen_base = static_cast<int>(k);
  report.final_loss = *best;
  report.loss_history = histories[k];

  TargetPolicy policy{spec.method, ObsAlignPolicy(bases[k], AffineTransform::Identity(bases[k]->obs_dim())),
                      static_cast<int>(k)};
  switch (spec.method) {
    case AdaptMethod::kObsAlign:
      policy.policy = ObsAlignPolicy(bases[k], transforms[k]);
      break;
    case AdaptMethod::kActionAlign:
      policy.policy = ActionAlignPolicy(bases[k], transforms[k]);
      break;
    default:
      policy.policy = ActionReAlignPolicy(bases[k], transforms[k]);
      break;
  }
  return {std::move(policy), std::move(report)};
}

AdaptResult AdaptSwitching(const std::vector<BasePolicyPtr>& bases, const BcData& bc,
                           const AdaptSpec& spec) {
  const SwitchingData data = MakeSwitchingData(bc, bases);
  Rng rng(spec.seed);
  const MlpParams init = MlpParams::Random(
      LayerSizes(bases.front()->obs_dim(), spec.switch_hidden, static_cast<int>(bases.size())),
      rng);

  auto loss_fn = [&](const Vector& theta, std::span<const std::size_t> batch) {
    MlpParams net = init;
    net.Unflatten(theta);
    return SwitchingLossAndGrad(net, data, spec.alpha, batch);
  };
  auto check_fn = [&](const Vector& theta, const Vector& anchor,
                      std::span<const std::size_t> batch) {
    MlpParams net = init;
    net.Unflatten(theta);
    MlpParams target = init;
    target.Unflatten(anchor);
    return SwitchingLossAndGrad(net, data, spec.alpha, batch, &target).loss;
  };
  const SgdResult sgd = SgdTrain(loss_fn, init.Flatten(), bc.size(), spec.sgd, check_fn);

  MlpParams w_net = init;
  w_net.Unflatten(sgd.params);
  AdaptReport report{spec.method, {}, -1, SwitchingLoss(w_net, data, spec.alpha).total,
                     sgd.loss_history};
  const SwitchMode mode =
      spec.method == AdaptMethod::kSoftSwitch ? SwitchMode::kSoft : SwitchMode::kHard;
  TargetPolicy policy{spec.method, SwitchingPolicy(bases, std::move(w_net), mode, spec.epsilon),
                      -1};
  return {std::move(policy), std::move(report)};
}

}  // namespace

AdaptResult Adapt(const std::vector<BasePolicyPtr>& bases, const TransitionDataset& data,
                  const AdaptSpec& spec, int threads) {
  spec.Validate();
  if (bases.empty()) throw ConfigError("adapt: no base policies");
  if (data.empty()) throw ConfigError("adapt: empty demonstration dataset");
  if (!data.task_id.empty() && data.task_id != spec.target_task.task_id) {
    throw ConfigError("adapt: dataset was collected on '" + data.task_id +
                      "', not on the target task '" + spec.target_task.task_id + "'");
  }
  const BcData bc = MakeBcData(data);
  switch (spec.method) {
    case AdaptMethod::kSoftSwitch:
    case AdaptMethod::kHardSwitch:
      return AdaptSwitching(bases, bc, spec);
    default:
      return AdaptEnsemble(bases, bc, spec, threads);
  }
}

}  // namespace cartransfer
