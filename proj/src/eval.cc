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

#include "cartransfer/eval.h"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <fmt/format.h>

#include "cartransfer/parallel.h"
#include "cartransfer/rollout.h"

namespace cartransfer {

WilsonInterval Wilson(int successes, int n, double z) {
  if (n <= 0 || successes < 0 || successes > n) {
    throw ConfigError("wilson interval needs 0 <= successes <= n and n > 0");
  }
  const double nn = static_cast<double>(n);
  const double p = successes / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double centre = (p + z2 / (2.0 * nn)) / denom;
  const double half = z / denom * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn));
  // clamp rounding so that low <= p <= high holds exactly
  return {std::clamp(std::min(centre - half, p), 0.0, 1.0),
          std::clamp(std::max(centre + half, p), 0.0, 1.0)};
}

EvalReport Evaluate(const Actor& policy, const Task& task, const EvalOptions& options,
                    const EnvParams& env_params, WeightLog* weight_log) {
  if (options.n_episodes < 1) throw ConfigError("evaluation needs n_episodes >= 1");
  const CarGoalEnv env(env_params);
  RolloutOptions rollout;
  rollout.mode = options.mode;

  const auto n = static_cast<std::size_t>(options.n_episodes);
  std::vector<EpisodeLog> logs(n);
  ParallelFor(n, options.threads, [&](std::size_t i) {
    auto actor = policy.Clone();
    logs[i] = RunEpisode(env, task, *actor, DeriveSeed(options.seed, i), rollout);
  });

  EvalReport report;
  report.n_episodes = options.n_episodes;
  double total_return = 0.0;
  double total_len = 0.0;
  std::vector<std::vector<int>> selections;
  for (EpisodeLog& log : logs) {
    report.successes += log.success ? 1 : 0;
    total_return += log.total_return;
    total_len += log.length;
    if (!log.selections.empty()) selections.push_back(std::move(log.selections));
    if (weight_log != nullptr && !log.weights.empty()) weight_log->push_back(std::move(log.weights));
  }
  report.success_rate = report.successes / static_cast<double>(n);
  const WilsonInterval ci = Wilson(report.successes, options.n_episodes);
  report.ci_low = ci.low;
  report.ci_high = ci.high;
  report.mean_return = total_return / static_cast<double>(n);
  report.mean_episode_len = total_len / static_cast<double>(n);
  if (!selections.empty()) report.switching_rate = SwitchingRate(selections);
  return report;
}

double SwitchingRate(const std::vector<std::vector<int>>& selections) {
  std::size_t steps = 0;
  std::size_t switches = 0;
  for (const auto& episode : selections) {
    steps += episode.size();
    for (std::size_t t = 1; t < episode.size(); ++t) {
      if (episode[t] != episode[t - 1]) ++switches;
    }
  }
  if (steps == 0) throw ConfigError("switching rate of an empty log");
  return 100.0 * static_cast<double>(switches) / static_cast<double>(steps);
}

std::vector<std::vector<int>> ReplaySelections(const WeightLog& weights, double epsilon) {
  std::vector<std::vector<int>> out;
  out.reserve(weights.size());
  for (const auto& episode : weights) {
    std::vector<int> selected;
    std::optional<int> current;
    for (const Vector& w : episode) {
      current = HysteresisSelect(std::span<const double>(w.data(), static_cast<std::size_t>(w.size())),
                                 current, epsilon);
      selected.push_back(*current);
    }
    out.push_back(std::move(selected));
  }
  return out;
}

double ReplaySwitchingRate(const WeightLog& weights, double epsilon) {
  return SwitchingRate(ReplaySelections(weights, epsilon));
}

std::string_view SweepAxisName(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::kEpsilon:
      return "epsilon";
    case SweepAxis::kAlpha:
      return "alpha";
    case SweepAxis::kDemoBudget:
      return "demo_budget";
  }
  return "unknown";
}

SweepAxis ParseSweepAxis(std::string_view name) {
  if (name == "epsilon") return SweepAxis::kEpsilon;
  if (name == "alpha") return SweepAxis::kAlpha;
  if (name == "demo_budget") return SweepAxis::kDemoBudget;
  throw ConfigError(fmt::format("unknown sweep axis '{}'; valid axes: epsilon, alpha, demo_budget",
                                name));
}

void SweepSpec::Validate() const {
  if (values.empty()) throw ConfigError("sweep: empty grid");
  for (double v : values) {
    if (!std::isfinite(v)) throw ConfigError("sweep: grid values must be finite");
    if (axis == SweepAxis::kEpsilon && v < 0.0) throw ConfigError("sweep: epsilon must be >= 0");
    if (axis == SweepAxis::kAlpha && (v < 0.0 || v > 1.0)) {
      throw ConfigError("sweep: alpha must lie in [0, 1]");
    }
    if (axis == SweepAxis::kDemoBudget && (v < 1.0 || v != std::floor(v))) {
      throw ConfigError("sweep: demo budgets must be positive integers");
    }
  }
  if (axis == SweepAxis::kEpsilon && adapt.method != AdaptMethod::kHardSwitch) {
    throw ConfigError("sweep: the epsilon axis needs method hard_switch");
  }
  if (axis == SweepAxis::kAlpha && adapt.method != AdaptMethod::kHardSwitch &&
      adapt.method != AdaptMethod::kSoftSwitch) {
    throw ConfigError("sweep: the alpha axis needs a switching method");
  }
  if (eval.n_episodes < 1) throw ConfigError("sweep: evaluation needs n_episodes >= 1");
  adapt.Validate();
}

WeightLog DatasetWeights(const SwitchingPolicy& policy, const TransitionDataset& data) {
  WeightLog log;
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    if (i == 0 || data.records[i].episode_id != data.records[i - 1].episode_id) {
      log.emplace_back();
    }
    log.back().push_back(policy.Weights(data.records[i].obs));
  }
  return log;
}

double DatasetSwitchingRate(const SwitchingPolicy& policy, const TransitionDataset& data,
                            double epsilon) {
  return ReplaySwitchingRate(DatasetWeights(policy, data), epsilon);
}

namespace {

std::optional<double> DataRate(const TargetPolicy& policy, const TransitionDataset& data,
                               double epsilon) {
  if (const auto* sp = std::get_if<SwitchingPolicy>(&policy.policy)) {
    return DatasetSwitchingRate(*sp, data, epsilon);
  }
  return std::nullopt;
}

}  // namespace

std::vector<SweepRow> Sweep(const SweepSpec& spec, const std::vector<BasePolicyPtr>& bases,
                            const TransitionDataset& demos, const EnvParams& env_params) {
  spec.Validate();
  std::vector<SweepRow> rows;
  const int threads = spec.eval.threads;

  if (spec.axis == SweepAxis::kEpsilon) {
    const AdaptResult trained = Adapt(bases, demos, spec.adapt, threads);
    const auto& base = std::get<SwitchingPolicy>(trained.policy.policy);
    for (double eps : spec.values) {
      const SwitchingPolicy policy = base.WithMode(SwitchMode::kHard, eps);
      rows.push_back({eps, Evaluate(policy, spec.adapt.target_task, spec.eval, env_params),
                      trained.report.final_loss, DatasetSwitchingRate(policy, demos, eps)});
    }
    return rows;
  }

  for (double value : spec.values) {
    AdaptSpec adapt = spec.adapt;
    TransitionDataset local;
    const TransitionDataset* data = &demos;
    if (spec.axis == SweepAxis::kAlpha) {
      adapt.alpha = value;
    } else {
      adapt.demo_budget = static_cast<int>(value);
      local = CollectDemos(ScriptedExpert(adapt.target_task), adapt.target_task,
                           adapt.demo_budget, spec.demo_seed, env_params, threads,
                           DataSource::kExpert, spec.demo_noise);
      data = &local;
    }
    const AdaptResult result = Adapt(bases, *data, adapt, threads);
    const auto actor = result.policy.MakeActor();
    rows.push_back({value, Evaluate(*actor, adapt.target_task, spec.eval, env_params),
                    result.report.final_loss, DataRate(result.policy, *data, adapt.epsilon)});
  }
  return rows;
}

void WriteSweepCsv(std::ostream& out, SweepAxis axis, const std::vector<SweepRow>& rows) {
  const auto optional = [](const std::optional<double>& v) {
    return v ? fmt::format("{}", *v) : std::string();
  };
  out << SweepAxisName(axis)
      << ",success,ci_low,ci_high,switching_rate,data_switching_rate,final_loss\n";
  for (const SweepRow& row : rows) {
    out << fmt::format("{},{},{},{},{},{},{}\n", row.value, row.report.success_rate,
                       row.report.ci_low, row.report.ci_high,
                       optional(row.report.switching_rate), optional(row.data_switching_rate),
                       row.final_loss);
  }
}

}  // namespace cartransfer
