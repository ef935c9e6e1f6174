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

#include "cartransfer/serialization.h"

#include <fstream>
#include <sstream>

namespace cartransfer {

namespace {

Json VectorJson(const Eigen::Ref<const Vector>& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Vector VectorFromJson(const Json& j, Eigen::Index expected = -1) {
  if (!j.is_array()) throw ConfigError("expected a numeric array");
  if (expected >= 0 && static_cast<Eigen::Index>(j.size()) != expected) {
    throw ConfigError("array has " + std::to_string(j.size()) + " entries, expected " +
                      std::to_string(expected));
  }
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

Json RowMajorJson(const Matrix& m) {
  Json out = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
  }
  return out;
}

Matrix RowMajorFromJson(const Json& j, Eigen::Index rows, Eigen::Index cols) {
  const Vector flat = VectorFromJson(j, rows * cols);
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = flat[r * cols + c];
  }
  return m;
}

void CheckVersion(const Json& j, const char* what) {
  if (j.contains("format_version") && j.at("format_version").get<int>() != kFormatVersion) {
    throw ConfigError(std::string(what) + ": unsupported format_version " +
                      j.at("format_version").dump());
  }
}

// Runs `fn`, turning JSON access errors into ConfigError with context.
template <typename Fn>
auto Guard(const char* what, Fn&& fn) {
  try {
    return fn();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string(what) + ": " + e.what());
  }
}

}  // namespace

Json ToJson(const MlpParams& params) {
  Json j;
  j["format_version"] = kFormatVersion;
  j["activation"] = std::string(ActivationName(params.activation));
  Json layers = Json::array();
  for (const DenseLayer& layer : params.layers) {
    Json l;
    l["rows"] = layer.weight.rows();
    l["cols"] = layer.weight.cols();
    l["weight"] = RowMajorJson(layer.weight);
    l["bias"] = VectorJson(layer.bias);
    layers.push_back(std::move(l));
  }
  j["layers"] = std::move(layers);
  return j;
}

MlpParams MlpParamsFromJson(const Json& j) {
  return Guard("mlp", [&] {
    CheckVersion(j, "mlp");
    MlpParams params;
    params.activation = ParseActivation(j.at("activation").get<std::string>());
    for (const Json& l : j.at("layers")) {
      const auto rows = l.at("rows").get<Eigen::Index>();
      const auto cols = l.at("cols").get<Eigen::Index>();
      params.layers.push_back(
          {RowMajorFromJson(l.at("weight"), rows, cols), VectorFromJson(l.at("bias"), rows)});
    }
    params.Validate();
    return params;
  });
}

Json ToJson(const AffineTransform& t) {
  Json j;
  j["format_version"] = kFormatVersion;
  j["in_dim"] = t.in_dim();
  j["out_dim"] = t.out_dim();
  j["A"] = RowMajorJson(t.a);
  j["b"] = VectorJson(t.b);
  return j;
}

AffineTransform AffineTransformFromJson(const Json& j) {
  return Guard("affine transform", [&] {
    CheckVersion(j, "affine transform");
    const auto in = j.at("in_dim").get<Eigen::Index>();
    const auto out = j.at("out_dim").get<Eigen::Index>();
    AffineTransform t{RowMajorFromJson(j.at("A"), out, in), VectorFromJson(j.at("b"), out)};
    t.Validate();
    return t;
  });
}

Json ToJson(const Task& task) {
  Json j;
  j["task_id"] = task.task_id;
  j["goal"] = {task.goal.x(), task.goal.y()};
  j["goal_radius"] = task.goal_radius;
  return j;
}

Task TaskFromJson(const Json& j) {
  return Guard("task", [&] {
    Task task;
    task.task_id = j.at("task_id").get<std::string>();
    const Vector goal = VectorFromJson(j.at("goal"), 2);
    task.goal = Eigen::Vector2d(goal[0], goal[1]);
    task.goal_radius = j.value("goal_radius", 1.0);
    return task;
  });
}

Json ToJson(const BasePolicy& policy) {
  Json j;
  j["format_version"] = kFormatVersion;
  j["kind"] = "base_policy";
  j["task_id"] = policy.task_id();
  j["log_std"] = VectorJson(policy.log_std());
  j["body"] = ToJson(policy.body());
  return j;
}

BasePolicy BasePolicyFromJson(const Json& j) {
  return Guard("base policy", [&] {
    CheckVersion(j, "base policy");
    if (j.at("kind").get<std::string>() != "base_policy") {
      throw ConfigError("base policy: document kind is '" + j.at("kind").get<std::string>() + "'");
    }
    return BasePolicy(j.at("task_id").get<std::string>(), MlpParamsFromJson(j.at("body")),
                      VectorFromJson(j.at("log_std")));
  });
}

Json ToJson(const EnvParams& p) {
  Json j;
  j["dt"] = p.dt;
  j["v_max"] = p.v_max;
  j["accel_gain"] = p.accel_gain;
  j["drag"] = p.drag;
  j["wheelbase"] = p.wheelbase;
  j["steer_gain"] = p.steer_gain;
  j["arena_half_width"] = p.arena_half_width;
  j["max_steps"] = p.max_steps;
  j["w_align"] = p.w_align;
  j["w_progress"] = p.w_progress;
  j["w_goal"] = p.w_goal;
  return j;
}

EnvParams EnvParamsFromJson(const Json& j) {
  return Guard("env", [&] {
    EnvParams p;
    p.dt = j.value("dt", p.dt);
    p.v_max = j.value("v_max", p.v_max);
    p.accel_gain = j.value("accel_gain", p.accel_gain);
    p.drag = j.value("drag", p.drag);
    p.wheelbase = j.value("wheelbase", p.wheelbase);
    p.steer_gain = j.value("steer_gain", p.steer_gain);
    p.arena_half_width = j.value("arena_half_width", p.arena_half_width);
    p.max_steps = j.value("max_steps", p.max_steps);
    p.w_align = j.value("w_align", p.w_align);
    p.w_progress = j.value("w_progress", p.w_progress);
    p.w_goal = j.value("w_goal", p.w_goal);
    p.Validate();
    return p;
  });
}

Json ToJson(const CemConfig& c) {
  Json j;
  j["population"] = c.population;
  j["elite_frac"] = c.elite_frac;
  j["iterations"] = c.iterations;
  j["init_std"] = c.init_std;
  j["std_floor"] = c.std_floor;
  return j;
}

CemConfig CemConfigFromJson(const Json& j) {
  return Guard("cem", [&] {
    CemConfig c;
    c.population = j.value("population", c.population);
    c.elite_frac = j.value("elite_frac", c.elite_frac);
    c.iterations = j.value("iterations", c.iterations);
    c.init_std = j.value("init_std", c.init_std);
    c.std_floor = j.value("std_floor", c.std_floor);
    c.Validate();
    return c;
  });
}

Json ToJson(const SgdConfig& c) {
  Json j;
  j["learning_rate"] = c.learning_rate;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["check_gradient"] = c.check_gradient;
  return j;
}

SgdConfig SgdConfigFromJson(const Json& j) {
  return Guard("sgd", [&] {
    SgdConfig c;
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.check_gradient = j.value("check_gradient", c.check_gradient);
    c.Validate();
    return c;
  });
}

Json ToJson(const EvalReport& r) {
  Json j;
  j["n_episodes"] = r.n_episodes;
  j["successes"] = r.successes;
  j["success_rate"] = r.success_rate;
  j["ci_low"] = r.ci_low;
  j["ci_high"] = r.ci_high;
  j["mean_return"] = r.mean_return;
  j["mean_episode_len"] = r.mean_episode_len;
  if (r.switching_rate) j["switching_rate"] = *r.switching_rate;
  return j;
}

Json ToJson(const AdaptReport& r) {
  Json j;
  j["method"] = std::string(AdaptMethodName(r.method));
  j["per_base_losses"] = r.per_base_losses;
  j["chosen_base"] = r.chosen_base;
  j["final_loss"] = r.final_loss;
  j["loss_history"] = r.loss_history;
  return j;
}

Json BundleToJson(const TargetPolicy& policy, const std::vector<std::string>& base_files) {
  Json j;
  j["format_version"] = kFormatVersion;
  j["kind"] = std::string(AdaptMethodName(policy.method));
  j["base_policy_files"] = base_files;
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, SwitchingPolicy>) {
          j["w_net"] = ToJson(p.w_net());
          j["mode"] = std::string(SwitchModeName(p.mode()));
          j["epsilon"] = p.epsilon();
        } else {
          j["chosen_base"] = policy.chosen_base;
          j["base_task_id"] = p.base().task_id();
          j["transform"] = ToJson(p.transform());
        }
      },
      policy.policy);
  return j;
}

LoadedBundle LoadBundle(const std::filesystem::path& path) {
  const Json j = ReadJsonFile(path);
  return Guard("bundle", [&] {
    CheckVersion(j, "bundle");
    const AdaptMethod method = ParseAdaptMethod(j.at("kind").get<std::string>());
    auto base_files = j.at("base_policy_files").get<std::vector<std::string>>();
    if (base_files.empty()) throw ConfigError("bundle lists no base policy files");
    std::vector<BasePolicyPtr> bases;
    for (const std::string& file : base_files) {
      std::filesystem::path p(file);
      if (p.is_relative()) p = path.parent_path() / p;
      bases.push_back(std::make_shared<const BasePolicy>(LoadBasePolicy(p)));
    }
    if (method == AdaptMethod::kSoftSwitch || method == AdaptMethod::kHardSwitch) {
      SwitchingPolicy policy(bases, MlpParamsFromJson(j.at("w_net")),
                             ParseSwitchMode(j.at("mode").get<std::string>()),
                             j.at("epsilon").get<double>());
      return LoadedBundle{{method, std::move(policy), -1}, std::move(base_files)};
    }
    const int chosen = j.at("chosen_base").get<int>();
    if (chosen < 0 || static_cast<std::size_t>(chosen) >= bases.size()) {
      throw ConfigError("bundle chosen_base out of range");
    }
    AffineTransform t = AffineTransformFromJson(j.at("transform"));
    const BasePolicyPtr& base = bases[static_cast<std::size_t>(chosen)];
    auto make = [&]() -> TargetPolicyVariant {
      switch (method) {
        case AdaptMethod::kObsAlign:
          return ObsAlignPolicy(base, std::move(t));
        case AdaptMethod::kActionAlign:
          return ActionAlignPolicy(base, std::move(t));
        default:
          return ActionReAlignPolicy(base, std::move(t));
      }
    };
    return LoadedBundle{{method, make(), chosen}, std::move(base_files)};
  });
}

Json ReadJsonFile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read '" + path.string() + "'");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

void WriteJsonFile(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

BasePolicy LoadBasePolicy(const std::filesystem::path& path) {
  try {
    return BasePolicyFromJson(ReadJsonFile(path));
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    if (what.find(path.string()) != std::string::npos) throw;
    throw ConfigError("'" + path.string() + "': " + what);
  }
}

}  // namespace cartransfer
