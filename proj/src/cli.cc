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

#include "cartransfer/cli.h"

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "cartransfer/dataset.h"
#include "cartransfer/optim.h"
#include "cartransfer/rollout.h"

namespace cartransfer {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// config

namespace {

constexpr std::uint64_t kCollectStream = 2;
constexpr std::uint64_t kAdaptStream = 3;
constexpr std::uint64_t kEvalStream = 4;

void CheckKeys(const Json& j, std::initializer_list<const char*> allowed,
               const std::string& section) {
  if (!j.is_object()) throw ConfigError(section + ": expected an object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* key : allowed) known = known || item.key() == key;
    if (!known) throw ConfigError(section + ": unknown key '" + item.key() + "'");
  }
}

std::string_view ActModeName(ActMode mode) {
  return mode == ActMode::kMean ? "mean" : "sample";
}

ActMode ParseActMode(const std::string& name) {
  if (name == "mean") return ActMode::kMean;
  if (name == "sample") return ActMode::kSample;
  throw ConfigError("eval: mode must be 'mean' or 'sample', got '" + name + "'");
}

std::uint64_t Fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string ShortHash(const Json& j) {
  return fmt::format("{:08x}", Fnv1a(j.dump()) & 0xffffffffULL);
}

Json PretrainJson(const PretrainSpec& p) {
  Json j;
  j["hidden"] = p.hidden;
  j["log_std"] = p.log_std;
  j["init_gain"] = p.init_gain;
  j["episodes_per_eval"] = p.episodes_per_eval;
  j["rollout_horizon"] = p.rollout_horizon;
  j["eval_episodes"] = p.eval_episodes;
  j["success_gate"] = p.success_gate;
  j["restarts"] = p.restarts;
  j["cem"] = ToJson(p.cem);
  return j;
}

PretrainSpec PretrainFromJson(const Json& j) {
  CheckKeys(j, {"hidden", "log_std", "init_gain", "episodes_per_eval", "rollout_horizon",
                "eval_episodes", "success_gate", "restarts", "cem"},
            "pretrain");
  PretrainSpec p;
  p.hidden = j.value("hidden", p.hidden);
  p.log_std = j.value("log_std", p.log_std);
  p.init_gain = j.value("init_gain", p.init_gain);
  p.episodes_per_eval = j.value("episodes_per_eval", p.episodes_per_eval);
  p.rollout_horizon = j.value("rollout_horizon", p.rollout_horizon);
  p.eval_episodes = j.value("eval_episodes", p.eval_episodes);
  p.success_gate = j.value("success_gate", p.success_gate);
  p.restarts = j.value("restarts", p.restarts);
  if (j.contains("cem")) p.cem = CemConfigFromJson(j.at("cem"));
  return p;
}

Json AdaptJson(const AdaptSpec& a) {
  Json j;
  j["method"] = std::string(AdaptMethodName(a.method));
  j["alpha"] = a.alpha;
  j["epsilon"] = a.epsilon;
  j["switch_hidden"] = a.switch_hidden;
  j["cem"] = ToJson(a.cem);
  j["sgd"] = ToJson(a.sgd);
  return j;
}

AdaptSpec AdaptFromJson(const Json& j) {
  CheckKeys(j, {"method", "alpha", "epsilon", "switch_hidden", "cem", "sgd"}, "adapt");
  AdaptSpec a;
  if (j.contains("method")) a.method = ParseAdaptMethod(j.at("method").get<std::string>());
  a.alpha = j.value("alpha", a.alpha);
  a.epsilon = j.value("epsilon", a.epsilon);
  a.switch_hidden = j.value("switch_hidden", a.switch_hidden);
  if (j.contains("cem")) a.cem = CemConfigFromJson(j.at("cem"));
  if (j.contains("sgd")) a.sgd = SgdConfigFromJson(j.at("sgd"));
  return a;
}

}  // namespace

std::uint64_t ExperimentConfig::collect_seed() const { return DeriveSeed(seed, kCollectStream); }
std::uint64_t ExperimentConfig::adapt_seed() const { return DeriveSeed(seed, kAdaptStream); }
std::uint64_t ExperimentConfig::eval_seed() const { return DeriveSeed(seed, kEvalStream); }

void ExperimentConfig::Validate() const {
  env.Validate();
  PretrainSpec p = pretrain;
  p.base_tasks = base_tasks;
  p.Validate(env);
  target_task.Validate(env);
  if (demo_budget <= 0) throw ConfigError("collect: demo_budget must be > 0");
  if (!(demo_noise >= 0.0) || !std::isfinite(demo_noise)) {
    throw ConfigError("collect: execution_noise must be finite and >= 0");
  }
  AdaptSpec a = adapt;
  a.demo_budget = demo_budget;
  a.Validate();
  if (eval_episodes < 1) throw ConfigError("eval: n_episodes must be >= 1");
  for (const auto& [axis, grid] : sweeps) {
    SweepSpec s;
    s.axis = axis;
    s.values = grid.values;
    s.adapt = a;
    s.adapt.method = grid.method;
    s.Validate();
  }
}

ExperimentConfig ConfigFromJson(const Json& j) {
  try {
    CheckKeys(j, {"seed", "env", "base_tasks", "target_task", "pretrain", "collect", "adapt",
                  "eval", "sweep"},
              "config");
    if (!j.contains("seed")) throw ConfigError("config: 'seed' is required");
    if (!j.at("seed").is_number_unsigned()) {
      throw ConfigError("config: 'seed' must be a non-negative integer");
    }
    ExperimentConfig c;
    c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("env")) c.env = EnvParamsFromJson(j.at("env"));
    if (!j.contains("base_tasks") || !j.at("base_tasks").is_array()) {
      throw ConfigError("config: 'base_tasks' must be a list of tasks");
    }
    for (const Json& t : j.at("base_tasks")) c.base_tasks.push_back(TaskFromJson(t));
    if (!j.contains("target_task")) throw ConfigError("config: 'target_task' is required");
    c.target_task = TaskFromJson(j.at("target_task"));
    if (j.contains("pretrain")) c.pretrain = PretrainFromJson(j.at("pretrain"));
    if (j.contains("collect")) {
      const Json& col = j.at("collect");
      CheckKeys(col, {"demo_budget", "execution_noise"}, "collect");
      c.demo_budget = col.value("demo_budget", c.demo_budget);
      c.demo_noise = col.value("execution_noise", c.demo_noise);
    }
    if (j.contains("adapt")) c.adapt = AdaptFromJson(j.at("adapt"));
    if (j.contains("eval")) {
      const Json& ev = j.at("eval");
      CheckKeys(ev, {"n_episodes", "mode"}, "eval");
      c.eval_episodes = ev.value("n_episodes", c.eval_episodes);
      c.eval_mode = ParseActMode(ev.value("mode", std::string("mean")));
    }
    if (j.contains("sweep")) {
      const Json& sw = j.at("sweep");
      CheckKeys(sw, {"epsilon", "alpha", "demo_budget"}, "sweep");
      for (const auto& item : sw.items()) {
        CheckKeys(item.value(), {"values", "method"}, "sweep." + item.key());
        SweepGrid grid;
        grid.values = item.value().at("values").get<std::vector<double>>();
        if (item.value().contains("method")) {
          grid.method = ParseAdaptMethod(item.value().at("method").get<std::string>());
        }
        c.sweeps[ParseSweepAxis(item.key())] = grid;
      }
    }
    c.Validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

Json ToJson(const ExperimentConfig& c) {
  Json j;
  j["seed"] = c.seed;
  j["env"] = ToJson(c.env);
  j["base_tasks"] = Json::array();
  for (const Task& t : c.base_tasks) j["base_tasks"].push_back(ToJson(t));
  j["target_task"] = ToJson(c.target_task);
  j["pretrain"] = PretrainJson(c.pretrain);
  j["collect"] = {{"demo_budget", c.demo_budget}, {"execution_noise", c.demo_noise}};
  j["adapt"] = AdaptJson(c.adapt);
  j["eval"] = {{"n_episodes", c.eval_episodes}, {"mode", std::string(ActModeName(c.eval_mode))}};
  Json sweep = Json::object();
  for (const auto& [axis, grid] : c.sweeps) {
    sweep[std::string(SweepAxisName(axis))] = {
        {"values", grid.values}, {"method", std::string(AdaptMethodName(grid.method))}};
  }
  j["sweep"] = std::move(sweep);
  return j;
}

ExperimentConfig LoadConfig(const fs::path& path) {
  try {
    return ConfigFromJson(ReadJsonFile(path));
  } catch (const ConfigError& e) {
    throw ConfigError("'" + path.string() + "': " + e.what());
  }
}

std::string ConfigHash(const ExperimentConfig& config) { return ShortHash(ToJson(config)); }

// ---------------------------------------------------------------------------
// commands

namespace {

struct CommonArgs {
  std::string config;
  std::string out = "runs";
  std::optional<std::uint64_t> seed;
  int threads = 1;
};

struct Context {
  ExperimentConfig config;
  fs::path out;
  int threads = 1;
  std::ostream* log = nullptr;
};

// Each stage's file names carry a hash of only the sections it depends on, so
// later stages can find earlier outputs while their own settings vary.
Json PretrainSection(const ExperimentConfig& c) {
  const Json full = ToJson(c);
  return {{"seed", c.seed}, {"env", full["env"]}, {"base_tasks", full["base_tasks"]},
          {"pretrain", full["pretrain"]}};
}

Json CollectSection(const ExperimentConfig& c) {
  const Json full = ToJson(c);
  return {{"seed", c.seed}, {"env", full["env"]}, {"target_task", full["target_task"]},
          {"collect", full["collect"]}};
}

Json AdaptSection(const ExperimentConfig& c) {
  return {{"pretrain", PretrainSection(c)},
          {"collect", CollectSection(c)},
          {"adapt", AdaptJson(c.adapt)}};
}

std::string Tag(std::uint64_t seed, const Json& section) {
  return fmt::format("s{}_{}", seed, ShortHash(section));
}

fs::path BasePolicyPath(const Context& ctx, const Task& task) {
  return ctx.out / "policies" /
         fmt::format("base_{}_{}.json", task.task_id, Tag(ctx.config.seed, PretrainSection(ctx.config)));
}

fs::path DatasetPath(const Context& ctx) {
  return ctx.out / "datasets" /
         fmt::format("demos_{}_{}.jsonl", ctx.config.target_task.task_id,
                     Tag(ctx.config.seed, CollectSection(ctx.config)));
}

fs::path MetadataPath(const fs::path& dataset) {
  fs::path meta = dataset;
  meta.replace_extension(".meta.json");
  return meta;
}

fs::path BundlePath(const Context& ctx) {
  return ctx.out / "bundles" /
         fmt::format("{}_{}.json", AdaptMethodName(ctx.config.adapt.method),
                     Tag(ctx.config.seed, AdaptSection(ctx.config)));
}

Json Provenance(const Context& ctx, std::string_view command) {
  Json j;
  j["command"] = std::string(command);
  j["seed"] = ctx.config.seed;
  j["config_hash"] = ConfigHash(ctx.config);
  j["config"] = ToJson(ctx.config);
  return j;
}

void WriteText(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
}

void EnsureDirs(const Context& ctx, std::initializer_list<const char*> subdirs) {
  for (const char* d : subdirs) fs::create_directories(ctx.out / d);
}

std::vector<BasePolicyPtr> LoadBases(const Context& ctx, std::vector<std::string>& files) {
  if (files.empty()) {
    for (const Task& t : ctx.config.base_tasks) files.push_back(BasePolicyPath(ctx, t).string());
  }
  std::vector<BasePolicyPtr> bases;
  for (const std::string& f : files) {
    bases.push_back(std::make_shared<const BasePolicy>(LoadBasePolicy(f)));
  }
  return bases;
}

TransitionDataset LoadDataset(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read dataset '" + path.string() + "'");
  TransitionDataset data;
  try {
    data = ReadJsonl(in);
    const fs::path meta = MetadataPath(path);
    if (fs::exists(meta)) {
      std::ifstream meta_in(meta);
      std::stringstream buffer;
      buffer << meta_in.rdbuf();
      ApplyMetadataJson(buffer.str(), data);
    }
    data.Validate();
  } catch (const ConfigError& e) {
    throw ConfigError("dataset '" + path.string() + "': " + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("dataset '" + path.string() + "': " + e.what());
  }
  return data;
}

AdaptSpec StageAdaptSpec(const ExperimentConfig& c) {
  AdaptSpec a = c.adapt;
  a.target_task = c.target_task;
  a.demo_budget = c.demo_budget;
  a.seed = c.adapt_seed();
  a.cem.seed = c.adapt_seed();
  a.sgd.seed = c.adapt_seed();
  return a;
}

EvalOptions StageEvalOptions(const Context& ctx) {
  EvalOptions e;
  e.n_episodes = ctx.config.eval_episodes;
  e.seed = ctx.config.eval_seed();
  e.mode = ctx.config.eval_mode;
  e.threads = ctx.threads;
  return e;
}

std::string Summary(const std::string& name, const Task& task, const EvalReport& r) {
  std::string line = fmt::format(
      "{} on {}: success {:.3f} (95% CI {:.3f}-{:.3f}) over {} episodes, mean return {:.2f}, "
      "mean length {:.1f}",
      name, task.task_id, r.success_rate, r.ci_low, r.ci_high, r.n_episodes, r.mean_return,
      r.mean_episode_len);
  if (r.switching_rate) line += fmt::format(", switching rate {:.2f}/100 steps", *r.switching_rate);
  return line;
}

std::string HistoryCsv(const std::vector<CemIteration>& history) {
  std::string csv = "iteration,best,mean\n";
  for (const CemIteration& it : history) {
    csv += fmt::format("{},{},{}\n", it.iteration, it.best, it.mean);
  }
  return csv;
}

int CmdPretrain(const Context& ctx) {
  const ExperimentConfig& c = ctx.config;
  PretrainSpec spec = c.pretrain;
  spec.base_tasks = c.base_tasks;
  spec.seed = c.seed;

  std::vector<PretrainResult> results;
  Json report = Provenance(ctx, "pretrain");
  report["policies"] = Json::array();
  for (const Task& task : c.base_tasks) {
    try {
      results.push_back(TrainBasePolicy(task, spec, c.env, ctx.threads));
    } catch (const PretrainGateError& e) {
      EnsureDirs(ctx, {"reports"});
      report["status"] = "gate_failed";
      report["failed_task"] = task.task_id;
      report["best_success_rate"] = e.success_rate();
      WriteJsonFile(ctx.out / "reports" / fmt::format("pretrain_{}.json", Tag(c.seed, PretrainSection(c))),
                    report);
      throw;
    }
    *ctx.log << fmt::format("{}: success {:.3f} on its own task ({} attempt(s))\n", task.task_id,
                            results.back().success_rate, results.back().attempts);
  }

  EnsureDirs(ctx, {"policies", "reports"});
  const std::string tag = Tag(c.seed, PretrainSection(c));
  for (std::size_t i = 0; i < results.size(); ++i) {
    const Task& task = c.base_tasks[i];
    const fs::path path = BasePolicyPath(ctx, task);
    WriteJsonFile(path, ToJson(results[i].policy));
    const fs::path history = ctx.out / "reports" / fmt::format("pretrain_{}_history_{}.csv",
                                                               task.task_id, tag);
    WriteText(history, HistoryCsv(results[i].history));
    report["policies"].push_back({{"task_id", task.task_id},
                                  {"file", path.filename().string()},
                                  {"success_rate", results[i].success_rate},
                                  {"attempts", results[i].attempts},
                                  {"history_csv", history.filename().string()}});
  }
  report["status"] = "ok";
  WriteJsonFile(ctx.out / "reports" / fmt::format("pretrain_{}.json", tag), report);
  return kExitOk;
}

int CmdCollect(const Context& ctx) {
  const ExperimentConfig& c = ctx.config;
  const TransitionDataset data =
      CollectDemos(ScriptedExpert(c.target_task), c.target_task, c.demo_budget, c.collect_seed(),
                   c.env, ctx.threads, DataSource::kExpert, c.demo_noise);
  EnsureDirs(ctx, {"datasets"});
  const fs::path path = DatasetPath(ctx);
  std::ostringstream jsonl;
  WriteJsonl(jsonl, data);
  WriteText(path, jsonl.str());
  WriteText(MetadataPath(path), MetadataJson(data));
  *ctx.log << fmt::format("{} timesteps in {} episodes -> {}\n", data.size(), data.num_episodes(),
                          path.string());
  return kExitOk;
}

int CmdAdapt(const Context& ctx, std::vector<std::string> base_files,
             const std::string& dataset_file) {
  const ExperimentConfig& c = ctx.config;
  const std::vector<BasePolicyPtr> bases = LoadBases(ctx, base_files);
  const fs::path dataset = dataset_file.empty() ? DatasetPath(ctx) : fs::path(dataset_file);
  const TransitionDataset data = LoadDataset(dataset);
  if (data.task_id != c.target_task.task_id) {
    throw ConfigError("dataset '" + dataset.string() + "' is for task '" + data.task_id +
                      "', config target is '" + c.target_task.task_id + "'");
  }
  const AdaptResult result = Adapt(bases, data, StageAdaptSpec(c), ctx.threads);

  EnsureDirs(ctx, {"bundles", "reports"});
  const fs::path bundle = BundlePath(ctx);
  std::vector<std::string> relative;
  for (const std::string& f : base_files) {
    relative.push_back(fs::absolute(f).lexically_normal()
                           .lexically_relative(fs::absolute(bundle.parent_path()).lexically_normal())
                           .generic_string());
  }
  WriteJsonFile(bundle, BundleToJson(result.policy, relative));

  Json report = Provenance(ctx, "adapt");
  report["bundle"] = bundle.filename().string();
  report["dataset"] = dataset.filename().string();
  report["dataset_size"] = data.size();
  report["bases"] = Json::array();
  for (const BasePolicyPtr& b : bases) report["bases"].push_back(b->task_id());
  const Json training = ToJson(result.report);
  for (const auto& item : training.items()) report[item.key()] = item.value();
  if (result.report.chosen_base >= 0) {
    report["chosen_base_task"] = bases[static_cast<std::size_t>(result.report.chosen_base)]->task_id();
  }
  WriteJsonFile(ctx.out / "reports" /
                    fmt::format("adapt_{}_{}.json", AdaptMethodName(c.adapt.method),
                                Tag(c.seed, AdaptSection(c))),
                report);

  std::string line = fmt::format("{}: final loss {:.6g}", AdaptMethodName(c.adapt.method),
                                 result.report.final_loss);
  if (result.report.chosen_base >= 0) {
    line += fmt::format(", chosen base {}", bases[static_cast<std::size_t>(result.report.chosen_base)]->task_id());
  }
  *ctx.log << line << " -> " << bundle.string() << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string bundle;
  std::string base;
  bool expert = false;
  std::string task;
  bool trajectory = false;
};

int CmdEval(const Context& ctx, const EvalArgs& args) {
  const ExperimentConfig& c = ctx.config;
  if (static_cast<int>(args.expert) + static_cast<int>(!args.base.empty()) +
          static_cast<int>(!args.bundle.empty()) > 1) {
    throw ConfigError("eval: pick at most one of --bundle, --base, --expert");
  }
  Task task = c.target_task;
  if (!args.task.empty() && args.task != task.task_id) {
    bool found = false;
    for (const Task& t : c.base_tasks) {
      if (t.task_id == args.task) {
        task = t;
        found = true;
      }
    }
    if (!found) throw ConfigError("eval: unknown task '" + args.task + "'");
  }

  std::unique_ptr<Actor> actor;
  std::string name;
  Json source;
  if (args.expert) {
    actor = std::make_unique<ScriptedExpert>(task);
    name = "expert";
    source = "scripted_expert";
  } else if (!args.base.empty()) {
    auto base = std::make_shared<const BasePolicy>(LoadBasePolicy(args.base));
    actor = std::make_unique<BaseActor>(base);
    name = "base_" + base->task_id();
    source = fs::path(args.base).filename().string();
  } else {
    const fs::path bundle = args.bundle.empty() ? BundlePath(ctx) : fs::path(args.bundle);
    const LoadedBundle loaded = [&] {
      try {
        return LoadBundle(bundle);
      } catch (const ConfigError& e) {
        const std::string what = e.what();
        if (what.find(bundle.string()) != std::string::npos) throw;
        throw ConfigError("bundle '" + bundle.string() + "': " + what);
      }
    }();
    actor = loaded.policy.MakeActor();
    name = std::string(AdaptMethodName(loaded.policy.method));
    source = bundle.filename().string();
  }

  const EvalOptions options = StageEvalOptions(ctx);
  const EvalReport report = Evaluate(*actor, task, options, c.env);

  EnsureDirs(ctx, {"reports"});
  const std::string tag = Tag(c.seed, ToJson(c));
  Json doc = Provenance(ctx, "eval");
  doc["policy"] = name;
  doc["source"] = source;
  doc["task_id"] = task.task_id;
  doc["eval_seed"] = options.seed;
  doc["report"] = ToJson(report);
  WriteJsonFile(ctx.out / "reports" / fmt::format("eval_{}_{}_{}.json", name, task.task_id, tag),
                doc);
  if (args.trajectory) {
    const CarGoalEnv env(c.env);
    RolloutOptions rollout;
    rollout.mode = options.mode;
    rollout.record_trajectory = true;
    std::unique_ptr<Actor> episode_actor = actor->Clone();
    const EpisodeLog log = RunEpisode(env, task, *episode_actor, DeriveSeed(options.seed, 0), rollout);
    std::ostringstream csv;
    WriteTrajectoryCsv(csv, log.trajectory);
    WriteText(ctx.out / "reports" / fmt::format("traj_{}_{}_{}.csv", name, task.task_id, tag),
              csv.str());
  }
  *ctx.log << Summary(name, task, report) << "\n";
  return kExitOk;
}

struct SweepArgs {
  std::string axis = "epsilon";
  std::vector<double> values;
  std::vector<std::string> bases;
  std::string dataset;
};

int CmdSweep(const Context& ctx, SweepArgs args) {
  const ExperimentConfig& c = ctx.config;
  const SweepAxis axis = ParseSweepAxis(args.axis);
  SweepSpec spec;
  spec.axis = axis;
  spec.adapt = StageAdaptSpec(c);
  spec.eval = StageEvalOptions(ctx);
  spec.demo_seed = c.collect_seed();
  spec.demo_noise = c.demo_noise;
  const auto grid = c.sweeps.find(axis);
  if (grid != c.sweeps.end()) {
    spec.values = grid->second.values;
    spec.adapt.method = grid->second.method;
  }
  if (!args.values.empty()) spec.values = args.values;
  if (spec.values.empty()) {
    throw ConfigError(fmt::format("sweep: no values for axis '{}' (config or --values)", args.axis));
  }
  spec.Validate();

  const std::vector<BasePolicyPtr> bases = LoadBases(ctx, args.bases);
  TransitionDataset demos;
  if (axis != SweepAxis::kDemoBudget || !args.dataset.empty()) {
    demos = LoadDataset(args.dataset.empty() ? DatasetPath(ctx) : fs::path(args.dataset));
  }
  const std::vector<SweepRow> rows = Sweep(spec, bases, demos, c.env);

  EnsureDirs(ctx, {"reports"});
  std::ostringstream csv;
  WriteSweepCsv(csv, axis, rows);
  const fs::path path =
      ctx.out / "reports" /
      fmt::format("sweep_{}_{}_{}.csv", args.axis, AdaptMethodName(spec.adapt.method),
                  Tag(c.seed, ToJson(c)));
  WriteText(path, csv.str());
  for (const SweepRow& row : rows) {
    *ctx.log << fmt::format("{}={}: ", args.axis, row.value)
             << Summary(std::string(AdaptMethodName(spec.adapt.method)), c.target_task, row.report)
             << "\n";
  }
  *ctx.log << "-> " << path.string() << "\n";
  return kExitOk;
}

void AddCommon(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config, "experiment config (JSON)")->required();
  cmd->add_option("--out", args.out, "output directory")->capture_default_str();
  cmd->add_option("--seed", args.seed, "override the config seed");
  cmd->add_option("--threads", args.threads, "worker threads")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
}

}  // namespace

int RunCli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Few-shot transfer of pre-trained car policies to a new goal."};
  app.name("cartransfer");
  app.require_subcommand(1);

  CommonArgs common;
  std::string method;
  std::vector<std::string> base_files;
  std::string dataset;
  EvalArgs eval_args;
  SweepArgs sweep_args;

  auto* pretrain = app.add_subcommand("pretrain", "train one base policy per base task");
  AddCommon(pretrain, common);
  auto* collect = app.add_subcommand("collect", "record expert demonstrations on the target");
  AddCommon(collect, common);
  auto* adapt = app.add_subcommand("adapt", "fit a target policy from the demonstrations");
  AddCommon(adapt, common);
  adapt->add_option("--method", method, "override adapt.method");
  adapt->add_option("--bases", base_files, "base policy files (default: pretrain outputs)");
  adapt->add_option("--dataset", dataset, "demonstrations (default: collect output)");
  auto* eval = app.add_subcommand("eval", "evaluate a bundle, a base policy or the expert");
  AddCommon(eval, common);
  eval->add_option("--method", method, "override adapt.method when locating the bundle");
  eval->add_option("--bundle", eval_args.bundle, "target policy bundle");
  eval->add_option("--base", eval_args.base, "evaluate an unadapted base policy file");
  eval->add_flag("--expert", eval_args.expert, "evaluate the scripted expert");
  eval->add_option("--task", eval_args.task, "task id to evaluate on (default: target)");
  eval->add_flag("--trajectory", eval_args.trajectory, "also write the first episode as CSV");
  auto* sweep = app.add_subcommand("sweep", "epsilon / alpha / demo_budget sweeps");
  AddCommon(sweep, common);
  sweep->add_option("--axis", sweep_args.axis, "epsilon, alpha or demo_budget")
      ->capture_default_str();
  sweep->add_option("--values", sweep_args.values, "grid values (default: config)");
  sweep->add_option("--bases", sweep_args.bases, "base policy files (default: pretrain outputs)");
  sweep->add_option("--dataset", sweep_args.dataset, "demonstrations (default: collect output)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    Context ctx;
    ctx.config = LoadConfig(common.config);
    if (common.seed) ctx.config.seed = *common.seed;
    if (!method.empty()) ctx.config.adapt.method = ParseAdaptMethod(method);
    ctx.config.Validate();
    ctx.out = common.out;
    ctx.threads = common.threads;
    ctx.log = &out;

    if (pretrain->parsed()) return CmdPretrain(ctx);
    if (collect->parsed()) return CmdCollect(ctx);
    if (adapt->parsed()) return CmdAdapt(ctx, base_files, dataset);
    if (eval->parsed()) return CmdEval(ctx, eval_args);
    return CmdSweep(ctx, sweep_args);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const PretrainGateError& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace cartransfer
