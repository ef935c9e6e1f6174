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

// JSON documents for networks, transforms, tasks, policies, bundles and
// reports. Field order is fixed so files diff cleanly.

#ifndef CARTRANSFER_SERIALIZATION_H_
#define CARTRANSFER_SERIALIZATION_H_

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cartransfer/env.h"
#include "cartransfer/eval.h"
#include "cartransfer/math_core.h"
#include "cartransfer/optim.h"
#include "cartransfer/pipelines.h"
#include "cartransfer/policies.h"

namespace cartransfer {

using Json = nlohmann::ordered_json;

inline constexpr int kFormatVersion = 1;

Json ToJson(const MlpParams& params);
MlpParams MlpParamsFromJson(const Json& j);

Json ToJson(const AffineTransform& t);
AffineTransform AffineTransformFromJson(const Json& j);

Json ToJson(const Task& task);
Task TaskFromJson(const Json& j);

Json ToJson(const BasePolicy& policy);
BasePolicy BasePolicyFromJson(const Json& j);

Json ToJson(const EnvParams& params);
EnvParams EnvParamsFromJson(const Json& j);
Json ToJson(const CemConfig& config);
CemConfig CemConfigFromJson(const Json& j);
Json ToJson(const SgdConfig& config);
SgdConfig SgdConfigFromJson(const Json& j);

Json ToJson(const EvalReport& report);
Json ToJson(const AdaptReport& report);

// Target policy bundle. Base policies are referenced by file, stored
// relative to the bundle's own directory.
Json BundleToJson(const TargetPolicy& policy, const std::vector<std::string>& base_files);

struct LoadedBundle {
  TargetPolicy policy;
  std::vector<std::string> base_files;
};
LoadedBundle LoadBundle(const std::filesystem::path& path);

// File helpers; errors mention the path.
Json ReadJsonFile(const std::filesystem::path& path);
// Writes dump(2) plus a trailing newline.
void WriteJsonFile(const std::filesystem::path& path, const Json& j);
BasePolicy LoadBasePolicy(const std::filesystem::path& path);

}  // namespace cartransfer

#endif  // CARTRANSFER_SERIALIZATION_H_
