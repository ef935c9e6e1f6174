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

#include "cartransfer/dataset.h"

#include <istream>
#include <ostream>

#include <nlohmann/json.hpp>

namespace cartransfer {

namespace {

using Json = nlohmann::ordered_json;

Json ToJsonArray(const Vector& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Vector FromJsonArray(const Json& j) {
  if (!j.is_array()) throw ConfigError("dataset: expected a numeric array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

}  // namespace

std::string_view DataSourceName(DataSource source) {
  return source == DataSource::kExpert ? "expert" : "policy";
}

DataSource ParseDataSource(std::string_view name) {
  if (name == "expert") return DataSource::kExpert;
  if (name == "policy") return DataSource::kPolicy;
  throw ConfigError("unknown data source '" + std::string(name) + "'");
}

int TransitionDataset::num_episodes() const {
  int count = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (IsEpisodeFinal(i)) ++count;
  }
  return count;
}

bool TransitionDataset::IsEpisodeFinal(std::size_t i) const {
  return i + 1 == records.size() ||
         records[i + 1].episode_id != records[i].episode_id;
}

void TransitionDataset::Validate() const {
  for (std::size_t i = 0; i < records.size(); ++i) {
    const Transition& r = records[i];
    if (r.obs.size() != records.front().obs.size() ||
        r.next_obs.size() != r.obs.size() ||
        r.action.size() != records.front().action.size()) {
      throw ConfigError("dataset record " + std::to_string(i) + ": inconsistent dimensions");
    }
    const bool starts_episode = i == 0 || records[i - 1].episode_id != r.episode_id;
    if (starts_episode) {
      if (r.t != 0) {
        throw ConfigError("dataset record " + std::to_string(i) + ": episode does not start at t=0");
      }
      if (i > 0 && r.episode_id < records[i - 1].episode_id) {
        throw ConfigError("dataset record " + std::to_string(i) + ": episodes out of order");
      }
    } else {
      const Transition& prev = records[i - 1];
      if (r.t != prev.t + 1) {
        throw ConfigError("dataset record " + std::to_string(i) + ": t is not consecutive");
      }
      if (prev.next_obs != r.obs) {
        throw ConfigError("dataset record " + std::to_string(i) +
                          ": obs does not chain from previous next_obs");
      }
    }
  }
}

void WriteJsonl(std::ostream& out, const TransitionDataset& data) {
  for (const Transition& r : data.records) {
    Json j;
    j["obs"] = ToJsonArray(r.obs);
    j["action"] = ToJsonArray(r.action);
    j["next_obs"] = ToJsonArray(r.next_obs);
    j["episode_id"] = r.episode_id;
    j["t"] = r.t;
    out << j.dump() << '\n';
  }
}

TransitionDataset ReadJsonl(std::istream& in) {
  TransitionDataset data;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const Json j = Json::parse(line);
      data.records.push_back({FromJsonArray(j.at("obs")), FromJsonArray(j.at("action")),
                              FromJsonArray(j.at("next_obs")),
                              j.at("episode_id").get<int>(), j.at("t").get<int>()});
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("dataset line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  data.Validate();
  return data;
}

std::string MetadataJson(const TransitionDataset& data) {
  Json j;
  j["format_version"] = 1;
  j["task_id"] = data.task_id;
  j["count"] = data.size();
  j["episodes"] = data.num_episodes();
  j["source"] = std::string(DataSourceName(data.source));
  return j.dump(2) + "\n";
}

void ApplyMetadataJson(std::string_view json, TransitionDataset& data) {
  try {
    const Json j = Json::parse(json);
    data.task_id = j.at("task_id").get<std::string>();
    data.source = ParseDataSource(j.at("source").get<std::string>());
    if (j.at("count").get<std::size_t>() != data.size()) {
      throw ConfigError("dataset metadata count does not match record count");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("dataset metadata: ") + e.what());
  }
}

}  // namespace cartransfer
