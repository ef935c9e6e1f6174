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

#ifndef CARTRANSFER_DATASET_H_
#define CARTRANSFER_DATASET_H_

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "cartransfer/math_core.h"

namespace cartransfer {

struct Transition {
  Vector obs;
  Vector action;
  Vector next_obs;
  int episode_id = 0;
  int t = 0;
};

enum class DataSource { kExpert, kPolicy };

std::string_view DataSourceName(DataSource source);
DataSource ParseDataSource(std::string_view name);

// Ordered transitions grouped into whole episodes.
struct TransitionDataset {
  std::string task_id;
  DataSource source = DataSource::kExpert;
  std::vector<Transition> records;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
  int num_episodes() const;
  // True for the last record of its episode.
  bool IsEpisodeFinal(std::size_t i) const;

  // Checks dimensions, episode grouping, t counters and that next_obs of
  // record t equals obs of record t+1 within an episode.
  void Validate() const;
};

// One JSON object per line: {obs, action, next_obs, episode_id, t}.
void WriteJsonl(std::ostream& out, const TransitionDataset& data);
// Fills records; task_id/source come from the metadata sidecar.
TransitionDataset ReadJsonl(std::istream& in);

// Sidecar metadata: {task_id, count, episodes, source}.
std::string MetadataJson(const TransitionDataset& data);
void ApplyMetadataJson(std::string_view json, TransitionDataset& data);

}  // namespace cartransfer

#endif  // CARTRANSFER_DATASET_H_
