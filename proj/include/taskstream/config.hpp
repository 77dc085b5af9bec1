// Copyright 2026 The taskstream Authors.
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

#ifndef TASKSTREAM_CONFIG_HPP_
#define TASKSTREAM_CONFIG_HPP_

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "taskstream/metalearner.hpp"
#include "taskstream/protocol.hpp"
#include "taskstream/stream.hpp"

namespace taskstream {

struct StreamSource {
  enum class Kind { kManifest, kSynthetic, kClassPartition };
  Kind kind = Kind::kSynthetic;
  std::filesystem::path manifest;   // manifest and class-partition sources
  std::filesystem::path data_root;  // empty: manifest directory
  SyntheticStreamSpec synthetic;
  std::string base_task;            // class-partition source task id
  int partitions = 2;
  std::uint64_t partition_seed = 0;
  std::optional<std::size_t> boundary;  // class-partition boundary
  std::vector<Variant> variants;
};

// Standard: num_updates in [10000, 100000]. Cheap: num_updates in [1, 10000).
enum class BudgetTier { kStandard, kCheap };

inline constexpr std::size_t kMinTrials = 2;
inline constexpr std::size_t kMaxTrials = 32;
inline constexpr std::int64_t kMinStandardUpdates = 10000;
inline constexpr std::int64_t kMaxStandardUpdates = 100000;

struct RunConfig {
  StreamSource stream;
  LearnerConfig learner;
  BudgetTier tier = BudgetTier::kCheap;
  std::vector<Phase> phases = {Phase::kMetaTrain, Phase::kMetaTest};
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;

  void validate() const;
};

// Relative paths in a config file resolve against `base_dir`.
RunConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
nlohmann::json to_json(const RunConfig& c);
nlohmann::json to_json(const Architecture& a);
Architecture architecture_from_json(const nlohmann::json& j);

RunConfig load_config(const std::filesystem::path& path,
                      const std::vector<std::string>& overrides = {});
// "a.b.c=value"; the value is parsed as JSON when possible, else taken as a string.
void apply_override(nlohmann::json& j, const std::string& assignment);

Stream build_stream(const StreamSource& source);

}  // namespace taskstream

#endif  // TASKSTREAM_CONFIG_HPP_
