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

// Meta-train / meta-test driver with causal access, an append-only record
// log and per-task checkpoints.

#ifndef TASKSTREAM_PROTOCOL_HPP_
#define TASKSTREAM_PROTOCOL_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "taskstream/learner.hpp"
#include "taskstream/stream.hpp"

namespace taskstream {

inline constexpr int kRecordSchemaVersion = 1;

enum class Phase { kMetaTrain, kMetaTest };

std::string to_string(Phase p);
Phase phase_from_string(const std::string& s);

struct RunRecord {
  Phase pass = Phase::kMetaTrain;
  std::size_t position = 0;
  std::string task_id;
  std::string strategy;
  HParams hparams;
  std::string provenance;
  double error = 1.0;  // validation error in meta-train, test error in meta-test
  double val_error = 1.0;
  Flops flops = 0;
  std::vector<CurvePoint> learning_curve;
  std::uint64_t seed = 0;
  double wall_time = 0.0;
  std::size_t n_trials = 0;
  // Task metadata used for sliced reports.
  std::string domain;
  TaskKind kind = TaskKind::kSingleLabel;
  int year = 0;
  std::size_t train_size = 0;
  Resolution resolution;
  bool meta_test_task = false;
};

nlohmann::json to_json(const RunRecord& r);
RunRecord record_from_json(const nlohmann::json& j);

struct PassSummary {
  Phase pass = Phase::kMetaTrain;
  double error = 0.0;  // E over the pass's scored tasks
  Flops cflop = 0;     // sum over every task visited in the pass
  std::size_t tasks = 0;
};

nlohmann::json to_json(const PassSummary& s);
PassSummary summary_from_json(const nlohmann::json& j);

struct PassResult {
  std::vector<RunRecord> records;
  PassSummary summary;
};

// Seed handed to the learner for task `position` of `pass`.
std::uint64_t task_seed(std::uint64_t run_seed, Phase pass, std::size_t position);

// Iterates the meta-train prefix; errors on validation data.
PassResult run_meta_train(const Stream& stream, MetaLearner& learner, std::uint64_t seed);
// Fresh pass from the initial state over the whole stream; errors on test
// data, E over the meta-test tasks, cFLOP over every task.
PassResult run_meta_test(const Stream& stream, MetaLearner& learner, std::uint64_t seed);

struct RunOptions {
  std::vector<Phase> phases = {Phase::kMetaTrain, Phase::kMetaTest};
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;
  // Stops after this many completed tasks in this invocation (simulated interruption).
  std::optional<std::size_t> stop_after;
  nlohmann::json header_extra = nlohmann::json::object();
};

struct RunResult {
  std::vector<RunRecord> records;
  std::vector<PassSummary> summaries;
  bool complete = false;
  std::size_t tasks_run = 0;  // in this invocation
};

inline constexpr const char* kRecordLogName = "records.jsonl";
inline constexpr const char* kCheckpointName = "checkpoint.bin";

// Runs the requested phases, checkpointing after every task. With `resume`,
// continues from the checkpoint in out_dir (or starts fresh when absent).
RunResult run_protocol(const Stream& stream, MetaLearner& learner, const RunOptions& options,
                       bool resume = false);

struct RecordLog {
  nlohmann::json header;
  std::vector<RunRecord> records;
  std::vector<PassSummary> summaries;
};

RecordLog read_record_log(const std::filesystem::path& path);

}  // namespace taskstream

#endif  // TASKSTREAM_PROTOCOL_HPP_
