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

#ifndef TASKSTREAM_STREAM_HPP_
#define TASKSTREAM_STREAM_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "taskstream/common.hpp"

namespace taskstream {

enum class TaskKind { kSingleLabel, kMultiLabel };

std::string to_string(TaskKind kind);
TaskKind task_kind_from_string(const std::string& s);

// One labelled input. Images are stored HWC with values in [0, 1];
// feature vectors leave the image shape at zero.
struct Example {
  std::vector<float> input;
  int height = 0;
  int width = 0;
  int channels = 0;
  int label = -1;                     // single-label class index
  std::vector<std::uint8_t> labels;   // multi-label binary vector

  bool is_image() const noexcept { return height > 0; }
};

using Split = std::vector<Example>;

enum class SplitRole { kTrain, kVal, kTest };

struct TaskSplits {
  Split train;
  Split val;
  Split test;

  const Split& get(SplitRole role) const;
};

struct Resolution {
  int height = 0;
  int width = 0;
  bool operator==(const Resolution&) const = default;
};

struct SplitSizes {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
  bool operator==(const SplitSizes&) const = default;
};

// Task metadata; everything about a task except its examples.
struct TaskInfo {
  std::string id;
  std::string name;
  int year = 0;
  std::string domain;
  TaskKind kind = TaskKind::kSingleLabel;
  int num_classes = 2;
  Resolution avg_resolution;
  SplitSizes sizes;
};

// An immutable classification task. Construction validates labels, split
// sizes and split disjointness.
class Task {
 public:
  Task(TaskInfo info, std::shared_ptr<const TaskSplits> splits);

  const TaskInfo& info() const noexcept { return info_; }
  const std::string& id() const noexcept { return info_.id; }
  const TaskSplits& splits() const noexcept { return *splits_; }
  const Split& train() const noexcept { return splits_->train; }
  const Split& val() const noexcept { return splits_->val; }
  const Split& test() const noexcept { return splits_->test; }
  bool has_images() const;
  // Length of a flattened feature-vector input (0 for image tasks).
  int input_dim() const;
  int input_channels() const;

 private:
  TaskInfo info_;
  std::shared_ptr<const TaskSplits> splits_;
};

// Byte string identifying an input by exact content (shape + values).
std::string content_key(const Example& e);

// Throws DataError if any input appears in two splits.
void check_disjoint(const TaskSplits& splits, const std::string& task_id);

void validate_example(const Example& e, TaskKind kind, int num_classes,
                      const std::string& task_id);

// Ordered task sequence; the first `boundary` tasks form the meta-train
// stream, the rest the meta-test stream.
class Stream {
 public:
  Stream() = default;
  Stream(std::vector<Task> tasks, std::size_t boundary, std::string name = {});

  const std::vector<Task>& tasks() const noexcept { return tasks_; }
  std::size_t size() const noexcept { return tasks_.size(); }
  std::size_t boundary() const noexcept { return boundary_; }
  const std::string& name() const noexcept { return name_; }
  const Task& operator[](std::size_t i) const { return tasks_.at(i); }

  std::span<const Task> meta_train() const noexcept {
    return std::span<const Task>(tasks_).first(boundary_);
  }
  std::span<const Task> meta_test() const noexcept {
    return std::span<const Task>(tasks_).subspan(boundary_);
  }

 private:
  std::vector<Task> tasks_;
  std::size_t boundary_ = 0;
  std::string name_;
};

struct StreamViews {
  std::span<const Task> meta_train;
  std::span<const Task> meta_test;
};

StreamViews split_boundary(const Stream& stream);

// ---------------------------------------------------------------------------
// Manifests

struct ManifestRow {
  TaskInfo info;
  std::map<std::string, std::string> files;      // split role -> relative path
  std::map<std::string, std::string> checksums;  // split role -> sha256 hex
  bool meta_test = false;
};

struct Manifest {
  int version = 1;
  std::string name;
  std::size_t boundary = 0;
  std::vector<ManifestRow> rows;
};

// Parses and validates a manifest without touching task data.
Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);

// Loads a manifest and every referenced split. Split paths resolve against
// `data_root`, or the manifest's directory when `data_root` is empty.
Stream load_stream(const std::filesystem::path& manifest_path,
                   const std::filesystem::path& data_root = {});

// ---------------------------------------------------------------------------
// Synthetic streams

struct SyntheticTaskSpec {
  int num_classes = 4;
  SplitSizes sizes{200, 100, 100};
  TaskKind kind = TaskKind::kSingleLabel;
  std::string domain = "synthetic";
  std::optional<int> year;
};

// Task `target` reuses the latent labeling map of task `source`.
// `perturbation` is the relative magnitude of an orthogonal perturbation.
// Anti relations place the target's map in the orthogonal complement of the
// source's subspace instead.
struct Relation {
  std::size_t target = 0;
  std::size_t source = 0;
  double perturbation = 0.1;
  bool anti = false;
};

struct SyntheticStreamSpec {
  std::size_t num_tasks = 3;
  std::vector<SyntheticTaskSpec> tasks;  // empty: every task uses `task_defaults`
  SyntheticTaskSpec task_defaults;
  int input_dim = 16;
  int latent_dim = 4;
  double label_noise = 0.0;
  std::vector<Relation> relations;
  std::vector<std::size_t> repeats;
  std::optional<std::size_t> boundary;  // defaults to the full stream
  std::uint64_t seed = 0;
  std::string name = "synthetic";
};

Stream make_synthetic_stream(const SyntheticStreamSpec& spec);

// Partitions the classes of `base` into disjoint groups, one task per group.
Stream make_class_partition_stream(const Task& base, int num_partitions,
                                   std::uint64_t seed,
                                   std::optional<std::size_t> boundary = {});

// ---------------------------------------------------------------------------
// Stream variants

struct Variant {
  enum class Kind {
    kWithinYearShuffle,
    kFullShuffle,
    kRemoveFirst,
    kRemoveLast,
    kRemoveRandom,
    kKeepLargest,
    kFilterDomains,
    kExcludeNamed,
  };
  Kind kind = Kind::kFullShuffle;
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::set<std::string> names;  // domains or task ids/names

  static Variant within_year_shuffle(std::uint64_t seed) { return {Kind::kWithinYearShuffle, 0, seed, {}}; }
  static Variant full_shuffle(std::uint64_t seed) { return {Kind::kFullShuffle, 0, seed, {}}; }
  static Variant remove_first(std::size_t k) { return {Kind::kRemoveFirst, k, 0, {}}; }
  static Variant remove_last(std::size_t k) { return {Kind::kRemoveLast, k, 0, {}}; }
  static Variant remove_random(std::size_t k, std::uint64_t seed) { return {Kind::kRemoveRandom, k, seed, {}}; }
  static Variant keep_largest(std::size_t k) { return {Kind::kKeepLargest, k, 0, {}}; }
  static Variant filter_domains(std::set<std::string> d) { return {Kind::kFilterDomains, 0, 0, std::move(d)}; }
  static Variant exclude_named(std::set<std::string> n) { return {Kind::kExcludeNamed, 0, 0, std::move(n)}; }
};

std::string to_string(const Variant& v);
Variant variant_from_string(const std::string& s);

Stream apply_variant(const Stream& stream, const Variant& variant);

// ---------------------------------------------------------------------------
// Statistics

struct StreamStatistics {
  std::size_t num_tasks = 0;
  std::size_t meta_train = 0;
  std::size_t meta_test = 0;
  std::map<int, std::size_t> tasks_per_year;
  std::map<std::string, std::size_t> tasks_per_domain;
  std::map<std::string, std::size_t> tasks_per_size_bucket;
  std::size_t multi_label = 0;
  std::size_t total_train_examples = 0;
};

// Train-set size buckets, left-closed: <1k, [1k,10k), [10k,100k), >=100k.
std::string size_bucket(std::size_t train_size);
// Buckets on min(avg height, avg width) with cut points 64, 128, 256.
std::string resolution_bucket(const Resolution& r);

StreamStatistics stream_statistics(const std::vector<TaskInfo>& infos,
                                   std::size_t boundary);

}  // namespace taskstream

#endif  // TASKSTREAM_STREAM_HPP_
