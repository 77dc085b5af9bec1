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

#ifndef TASKSTREAM_REGISTRY_HPP_
#define TASKSTREAM_REGISTRY_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "taskstream/stream.hpp"

namespace taskstream {

// One downloadable file with mirror URLs. `checksum` is "<algorithm>:<hex>",
// e.g. "sha256:..." or "md5:...".
struct SourceFile {
  std::string name;
  std::vector<std::string> urls;
  std::string checksum;
};

// Recipe ids: "idx_gz", "image_folder_tar", "vectors_csv".
struct ExtractionRecipe {
  std::string id;
  nlohmann::json params = nlohmann::json::object();
};

struct SplitRecipe {
  enum class Mode { kFractions, kSourceSplits };
  Mode mode = Mode::kFractions;
  double train = 0.70;
  double val = 0.15;
  double test = 0.15;
  // kSourceSplits without a source val split: share of source train moved to val.
  double val_fraction = 0.15;
  std::uint64_t seed = 0;
};

struct DatasetDescriptor {
  std::string id;
  std::string name;
  int year = 0;
  std::string domain;
  TaskKind kind = TaskKind::kSingleLabel;
  std::vector<SourceFile> sources;
  std::string license_note;
  ExtractionRecipe extraction;
  SplitRecipe split;
  std::map<std::string, int> label_map;  // empty: derived from the data

  void validate() const;
};

DatasetDescriptor descriptor_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DatasetDescriptor& d);
std::vector<DatasetDescriptor> read_descriptors(const std::filesystem::path& path);
const DatasetDescriptor& find_descriptor(const std::vector<DatasetDescriptor>& all,
                                         const std::string& id);

// $TASKSTREAM_CACHE, else $HOME/.cache/taskstream.
std::filesystem::path default_cache_dir();

struct FetchOptions {
  int attempts_per_url = 2;
  long timeout_seconds = 600;
  std::function<void(const std::string&)> log;
};

// Downloads every source file into <cache>/archives/<id>/ and verifies it.
// Files already present with a matching digest are not downloaded again.
// Returns the archive directory.
std::filesystem::path fetch(const DatasetDescriptor& descriptor,
                            const std::filesystem::path& cache_dir,
                            const FetchOptions& options = {});

bool checksum_matches(const std::filesystem::path& file, const std::string& checksum);

// Examples decoded from the archives in source order.
struct RawDataset {
  enum Source : int { kSourceTrain = 0, kSourceVal = 1, kSourceTest = 2, kSourceNone = 3 };
  std::vector<Example> examples;
  std::vector<int> source;
  std::vector<std::string> class_names;  // index -> name
};

RawDataset extract(const DatasetDescriptor& descriptor, const std::filesystem::path& archive_dir);

struct PreparedSplits {
  TaskSplits splits;
  std::size_t raw_count = 0;
  std::size_t duplicates_removed = 0;
};

// Exact-duplicate removal (first occurrence in source order wins) followed by
// the descriptor's split recipe.
PreparedSplits split_dataset(const RawDataset& raw, const DatasetDescriptor& descriptor);

// Extracts, deduplicates and splits into <cache>/prepared/<id>/ with a
// task.json sidecar; the layout matches the stream manifest's file references.
Task prepare(const DatasetDescriptor& descriptor, const std::filesystem::path& cache_dir);

std::filesystem::path prepared_dir(const std::filesystem::path& cache_dir);
ManifestRow read_prepared_row(const std::filesystem::path& cache_dir, const std::string& id);

// Archive helpers.
std::vector<std::uint8_t> maybe_gunzip(std::span<const std::uint8_t> bytes);
struct TarEntry {
  std::string path;
  std::vector<std::uint8_t> data;
};
std::vector<TarEntry> read_tar(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> write_tar(const std::vector<TarEntry>& entries);
std::vector<std::uint8_t> gzip_bytes(std::span<const std::uint8_t> bytes);
// PNG, binary/ASCII PGM and PPM; pixels scaled to [0, 1].
Example decode_image(std::span<const std::uint8_t> bytes, const std::string& name);
// 8-bit grayscale or RGB PNG of an image example with values in [0, 1].
std::vector<std::uint8_t> encode_png(const Example& image);

}  // namespace taskstream

#endif  // TASKSTREAM_REGISTRY_HPP_
