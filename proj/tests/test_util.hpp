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

// Small builders shared by the unit tests.

#ifndef TASKSTREAM_TESTS_TEST_UTIL_HPP_
#define TASKSTREAM_TESTS_TEST_UTIL_HPP_

#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <unistd.h>

#include "taskstream/stream.hpp"

namespace taskstream::testing {

// A task with `n` random 2-d inputs per split and labels from a linear rule.
inline Task tiny_task(const std::string& id, int year = 2000,
                      const std::string& domain = "object", std::size_t n_train = 8,
                      int num_classes = 2, std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed ^ std::hash<std::string>{}(id));
  std::normal_distribution<float> normal(0.0f, 1.0f);
  auto make = [&](std::size_t n) {
    Split s;
    for (std::size_t i = 0; i < n; ++i) {
      Example e;
      e.input = {normal(rng), normal(rng)};
      e.label = static_cast<int>(i % num_classes);
      s.push_back(std::move(e));
    }
    return s;
  };
  auto splits = std::make_shared<TaskSplits>();
  splits->train = make(n_train);
  splits->val = make(2);
  splits->test = make(2);
  TaskInfo info;
  info.id = id;
  info.name = id;
  info.year = year;
  info.domain = domain;
  info.num_classes = num_classes;
  info.avg_resolution = {1, 2};
  return Task(std::move(info), std::move(splits));
}

inline Stream tiny_stream(std::size_t n, std::size_t boundary) {
  std::vector<Task> tasks;
  for (std::size_t i = 0; i < n; ++i)
    tasks.push_back(tiny_task("t" + std::to_string(i), 1990 + static_cast<int>(i)));
  return Stream(std::move(tasks), boundary, "tiny");
}

// A scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("taskstream_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace taskstream::testing

#endif  // TASKSTREAM_TESTS_TEST_UTIL_HPP_
