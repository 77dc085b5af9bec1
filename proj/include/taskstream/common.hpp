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

#ifndef TASKSTREAM_COMMON_HPP_
#define TASKSTREAM_COMMON_HPP_

#include <cstdint>
#include <stdexcept>
#include <string>

namespace taskstream {

// Floating point operation counts. Always integral; never rounded.
using Flops = std::uint64_t;

// Base for every error raised by the library. `exit_code` is the process
// exit status the CLI reports for it.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what, int exit_code = 1)
      : std::runtime_error(what), exit_code_(exit_code) {}
  int exit_code() const noexcept { return exit_code_; }

 private:
  int exit_code_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what, 2) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(what, 4) {}
};

// Raised when a learner touches a task beyond the current stream position.
class CausalityViolation : public Error {
 public:
  CausalityViolation(std::size_t cursor, std::size_t requested)
      : Error("causality violation: learner at task " + std::to_string(cursor) +
                  " requested task " + std::to_string(requested),
              3),
        cursor_(cursor),
        requested_(requested) {}
  std::size_t cursor() const noexcept { return cursor_; }
  std::size_t requested() const noexcept { return requested_; }

 private:
  std::size_t cursor_;
  std::size_t requested_;
};

class TrainingError : public Error {
 public:
  explicit TrainingError(const std::string& what) : Error(what, 1) {}
};

// SplitMix64 finalizer; used to derive independent seeds from a run seed.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a,
                                    std::uint64_t b = 0) noexcept {
  return mix_seed(mix_seed(mix_seed(base) ^ a) ^ (b * 0x632be59bd9b4e019ULL));
}

}  // namespace taskstream

#endif  // TASKSTREAM_COMMON_HPP_
