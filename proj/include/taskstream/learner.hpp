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

// The contract between the protocol driver and a meta-learner.

#ifndef TASKSTREAM_LEARNER_HPP_
#define TASKSTREAM_LEARNER_HPP_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "taskstream/common.hpp"
#include "taskstream/hpo.hpp"
#include "taskstream/predictor.hpp"
#include "taskstream/stream.hpp"

namespace taskstream {

// Read access to a stream up to and including the current position.
class CausalView {
 public:
  CausalView(const Stream& stream, std::size_t cursor) : stream_(&stream), cursor_(cursor) {
    if (cursor >= stream.size()) throw CausalityViolation(cursor, cursor);
  }

  std::size_t cursor() const noexcept { return cursor_; }
  const Task& current() const { return (*stream_)[cursor_]; }
  // Throws CausalityViolation for j > cursor.
  const Task& task(std::size_t j) const {
    if (j > cursor_) throw CausalityViolation(cursor_, j);
    return (*stream_)[j];
  }
  // Looks a task up by id among the visible prefix.
  const Task& task(const std::string& id) const;
  std::size_t visible() const noexcept { return cursor_ + 1; }

 private:
  const Stream* stream_;
  std::size_t cursor_;
};

struct TaskOutcome {
  HParams hparams;
  std::string provenance = "scratch";
  Flops flops = 0;
  double val_error = 1.0;
  std::vector<CurvePoint> learning_curve;
  std::size_t n_trials = 0;
  // Error of the task's final model on an arbitrary split of the task.
  std::function<double(const Split&)> error_on;
};

class MetaLearner {
 public:
  virtual ~MetaLearner() = default;

  virtual std::string name() const = 0;
  // Returns to the initial state s_0.
  virtual void reset() = 0;
  // Learns the task at view.cursor() and updates the learner state.
  virtual TaskOutcome learn(const CausalView& view, std::uint64_t seed) = 0;

  virtual std::vector<std::uint8_t> save_state() const = 0;
  virtual void load_state(std::span<const std::uint8_t> bytes) = 0;
};

}  // namespace taskstream

#endif  // TASKSTREAM_LEARNER_HPP_
