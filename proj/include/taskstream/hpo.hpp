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

// Per-task hyper-parameter search: random search and GP-UCB.

#ifndef TASKSTREAM_HPO_HPP_
#define TASKSTREAM_HPO_HPP_

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "taskstream/common.hpp"

namespace taskstream {

using HValue = std::variant<double, std::string>;
using HParams = std::map<std::string, HValue>;

double as_double(const HValue& v);
std::string as_string(const HValue& v);
std::string to_string(const HParams& h);

struct Dimension {
  enum class Kind { kLog, kLinear, kCategorical, kGrid };

  std::string name;
  Kind kind = Kind::kLinear;
  double lo = 0.0;
  double hi = 1.0;
  std::vector<HValue> values;

  static Dimension log(std::string name, double lo, double hi);
  static Dimension linear(std::string name, double lo, double hi);
  static Dimension categorical(std::string name, std::vector<HValue> values);
  static Dimension grid(std::string name, std::vector<double> values);

  bool continuous() const noexcept { return kind == Kind::kLog || kind == Kind::kLinear; }
  // Width of this dimension in the surrogate's encoding.
  int encoded_width() const noexcept { return continuous() ? 1 : static_cast<int>(values.size()); }
  // Maps u in [0, 1] onto the dimension.
  HValue decode(double u) const;
  bool contains(const HValue& v) const;
};

struct SearchSpace {
  std::vector<Dimension> dimensions;

  void validate() const;
  int encoded_width() const;
  // One-hot for discrete dimensions, unit interval for continuous ones.
  Eigen::RowVectorXd encode(const HParams& h) const;
  HParams decode(const Eigen::RowVectorXd& unit) const;
  bool contains(const HParams& h) const;
};

struct SpaceOptions {
  bool multitask = false;     // adds the auxiliary loss weight
  bool image_inputs = false;  // architecture choices of the large space
};

// Named spaces: "small", "cheap", "large".
SearchSpace named_space(const std::string& name, const SpaceOptions& options = {});

struct Evaluation {
  double val_error = 1.0;
  Flops flops = 0;
};

struct Trial {
  std::size_t index = 0;
  HParams hparams;
  double val_error = 1.0;
  Flops flops = 0;
  bool failed = false;
  std::string note;
};

using Objective = std::function<Evaluation(const HParams&, std::size_t index)>;

// Deterministic proposal sequence used by random_search.
std::vector<HParams> sample_random(const SearchSpace& space, std::size_t n_trials,
                                   std::uint64_t seed);

std::vector<Trial> random_search(const SearchSpace& space, std::size_t n_trials,
                                 const Objective& objective, std::uint64_t seed);

struct BhpoOptions {
  double beta = 2.0;
  int candidates = 1024;
};

std::vector<Trial> bhpo(const SearchSpace& space, std::size_t n_trials,
                        const Objective& objective, std::uint64_t seed,
                        const BhpoOptions& options = {});

const Trial& best_trial(const std::vector<Trial>& trials);

// Scrambled Halton point in [0, 1)^dims; `shift` applies a random rotation.
Eigen::RowVectorXd halton_point(std::size_t index, const Eigen::RowVectorXd& shift);

}  // namespace taskstream

#endif  // TASKSTREAM_HPO_HPP_
