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

#include "taskstream/hpo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "taskstream/gp.hpp"

namespace taskstream {

double as_double(const HValue& v) {
  if (const auto* d = std::get_if<double>(&v)) return *d;
  const auto& s = std::get<std::string>(v);
  try {
    std::size_t used = 0;
    const double d = std::stod(s, &used);
    if (used == s.size()) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError("hyper-parameter value '" + s + "' is not numeric");
}

std::string as_string(const HValue& v) {
  if (const auto* s = std::get_if<std::string>(&v)) return *s;
  std::ostringstream out;
  out.precision(17);
  out << std::get<double>(v);
  return out.str();
}

std::string to_string(const HParams& h) {
  std::ostringstream out;
  bool first = true;
  for (const auto& [k, v] : h) {
    out << (first ? "" : ", ") << k << "=" << as_string(v);
    first = false;
  }
  return out.str();
}

Dimension Dimension::log(std::string name, double lo, double hi) {
  return {std::move(name), Kind::kLog, lo, hi, {}};
}
Dimension Dimension::linear(std::string name, double lo, double hi) {
  return {std::move(name), Kind::kLinear, lo, hi, {}};
}
Dimension Dimension::categorical(std::string name, std::vector<HValue> values) {
  return {std::move(name), Kind::kCategorical, 0, 0, std::move(values)};
}
Dimension Dimension::grid(std::string name, std::vector<double> values) {
  return {std::move(name), Kind::kGrid, 0, 0, {values.begin(), values.end()}};
}

HValue Dimension::decode(double u) const {
  u = std::clamp(u, 0.0, 1.0);
  switch (kind) {
    case Kind::kLog: return std::exp(std::log(lo) + u * (std::log(hi) - std::log(lo)));
    case Kind::kLinear: return lo + u * (hi - lo);
    default: {
      const auto m = values.size();
      return values[std::min(m - 1, static_cast<std::size_t>(u * static_cast<double>(m)))];
    }
  }
}

bool Dimension::contains(const HValue& v) const {
  if (continuous()) {
    if (!std::holds_alternative<double>(v)) return false;
    const double d = std::get<double>(v);
    return d >= lo * (1 - 1e-12) && d <= hi * (1 + 1e-12);
  }
  return std::find(values.begin(), values.end(), v) != values.end();
}

void SearchSpace::validate() const {
  std::set<std::string> names;
  if (dimensions.empty()) throw ConfigError("search space has no dimensions");
  for (const auto& d : dimensions) {
    if (!names.insert(d.name).second) throw ConfigError("duplicate dimension '" + d.name + "'");
    if (d.continuous() && !(d.lo < d.hi))
      throw ConfigError("dimension '" + d.name + "' needs lo < hi");
    if (d.kind == Dimension::Kind::kLog && !(d.lo > 0))
      throw ConfigError("log dimension '" + d.name + "' needs lo > 0");
    if (!d.continuous() && d.values.empty())
      throw ConfigError("dimension '" + d.name + "' has no values");
  }
}

int SearchSpace::encoded_width() const {
  int w = 0;
  for (const auto& d : dimensions) w += d.encoded_width();
  return w;
}

Eigen::RowVectorXd SearchSpace::encode(const HParams& h) const {
  Eigen::RowVectorXd out = Eigen::RowVectorXd::Zero(encoded_width());
  int pos = 0;
  for (const auto& d : dimensions) {
    const HValue& v = h.at(d.name);
    if (d.kind == Dimension::Kind::kLog) {
      out(pos) = (std::log(as_double(v)) - std::log(d.lo)) / (std::log(d.hi) - std::log(d.lo));
    } else if (d.kind == Dimension::Kind::kLinear) {
      out(pos) = (as_double(v) - d.lo) / (d.hi - d.lo);
    } else {
      const auto it = std::find(d.values.begin(), d.values.end(), v);
      if (it == d.values.end()) throw ConfigError("value outside dimension '" + d.name + "'");
      out(pos + static_cast<int>(it - d.values.begin())) = 1.0;
    }
    pos += d.encoded_width();
  }
  return out;
}

HParams SearchSpace::decode(const Eigen::RowVectorXd& unit) const {
  HParams h;
  for (std::size_t i = 0; i < dimensions.size(); ++i)
    h[dimensions[i].name] = dimensions[i].decode(unit(static_cast<Eigen::Index>(i)));
  return h;
}

bool SearchSpace::contains(const HParams& h) const {
  if (h.size() != dimensions.size()) return false;
  for (const auto& d : dimensions) {
    const auto it = h.find(d.name);
    if (it == h.end() || !d.contains(it->second)) return false;
  }
  return true;
}

SearchSpace named_space(const std::string& name, const SpaceOptions& options) {
  SearchSpace s;
  if (name == "small") {
    s.dimensions = {Dimension::log("learning_rate", 1e-4, 1e-1),
                    Dimension::linear("label_smoothing", 0.0, 0.3)};
  } else if (name == "cheap") {
    s.dimensions = {Dimension::grid("learning_rate", {1e-4, 1e-3, 1e-2, 1e-1}),
                    Dimension::grid("label_smoothing", {0.15})};
  } else if (name == "large") {
    const std::vector<HValue> archs =
        options.image_inputs ? std::vector<HValue>{std::string("small_conv"), std::string("mlp")}
                             : std::vector<HValue>{std::string("mlp"), std::string("mlp_deep")};
    s.dimensions = {
        Dimension::log("learning_rate", 1e-4, 1e-1),
        Dimension::linear("label_smoothing", 0.0, 0.3),
        Dimension::categorical("schedule", {std::string("cosine"), std::string("piecewise")}),
        Dimension::categorical("batch_size", {16.0, 32.0, 64.0, 128.0}),
        Dimension::categorical("architecture", archs),
        Dimension::categorical("random_resized_crop", {std::string("on"), std::string("off")}),
        Dimension::categorical("horizontal_flip", {std::string("on"), std::string("off")}),
    };
  } else {
    throw ConfigError("unknown search space '" + name + "' (expected small, cheap or large)");
  }
  if (options.multitask) s.dimensions.push_back(Dimension::log("mt_lambda", 0.01, 1.0));
  return s;
}

std::vector<HParams> sample_random(const SearchSpace& space, std::size_t n_trials,
                                   std::uint64_t seed) {
  space.validate();
  std::mt19937_64 rng(derive_seed(seed, 0x5eed));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  // Grid dimensions cycle through seeded permutations so every block covers the grid.
  std::vector<std::vector<std::size_t>> perms(space.dimensions.size());
  std::vector<HParams> out(n_trials);
  for (std::size_t t = 0; t < n_trials; ++t) {
    for (std::size_t d = 0; d < space.dimensions.size(); ++d) {
      const auto& dim = space.dimensions[d];
      if (dim.continuous()) {
        out[t][dim.name] = dim.decode(unit(rng));
      } else if (dim.kind == Dimension::Kind::kCategorical) {
        out[t][dim.name] = dim.values[std::uniform_int_distribution<std::size_t>(
            0, dim.values.size() - 1)(rng)];
      } else {
        const std::size_t m = dim.values.size();
        if (t % m == 0) {
          perms[d].resize(m);
          std::iota(perms[d].begin(), perms[d].end(), 0);
          std::shuffle(perms[d].begin(), perms[d].end(), rng);
        }
        out[t][dim.name] = dim.values[perms[d][t % m]];
      }
    }
  }
  return out;
}

namespace {

Trial run_trial(const Objective& objective, const HParams& h, std::size_t index) {
  Trial t;
  t.index = index;
  t.hparams = h;
  try {
    const Evaluation e = objective(h, index);
    t.val_error = e.val_error;
    t.flops = e.flops;
  } catch (const TrainingError& err) {
    t.failed = true;
    t.val_error = 1.0;
    t.note = err.what();
  }
  return t;
}

constexpr int kPrimes[] = {2,  3,  5,  7,  11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53,
                           59, 61, 67, 71, 73, 79, 83, 89, 97, 101, 103, 107, 109, 113};

double radical_inverse(std::size_t i, int base) {
  double f = 1.0, r = 0.0;
  while (i > 0) {
    f /= base;
    r += f * static_cast<double>(i % base);
    i /= base;
  }
  return r;
}

Eigen::RowVectorXd random_shift(Eigen::Index dims, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::RowVectorXd s(dims);
  for (Eigen::Index i = 0; i < dims; ++i) s(i) = unit(rng);
  return s;
}

}  // namespace

Eigen::RowVectorXd halton_point(std::size_t index, const Eigen::RowVectorXd& shift) {
  const Eigen::Index dims = shift.size();
  if (dims > static_cast<Eigen::Index>(std::size(kPrimes)))
    throw ConfigError("search space has too many dimensions for the quasi-random sequence");
  Eigen::RowVectorXd p(dims);
  for (Eigen::Index d = 0; d < dims; ++d) {
    const double v = radical_inverse(index, kPrimes[d]) + shift(d);
    p(d) = v - std::floor(v);
  }
  return p;
}

std::vector<Trial> random_search(const SearchSpace& space, std::size_t n_trials,
                                 const Objective& objective, std::uint64_t seed) {
  std::vector<Trial> trials;
  const auto proposals = sample_random(space, n_trials, seed);
  for (std::size_t i = 0; i < proposals.size(); ++i)
    trials.push_back(run_trial(objective, proposals[i], i));
  return trials;
}

std::vector<Trial> bhpo(const SearchSpace& space, std::size_t n_trials,
                        const Objective& objective, std::uint64_t seed,
                        const BhpoOptions& options) {
  space.validate();
  if (n_trials < 2) throw ConfigError("bhpo needs at least 2 trials");
  const auto dims = static_cast<Eigen::Index>(space.dimensions.size());
  const std::size_t initial = std::max<std::size_t>(2, static_cast<std::size_t>(dims) + 1);
  const Eigen::RowVectorXd fill_shift = random_shift(dims, derive_seed(seed, 0xf111));
  std::vector<Trial> trials;
  for (std::size_t t = 0; t < n_trials; ++t) {
    HParams proposal;
    std::string note;
    if (t < initial) {
      proposal = space.decode(halton_point(t + 1, fill_shift));
    } else {
      Eigen::MatrixXd x(static_cast<Eigen::Index>(trials.size()), space.encoded_width());
      Eigen::VectorXd y(x.rows());
      for (std::size_t i = 0; i < trials.size(); ++i) {
        x.row(static_cast<Eigen::Index>(i)) = space.encode(trials[i].hparams);
        y(static_cast<Eigen::Index>(i)) = trials[i].val_error;
      }
      GaussianProcess gp;
      const Eigen::RowVectorXd shift = random_shift(dims, derive_seed(seed, 0xca7d, t));
      if (gp.fit(x, y)) {
        std::vector<HParams> cands;
        Eigen::MatrixXd cx(options.candidates, space.encoded_width());
        for (int c = 0; c < options.candidates; ++c) {
          cands.push_back(space.decode(halton_point(static_cast<std::size_t>(c) + 1, shift)));
          cx.row(c) = space.encode(cands.back());
        }
        Eigen::VectorXd mean, sd;
        gp.predict(cx, mean, sd);
        Eigen::Index best;
        (mean - options.beta * sd).minCoeff(&best);
        proposal = cands[static_cast<std::size_t>(best)];
      } else {
        proposal = sample_random(space, 1, derive_seed(seed, 0xfa11, t)).front();
        note = "gp fit failed; random proposal";
      }
    }
    trials.push_back(run_trial(objective, proposal, t));
    if (!note.empty()) trials.back().note = note + (trials.back().note.empty() ? "" : "; ") +
                                            trials.back().note;
  }
  return trials;
}

const Trial& best_trial(const std::vector<Trial>& trials) {
  if (trials.empty()) throw ConfigError("best_trial: no trials");
  return *std::min_element(trials.begin(), trials.end(), [](const Trial& a, const Trial& b) {
    if (a.val_error != b.val_error) return a.val_error < b.val_error;
    if (a.flops != b.flops) return a.flops < b.flops;
    return a.index < b.index;
  });
}

}  // namespace taskstream
