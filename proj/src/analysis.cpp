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

#include "taskstream/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace taskstream {

Aggregate aggregate(const std::vector<RunRecord>& records, const RecordFilter& filter) {
  Aggregate a;
  double sum = 0.0;
  for (const auto& r : records) {
    if (filter && !filter(r)) continue;
    sum += r.error;
    a.cflop += r.flops;
    ++a.tasks;
  }
  if (a.tasks == 0) throw ConfigError("aggregate: no records match the filter");
  a.error = sum / static_cast<double>(a.tasks);
  return a;
}

Aggregate pass_aggregate(const std::vector<RunRecord>& records, Phase pass) {
  Aggregate all = aggregate(records, [pass](const RunRecord& r) { return r.pass == pass; });
  if (pass == Phase::kMetaTest) {
    all.error = aggregate(records, [](const RunRecord& r) {
                  return r.pass == Phase::kMetaTest && r.meta_test_task;
                }).error;
  }
  return all;
}

std::string to_string(SliceKind k) {
  switch (k) {
    case SliceKind::kDomain: return "domain";
    case SliceKind::kSize: return "size";
    case SliceKind::kResolution: return "resolution";
  }
  return "?";
}

SliceKind slice_from_string(const std::string& s) {
  if (s == "domain") return SliceKind::kDomain;
  if (s == "size") return SliceKind::kSize;
  if (s == "resolution") return SliceKind::kResolution;
  throw ConfigError("unknown slice '" + s + "' (expected domain, size or resolution)");
}

std::string slice_key(const RunRecord& r, SliceKind kind) {
  switch (kind) {
    case SliceKind::kDomain: return r.domain;
    case SliceKind::kSize: return size_bucket(r.train_size);
    case SliceKind::kResolution: return resolution_bucket(r.resolution);
  }
  return {};
}

std::map<std::string, Aggregate> slice(const std::vector<RunRecord>& records, SliceKind kind) {
  std::map<std::string, std::vector<RunRecord>> groups;
  for (const auto& r : records) groups[slice_key(r, kind)].push_back(r);
  std::map<std::string, Aggregate> out;
  for (const auto& [k, g] : groups) out[k] = aggregate(g);
  return out;
}

std::map<std::string, Aggregate> slice_pass(const std::vector<RunRecord>& records, Phase pass,
                                            SliceKind kind) {
  std::map<std::string, std::vector<RunRecord>> groups;
  for (const auto& r : records)
    if (r.pass == pass) groups[slice_key(r, kind)].push_back(r);
  std::map<std::string, Aggregate> out;
  for (const auto& [k, g] : groups) {
    const bool scored = pass == Phase::kMetaTrain ||
                        std::any_of(g.begin(), g.end(), [](const RunRecord& r) { return r.meta_test_task; });
    if (scored) out[k] = pass_aggregate(g, pass);
  }
  return out;
}

std::vector<double> regret_curve(const std::vector<RunRecord>& records,
                                 const std::vector<RunRecord>& reference) {
  if (records.size() != reference.size())
    throw DataError("regret: record sets cover " + std::to_string(records.size()) + " and " +
                    std::to_string(reference.size()) + " tasks");
  std::vector<double> out;
  double acc = 0.0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].task_id != reference[i].task_id)
      throw DataError("regret: task sequences differ at position " + std::to_string(i) + " (" +
                      records[i].task_id + " vs " + reference[i].task_id + ")");
    acc += records[i].error - reference[i].error;
    out.push_back(acc);
  }
  return out;
}

double curve_auc(const std::vector<CurvePoint>& curve) {
  if (curve.empty()) throw DataError("cannot integrate an empty learning curve");
  if (curve.size() == 1) return curve.front().accuracy;
  const double s0 = static_cast<double>(curve.front().step);
  const double span = static_cast<double>(curve.back().step) - s0;
  if (!(span > 0)) throw DataError("learning curve steps must be increasing");
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    const double dx = static_cast<double>(curve[i].step - curve[i - 1].step) / span;
    area += 0.5 * dx * (curve[i].accuracy + curve[i - 1].accuracy);
  }
  return area;
}

std::optional<double> forward_transfer(const std::vector<CurvePoint>& curve1,
                                       const std::vector<CurvePoint>& curve2) {
  const double a1 = curve_auc(curve1);
  const double a2 = curve_auc(curve2);
  if (a1 >= 1.0) return std::nullopt;
  return (a2 - a1) / (1.0 - a1);
}

std::vector<ParetoPoint> pareto_front(const std::vector<ParetoPoint>& points) {
  std::vector<ParetoPoint> sorted = points;
  std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
    if (a.flops != b.flops) return a.flops < b.flops;
    return a.error < b.error;
  });
  std::vector<ParetoPoint> front;
  for (const auto& p : sorted)
    if (front.empty() || p.error < front.back().error) front.push_back(p);
  return front;
}

std::size_t nearest_cflop(const std::vector<Flops>& options, Flops target) {
  if (options.empty()) throw ConfigError("nearest_cflop: no options");
  auto dist = [target](Flops f) {
    return std::abs(std::log(static_cast<double>(f) + 1.0) -
                    std::log(static_cast<double>(target) + 1.0));
  };
  std::size_t best = 0;
  for (std::size_t i = 1; i < options.size(); ++i)
    if (dist(options[i]) < dist(options[best])) best = i;
  return best;
}

MeanStd mean_std(const std::vector<double>& values) {
  MeanStd m;
  if (values.empty()) return m;
  for (double v : values) m.mean += v;
  m.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - m.mean) * (v - m.mean);
    m.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return m;
}

namespace {

struct SearchOutcome {
  TrainReport best;
  std::size_t trainings = 0;
};

SearchOutcome search_and_train(const Task& task, const std::optional<PredictorState>& init,
                               const TransferOptions& o, std::uint64_t seed) {
  const SearchSpace space = named_space(o.search.space, {false, task.has_images()});
  std::vector<std::optional<TrainReport>> reports(o.search.n_trials);
  const TrainTask target = TrainTask::from(task);
  Objective objective = [&](const HParams& h, std::size_t t) {
    PredictorConfig cfg =
        trial_config(o.predictor, h, o.predictor.num_updates, derive_seed(seed, 0x7217, t));
    if (init) cfg.arch = init->arch;
    TrainReport rep = train(target, cfg, init);
    const Evaluation e{rep.val_error, rep.flops};
    reports[t] = std::move(rep);
    return e;
  };
  const auto trials = o.search.kind == SearchKind::kBhpo
                          ? bhpo(space, o.search.n_trials, objective, seed, {o.search.beta, 1024})
                          : random_search(space, o.search.n_trials, objective, seed);
  const Trial& best = best_trial(trials);
  if (best.failed) throw TrainingError("every trial failed for task " + task.id());
  return {std::move(*reports[best.index]), trials.size()};
}

}  // namespace

TransferMatrix transfer_matrix(const Stream& stream, const TransferOptions& options,
                               std::uint64_t seed) {
  TransferMatrix m;
  const std::size_t k = stream.size();
  const int r = options.predictor.input_resolution;
  std::vector<PredictorState> reference;
  for (std::size_t j = 0; j < k; ++j) {
    const Task& t = stream[j];
    auto out = search_and_train(t, std::nullopt, options, derive_seed(seed, 1, j));
    m.task_ids.push_back(t.id());
    m.reference_error.push_back(
        evaluate(out.best.final_state, t.id(), t.test(), t.info().kind, t.info().num_classes, r));
    reference.push_back(std::move(out.best.final_state));
    ++m.runs;
    m.trainings += out.trainings;
  }
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j) {
      const Task& t = stream[j];
      if (!(reference[i].input == input_shape_for(t, r)))
        throw ConfigError("transfer matrix: tasks " + stream[i].id() + " and " + t.id() +
                          " have different input shapes");
      auto out = search_and_train(t, reference[i], options, derive_seed(seed, 2, i * k + j));
      const double err =
          evaluate(out.best.final_state, t.id(), t.test(), t.info().kind, t.info().num_classes, r);
      m.delta[{i, j}] = m.reference_error[j] - err;
      ++m.runs;
      m.trainings += out.trainings;
    }
  return m;
}

std::string format_double(double v) {
  std::ostringstream out;
  out.precision(10);
  out << v;
  return out.str();
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
      if (c == '"') q += '"';
      q += c;
    }
    return q + "\"";
  };
  std::ostringstream out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << quote(cells[i]);
    out << "\n";
  };
  line(header);
  for (const auto& row : rows) line(row);
  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  f << out.str();
}

}  // namespace taskstream
