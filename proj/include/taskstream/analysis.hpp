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

// Stream-level metrics: aggregation, regret, forward transfer, Pareto fronts,
// transfer matrices and sliced reports.

#ifndef TASKSTREAM_ANALYSIS_HPP_
#define TASKSTREAM_ANALYSIS_HPP_

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "taskstream/metalearner.hpp"
#include "taskstream/protocol.hpp"

namespace taskstream {

struct Aggregate {
  double error = 0.0;
  Flops cflop = 0;
  std::size_t tasks = 0;
};

using RecordFilter = std::function<bool(const RunRecord&)>;

// Unweighted mean error and summed FLOPs over the records passing `filter`.
Aggregate aggregate(const std::vector<RunRecord>& records, const RecordFilter& filter = {});

// Records of one pass, scored the way the protocol scores them: meta-train
// records as is, meta-test records restricted to meta-test tasks for E.
Aggregate pass_aggregate(const std::vector<RunRecord>& records, Phase pass);

enum class SliceKind { kDomain, kSize, kResolution };
std::string to_string(SliceKind k);
SliceKind slice_from_string(const std::string& s);
std::string slice_key(const RunRecord& r, SliceKind kind);
std::map<std::string, Aggregate> slice(const std::vector<RunRecord>& records, SliceKind kind);
// Per-slice pass metrics with the same scoring rule as pass_aggregate; slices
// without scored tasks are omitted.
std::map<std::string, Aggregate> slice_pass(const std::vector<RunRecord>& records, Phase pass,
                                            SliceKind kind);

// Cumulative sum of e_i - e_i^ref over the shared task sequence.
std::vector<double> regret_curve(const std::vector<RunRecord>& records,
                                 const std::vector<RunRecord>& reference);

// Trapezoid area under an accuracy curve on a step axis rescaled to [0, 1].
double curve_auc(const std::vector<CurvePoint>& curve);
// (AUC2 - AUC1) / (1 - AUC1); empty when AUC1 == 1.
std::optional<double> forward_transfer(const std::vector<CurvePoint>& curve1,
                                       const std::vector<CurvePoint>& curve2);

struct ParetoPoint {
  std::string label;
  double error = 0.0;
  Flops flops = 0;
};

std::vector<ParetoPoint> pareto_front(const std::vector<ParetoPoint>& points);

// Index of the option whose cFLOP is closest to `target` in log space.
std::size_t nearest_cflop(const std::vector<Flops>& options, Flops target);

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation
};
MeanStd mean_std(const std::vector<double>& values);

struct TransferMatrix {
  std::vector<std::string> task_ids;
  std::vector<double> reference_error;        // scratch test error per task
  std::map<std::pair<std::size_t, std::size_t>, double> delta;  // i < j only
  std::size_t runs = 0;                       // learner runs, excluding trials
  std::size_t trainings = 0;                  // trainer invocations
};

struct TransferOptions {
  SearchConfig search;
  PredictorConfig predictor;
};

TransferMatrix transfer_matrix(const Stream& stream, const TransferOptions& options,
                               std::uint64_t seed);

// CSV with RFC 4180 quoting.
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);
std::string format_double(double v);

}  // namespace taskstream

#endif  // TASKSTREAM_ANALYSIS_HPP_
