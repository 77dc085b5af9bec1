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

#ifndef TASKSTREAM_PLOTS_HPP_
#define TASKSTREAM_PLOTS_HPP_

#include <string>
#include <vector>

#include "taskstream/analysis.hpp"

namespace taskstream {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  bool line = true;
  bool markers = false;
};

struct PlotOptions {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  int width = 640;
  int height = 420;
};

// Deterministic SVG documents.
std::string svg_plot(const std::vector<Series>& series, const PlotOptions& options);
std::string svg_heatmap(const TransferMatrix& matrix, const std::string& title);

// Error vs cumulative FLOPs on a log axis with the front drawn as a step line.
std::string svg_pareto(const std::vector<ParetoPoint>& points, const std::string& title);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace taskstream

#endif  // TASKSTREAM_PLOTS_HPP_
