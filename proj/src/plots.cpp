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

#include "taskstream/plots.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace taskstream {
namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string fmt(double v) {
  std::ostringstream o;
  o.setf(std::ios::fixed);
  o.precision(2);
  o << v;
  return o.str();
}

std::string tick(double v) {
  std::ostringstream o;
  o.precision(3);
  o << v;
  return o.str();
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Frame {
  double left = 70, right = 20, top = 36, bottom = 50;
  double w, h;
  double x0, x1, y0, y1;
  bool log_x;

  double px(double x) const {
    const double t = log_x ? (std::log10(x) - x0) / (x1 - x0) : (x - x0) / (x1 - x0);
    return left + t * (w - left - right);
  }
  double py(double y) const { return h - bottom - (y - y0) / (y1 - y0) * (h - top - bottom); }
};

void header(std::ostringstream& o, int w, int h, const std::string& title) {
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
    << "\" viewBox=\"0 0 " << w << " " << h << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << w / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
    << escape(title) << "</text>\n";
}

}  // namespace

std::string svg_plot(const std::vector<Series>& series, const PlotOptions& options) {
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw ConfigError("series '" + s.label + "' has mismatched x/y");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      if (options.log_x && s.x[i] <= 0) continue;
      const double x = options.log_x ? std::log10(s.x[i]) : s.x[i];
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  }
  if (!(xmin <= xmax)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (xmax - xmin < 1e-12) xmin -= 0.5, xmax += 0.5;
  if (ymax - ymin < 1e-12) ymin -= 0.5, ymax += 0.5;
  const double pad = 0.05 * (ymax - ymin);
  Frame f{70, 20, 36, 50, double(options.width), double(options.height), xmin, xmax,
          ymin - pad, ymax + pad, options.log_x};

  std::ostringstream o;
  header(o, options.width, options.height, options.title);
  const double bx0 = f.left, bx1 = f.w - f.right, by0 = f.top, by1 = f.h - f.bottom;
  o << "<rect x=\"" << fmt(bx0) << "\" y=\"" << fmt(by0) << "\" width=\"" << fmt(bx1 - bx0)
    << "\" height=\"" << fmt(by1 - by0) << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double yv = f.y0 + (f.y1 - f.y0) * i / 4.0;
    o << "<text x=\"" << fmt(bx0 - 4) << "\" y=\"" << fmt(f.py(yv) + 4)
      << "\" text-anchor=\"end\">" << tick(yv) << "</text>\n";
    const double xt = f.x0 + (f.x1 - f.x0) * i / 4.0;
    const double xv = options.log_x ? std::pow(10.0, xt) : xt;
    o << "<text x=\"" << fmt(f.px(xv)) << "\" y=\"" << fmt(by1 + 16)
      << "\" text-anchor=\"middle\">" << tick(xv) << "</text>\n";
  }
  o << "<text x=\"" << fmt((bx0 + bx1) / 2) << "\" y=\"" << fmt(f.h - 10)
    << "\" text-anchor=\"middle\">" << escape(options.x_label) << "</text>\n";
  o << "<text transform=\"translate(14 " << fmt((by0 + by1) / 2)
    << ") rotate(-90)\" text-anchor=\"middle\">" << escape(options.y_label) << "</text>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    std::string pts;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      if (options.log_x && s.x[i] <= 0) continue;
      const std::string p = fmt(f.px(s.x[i])) + "," + fmt(f.py(s.y[i]));
      pts += (pts.empty() ? "" : " ") + p;
      if (s.markers)
        o << "<circle cx=\"" << fmt(f.px(s.x[i])) << "\" cy=\"" << fmt(f.py(s.y[i]))
          << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    }
    if (s.line && !pts.empty())
      o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\""
        << pts << "\"/>\n";
    o << "<text x=\"" << fmt(bx1 - 6) << "\" y=\"" << fmt(by0 + 14 + 14 * k)
      << "\" text-anchor=\"end\" fill=\"" << color << "\">" << escape(s.label) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::string svg_pareto(const std::vector<ParetoPoint>& points, const std::string& title) {
  Series front{"pareto front", {}, {}};
  for (const auto& p : pareto_front(points)) {
    if (!front.x.empty()) {
      front.x.push_back(static_cast<double>(p.flops));
      front.y.push_back(front.y.back());
    }
    front.x.push_back(static_cast<double>(p.flops));
    front.y.push_back(p.error);
  }
  std::vector<Series> series{front};
  for (const auto& p : points) {
    auto it = std::find_if(series.begin() + 1, series.end(),
                           [&](const Series& s) { return s.label == p.label; });
    if (it == series.end()) {
      series.push_back({p.label, {}, {}, false, true});
      it = series.end() - 1;
    }
    it->x.push_back(static_cast<double>(p.flops));
    it->y.push_back(p.error);
  }
  PlotOptions opt;
  opt.title = title;
  opt.x_label = "cumulative FLOPs";
  opt.y_label = "average error";
  opt.log_x = true;
  return svg_plot(series, opt);
}

std::string svg_heatmap(const TransferMatrix& m, const std::string& title) {
  const std::size_t k = m.task_ids.size();
  const double cell = 36, left = 110, top = 40;
  const int w = static_cast<int>(left + cell * k + 20);
  const int h = static_cast<int>(top + cell * k + 110);
  double vmax = 1e-12;
  for (const auto& [ij, d] : m.delta) vmax = std::max(vmax, std::abs(d));
  std::ostringstream o;
  header(o, w, h, title);
  for (std::size_t i = 0; i < k; ++i) {
    o << "<text x=\"" << fmt(left - 4) << "\" y=\"" << fmt(top + cell * (i + 0.5) + 4)
      << "\" text-anchor=\"end\">" << escape(m.task_ids[i]) << "</text>\n";
    const double cx = left + cell * (i + 0.5), cy = top + cell * k + 6;
    o << "<text transform=\"translate(" << fmt(cx) << " " << fmt(cy)
      << ") rotate(60)\">" << escape(m.task_ids[i]) << "</text>\n";
  }
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      const double x = left + cell * j, y = top + cell * i;
      std::string fill = "#eeeeee";
      std::string label;
      auto it = m.delta.find({i, j});
      if (it != m.delta.end()) {
        const double t = std::clamp(it->second / vmax, -1.0, 1.0);
        const int shade = static_cast<int>(std::lround(255 * (1 - std::abs(t))));
        std::ostringstream c;
        c << "rgb(" << (t < 0 ? 255 : shade) << "," << shade << "," << (t > 0 ? 255 : shade)
          << ")";
        fill = c.str();
        label = tick(it->second);
      }
      o << "<rect x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" width=\"" << fmt(cell)
        << "\" height=\"" << fmt(cell) << "\" fill=\"" << fill << "\" stroke=\"white\"/>\n";
      if (!label.empty())
        o << "<text x=\"" << fmt(x + cell / 2) << "\" y=\"" << fmt(y + cell / 2 + 3)
          << "\" text-anchor=\"middle\" font-size=\"8\">" << label << "</text>\n";
    }
  o << "</svg>\n";
  return o.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  f << text;
}

}  // namespace taskstream
