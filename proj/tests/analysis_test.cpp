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

#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "taskstream/analysis.hpp"
#include "taskstream/plots.hpp"
#include "test_util.hpp"

namespace taskstream {
namespace {

RunRecord rec(const std::string& id, double err, Flops flops, Phase pass = Phase::kMetaTrain,
              bool meta_test = false) {
  RunRecord r;
  r.task_id = id;
  r.error = err;
  r.flops = flops;
  r.pass = pass;
  r.meta_test_task = meta_test;
  return r;
}

TEST(Aggregate, HandSums) {
  const std::vector<RunRecord> rs{rec("a", 0.1, 5), rec("b", 0.3, 7), rec("c", 0.2, 9)};
  const auto a = aggregate(rs);
  EXPECT_NEAR(a.error, 0.2, 1e-12);
  EXPECT_EQ(a.cflop, 21u);
  EXPECT_EQ(a.tasks, 3u);
  const auto b = aggregate(rs, [](const RunRecord& r) { return r.task_id != "b"; });
  EXPECT_NEAR(b.error, 0.15, 1e-12);
  EXPECT_EQ(b.cflop, 14u);
  EXPECT_THROW(aggregate(rs, [](const RunRecord&) { return false; }), ConfigError);
}

TEST(Aggregate, MetaTestScoresOnlyHeldOutTasks) {
  const std::vector<RunRecord> rs{rec("a", 0.5, 4, Phase::kMetaTest, false),
                                  rec("b", 0.1, 3, Phase::kMetaTest, true),
                                  rec("c", 0.3, 5, Phase::kMetaTest, true),
                                  rec("a", 0.9, 100, Phase::kMetaTrain)};
  const auto a = pass_aggregate(rs, Phase::kMetaTest);
  EXPECT_NEAR(a.error, 0.2, 1e-12);
  EXPECT_EQ(a.cflop, 12u);
  EXPECT_EQ(a.tasks, 3u);
  EXPECT_NEAR(pass_aggregate(rs, Phase::kMetaTrain).error, 0.9, 1e-12);
}

TEST(Slice, BucketsAndDomains) {
  std::vector<RunRecord> rs;
  for (std::size_t n : {10u, 999u, 1000u, 50000u, 100000u}) {
    auto r = rec("t" + std::to_string(n), 0.1, 1);
    r.train_size = n;
    r.domain = n < 1000 ? "digits" : "object";
    r.resolution = {static_cast<int>(n % 300), 300};
    rs.push_back(r);
  }
  const auto by_size = slice(rs, SliceKind::kSize);
  EXPECT_EQ(by_size.at("<1k").tasks, 2u);
  EXPECT_EQ(by_size.at("1k-10k").tasks, 1u);
  EXPECT_EQ(by_size.at("10k-100k").tasks, 1u);
  EXPECT_EQ(by_size.at(">=100k").tasks, 1u);
  const auto by_domain = slice(rs, SliceKind::kDomain);
  EXPECT_EQ(by_domain.at("digits").tasks, 2u);
  EXPECT_EQ(by_domain.at("object").cflop, 3u);
  std::size_t total = 0;
  for (const auto& [k, a] : slice(rs, SliceKind::kResolution)) total += a.tasks;
  EXPECT_EQ(total, rs.size());
  EXPECT_EQ(slice_from_string(to_string(SliceKind::kResolution)), SliceKind::kResolution);
  EXPECT_THROW(slice_from_string("colour"), ConfigError);
}

TEST(Slice, SingleDomainSliceEqualsOverall) {
  std::vector<RunRecord> rs{rec("a", 0.5, 4, Phase::kMetaTest, false),
                            rec("b", 0.1, 3, Phase::kMetaTest, true),
                            rec("c", 0.3, 5, Phase::kMetaTest, true)};
  for (auto& r : rs) r.domain = "ocr";
  const auto s = slice_pass(rs, Phase::kMetaTest, SliceKind::kDomain);
  ASSERT_EQ(s.size(), 1u);
  const auto all = pass_aggregate(rs, Phase::kMetaTest);
  EXPECT_EQ(s.at("ocr").error, all.error);
  EXPECT_EQ(s.at("ocr").cflop, all.cflop);
  rs[0].domain = "scene";
  EXPECT_EQ(slice_pass(rs, Phase::kMetaTest, SliceKind::kDomain).count("scene"), 0u);
}

TEST(Regret, CumulativeDifference) {
  const std::vector<RunRecord> a{rec("x", 0.5, 1), rec("y", 0.2, 1), rec("z", 0.4, 1)};
  const std::vector<RunRecord> ref{rec("x", 0.3, 1), rec("y", 0.3, 1), rec("z", 0.1, 1)};
  const auto r = regret_curve(a, ref);
  ASSERT_EQ(r.size(), 3u);
  EXPECT_NEAR(r[0], 0.2, 1e-12);
  EXPECT_NEAR(r[1], 0.1, 1e-12);
  EXPECT_NEAR(r[2], 0.4, 1e-12);
  EXPECT_THROW(regret_curve(a, {ref[0], ref[1]}), DataError);
  EXPECT_THROW(regret_curve(a, {ref[0], ref[2], ref[1]}), DataError);
}

TEST(ForwardTransfer, HandValues) {
  const std::vector<CurvePoint> c1{{0, 0.5}, {10, 1.0}};
  EXPECT_NEAR(curve_auc(c1), 0.75, 1e-12);
  const std::vector<CurvePoint> c2{{0, 0.9}, {5, 1.0}, {10, 1.0}};
  EXPECT_NEAR(curve_auc(c2), 0.975, 1e-12);
  EXPECT_NEAR(*forward_transfer(c1, c2), 0.9, 1e-12);
  EXPECT_NEAR(*forward_transfer(c2, c1), (0.75 - 0.975) / 0.025, 1e-9);
  EXPECT_FALSE(forward_transfer({{0, 1.0}, {4, 1.0}}, c1).has_value());
  EXPECT_NEAR(*forward_transfer(c1, c1), 0.0, 1e-12);
  EXPECT_THROW(curve_auc({}), DataError);
  // Non-uniform spacing is normalised by the step span.
  EXPECT_NEAR(curve_auc({{0, 0.0}, {1, 1.0}, {100, 1.0}}), (0.5 * 1 + 99) / 100.0, 1e-12);
}

bool dominated(const ParetoPoint& p, const std::vector<ParetoPoint>& all) {
  for (const auto& q : all)
    if (q.flops <= p.flops && q.error <= p.error && (q.flops < p.flops || q.error < p.error))
      return true;
  return false;
}

TEST(Pareto, MatchesQuadraticOracle) {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<ParetoPoint> pts;
    const int n = 1 + static_cast<int>(rng() % 30);
    for (int i = 0; i < n; ++i)
      pts.push_back({"p" + std::to_string(i), static_cast<double>(rng() % 10) / 10.0,
                     static_cast<Flops>(1 + rng() % 10)});
    const auto front = pareto_front(pts);
    std::set<std::pair<Flops, double>> expect, got;
    for (const auto& p : pts)
      if (!dominated(p, pts)) expect.insert({p.flops, p.error});
    for (const auto& p : front) got.insert({p.flops, p.error});
    EXPECT_EQ(got, expect);
    EXPECT_EQ(got.size(), front.size());  // duplicates collapse
    for (std::size_t i = 1; i < front.size(); ++i) {
      EXPECT_LT(front[i - 1].flops, front[i].flops);
      EXPECT_GT(front[i - 1].error, front[i].error);
    }
    EXPECT_EQ(pareto_front(front).size(), front.size());
  }
}

TEST(Analysis, NearestCflopUsesLogDistance) {
  EXPECT_EQ(nearest_cflop({10, 1000, 100000}, 200), 1u);
  EXPECT_EQ(nearest_cflop({10, 1000}, 90), 0u);
  EXPECT_EQ(nearest_cflop({10, 1000}, 120), 1u);
  EXPECT_THROW(nearest_cflop({}, 1), ConfigError);
}

TEST(Analysis, MeanStd) {
  const auto m = mean_std({1.0, 2.0, 3.0, 4.0});
  EXPECT_NEAR(m.mean, 2.5, 1e-12);
  EXPECT_NEAR(m.stddev, std::sqrt(5.0 / 3.0), 1e-12);
  EXPECT_EQ(mean_std({7.0}).stddev, 0.0);
}

TEST(Csv, QuotesAndIsIdempotent) {
  testing::TempDir dir;
  const auto p = dir.path() / "a" / "out.csv";
  write_csv(p, {"name", "value"}, {{"plain", "1"}, {"with,comma", "say \"hi\""}});
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  EXPECT_EQ(ss.str(), "name,value\nplain,1\n\"with,comma\",\"say \"\"hi\"\"\"\n");
  write_csv(p, {"name", "value"}, {{"plain", "1"}, {"with,comma", "say \"hi\""}});
  std::ifstream g(p);
  std::stringstream s2;
  s2 << g.rdbuf();
  EXPECT_EQ(s2.str(), ss.str());
  EXPECT_EQ(format_double(0.25), "0.25");
}

TEST(Plots, DeterministicSvg) {
  std::vector<ParetoPoint> pts{{"Indep", 0.3, 1000}, {"FT-d", 0.2, 5000}, {"MT", 0.25, 800000}};
  const auto a = svg_pareto(pts, "front");
  EXPECT_EQ(a, svg_pareto(pts, "front"));
  EXPECT_EQ(a.rfind("<svg", 0), 0u);
  EXPECT_NE(a.find("</svg>"), std::string::npos);
  EXPECT_NE(a.find("FT-d"), std::string::npos);
  PlotOptions opt;
  opt.title = "a < b & c";
  const auto b = svg_plot({{"s", {0, 1, 2}, {0.0, 0.5, 0.2}}}, opt);
  EXPECT_NE(b.find("a &lt; b &amp; c"), std::string::npos);
  EXPECT_THROW(svg_plot({{"bad", {0, 1}, {0.0}}}, opt), ConfigError);
  TransferMatrix m;
  m.task_ids = {"a", "b"};
  m.reference_error = {0.2, 0.3};
  m.delta[{0, 1}] = 0.05;
  const auto h = svg_heatmap(m, "transfer");
  EXPECT_EQ(h, svg_heatmap(m, "transfer"));
  EXPECT_NE(h.find("rgb("), std::string::npos);
}

TEST(TransferMatrix, CountsRunsAndSignOfRelatedPair) {
  SyntheticStreamSpec spec;
  spec.num_tasks = 3;
  spec.tasks = {{4, {1000, 200, 200}}, {4, {40, 200, 200}}, {4, {40, 200, 200}}};
  spec.relations = {{1, 0, 0.1, false}, {2, 0, 0.0, true}};
  spec.seed = 3;
  const Stream s = make_synthetic_stream(spec);
  TransferOptions o;
  o.search.n_trials = 2;
  o.search.space = "small";
  o.predictor.arch = Architecture::mlp({32});
  o.predictor.num_updates = 200;
  const auto m = transfer_matrix(s, o, 7);
  EXPECT_EQ(m.runs, 3u + 3u);
  EXPECT_EQ(m.trainings, 6u * 2u);
  EXPECT_EQ(m.delta.size(), 3u);
  EXPECT_GT(m.delta.at({0, 1}), 0.0);
  for (const auto& [ij, d] : m.delta) EXPECT_LT(ij.first, ij.second);
}

}  // namespace
}  // namespace taskstream
