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

#include "taskstream/metalearner.hpp"
#include "taskstream/protocol.hpp"
#include "taskstream/task_io.hpp"
#include "test_util.hpp"

namespace taskstream {
namespace {

using testing::TempDir;

// Returns scripted (val error, test error, flops) per position.
class ScriptedLearner : public MetaLearner {
 public:
  struct Step {
    double val, test;
    Flops flops;
  };
  explicit ScriptedLearner(std::vector<Step> steps) : steps_(std::move(steps)) {}
  std::string name() const override { return "scripted"; }
  void reset() override { ++resets; }
  TaskOutcome learn(const CausalView& view, std::uint64_t) override {
    const Step s = steps_.at(view.cursor());
    visits.push_back(view.cursor());
    TaskOutcome o;
    o.val_error = s.val;
    o.flops = s.flops;
    o.error_on = [s](const Split&) { return s.test; };
    return o;
  }
  std::vector<std::uint8_t> save_state() const override { return {}; }
  void load_state(std::span<const std::uint8_t>) override {}

  int resets = 0;
  std::vector<std::size_t> visits;

 private:
  std::vector<Step> steps_;
};

// Peeks at the next task when it reaches `at`.
class ProbeLearner : public ScriptedLearner {
 public:
  explicit ProbeLearner(std::size_t at) : ScriptedLearner({{0, 0, 0}, {0, 0, 0}, {0, 0, 0}}), at_(at) {}
  TaskOutcome learn(const CausalView& view, std::uint64_t seed) override {
    if (view.cursor() == at_) view.task(view.cursor() + 1);
    return ScriptedLearner::learn(view, seed);
  }

 private:
  std::size_t at_;
};

TEST(MetaTrain, HandSums) {
  const Stream s = testing::tiny_stream(3, 3);
  ScriptedLearner l({{0.1, 0, 5}, {0.2, 0, 7}, {0.3, 0, 9}});
  const auto r = run_meta_train(s, l, 1);
  EXPECT_NEAR(r.summary.error, 0.2, 1e-15);
  EXPECT_EQ(r.summary.cflop, 21u);
  EXPECT_EQ(r.records.size(), 3u);
}

TEST(MetaTest, HandSums) {
  const Stream s = testing::tiny_stream(3, 2);
  ScriptedLearner l({{0.9, 0.4, 3}, {0.9, 0.2, 4}, {0.9, 0.1, 5}});
  const auto tr = run_meta_train(s, l, 1);
  EXPECT_EQ(tr.records.size(), 2u);
  EXPECT_EQ(tr.summary.cflop, 7u);
  const auto te = run_meta_test(s, l, 1);
  EXPECT_DOUBLE_EQ(te.summary.error, 0.1);
  EXPECT_EQ(te.summary.cflop, 12u);
  EXPECT_EQ(te.records.size(), 3u);
  EXPECT_DOUBLE_EQ(te.records[0].error, 0.4);
  EXPECT_EQ(l.resets, 2);
}

TEST(Protocol, BoundaryEdges) {
  EXPECT_THROW(testing::tiny_stream(3, 0), DataError);
  const Stream s = testing::tiny_stream(3, 3);
  ScriptedLearner l({{0.1, 0, 1}, {0.1, 0, 1}, {0.1, 0, 1}});
  EXPECT_EQ(run_meta_train(s, l, 0).records.size(), 3u);
}

TEST(Protocol, FutureAccessIsAViolation) {
  const Stream s = testing::tiny_stream(3, 3);
  ProbeLearner probe(1);
  try {
    run_meta_train(s, probe, 0);
    FAIL() << "expected a causality violation";
  } catch (const CausalityViolation& v) {
    EXPECT_EQ(v.cursor(), 1u);
    EXPECT_EQ(v.requested(), 2u);
    EXPECT_EQ(v.exit_code(), 3);
  }
  const CausalView view(s, 1);
  EXPECT_EQ(view.task(0).id(), "t0");
  EXPECT_EQ(view.task("t1").id(), "t1");
  EXPECT_THROW(view.task("t2"), CausalityViolation);
}

TEST(Protocol, MetaTestErrorIsOrderIndependentMean) {
  const Stream s = testing::tiny_stream(5, 2);
  ScriptedLearner l({{0, 0.5, 1}, {0, 0.5, 1}, {0, 0.3, 1}, {0, 0.1, 2}, {0, 0.2, 3}});
  const auto r = run_meta_test(s, l, 0);
  EXPECT_NEAR(r.summary.error, 0.2, 1e-15);
  EXPECT_EQ(r.summary.cflop, 8u);
}

TEST(Records, JsonRoundTrip) {
  RunRecord r;
  r.pass = Phase::kMetaTest;
  r.position = 4;
  r.task_id = "x";
  r.strategy = "FT-d";
  r.hparams = {{"learning_rate", 0.01}, {"schedule", std::string("cosine")}};
  r.provenance = "t1";
  r.error = 0.25;
  r.flops = 123456789012345ULL;
  r.learning_curve = {{0, 0.5}, {10, 0.75}};
  r.seed = 99;
  r.resolution = {28, 28};
  const RunRecord back = record_from_json(to_json(r));
  EXPECT_EQ(to_json(back), to_json(r));
  auto j = to_json(r);
  j["schema_version"] = 2;
  EXPECT_THROW(record_from_json(j), DataError);
}

LearnerConfig quick(Family f) {
  LearnerConfig c;
  c.strategy.family = f;
  c.search.n_trials = 2;
  c.predictor.arch = Architecture::mlp({16});
  c.predictor.num_updates = 30;
  c.predictor.eval_interval = 10;
  return c;
}

Stream synthetic(std::uint64_t seed) {
  SyntheticStreamSpec spec;
  spec.num_tasks = 5;
  spec.task_defaults.sizes = {120, 40, 40};
  spec.relations = {{3, 0, 0.1, false}};
  spec.boundary = 3;
  spec.seed = seed;
  return make_synthetic_stream(spec);
}

std::string strip_wall_time(const std::filesystem::path& log) {
  std::ifstream in(log);
  std::string line, out;
  while (std::getline(in, line)) {
    auto j = nlohmann::json::parse(line);
    j.erase("wall_time");
    out += j.dump() + "\n";
  }
  return out;
}

TEST(Run, DeterministicRecords) {
  const Stream s = synthetic(3);
  TempDir a, b;
  StrategyLearner la(quick(Family::kFtD)), lb(quick(Family::kFtD));
  const auto ra = run_protocol(s, la, {{Phase::kMetaTrain, Phase::kMetaTest}, 5, a.path()});
  const auto rb = run_protocol(s, lb, {{Phase::kMetaTrain, Phase::kMetaTest}, 5, b.path()});
  EXPECT_TRUE(ra.complete);
  EXPECT_EQ(ra.records.size(), 3u + 5u);
  ASSERT_EQ(ra.summaries.size(), 2u);
  EXPECT_EQ(strip_wall_time(a.path() / kRecordLogName), strip_wall_time(b.path() / kRecordLogName));
  Flops sum = 0;
  for (const auto& r : ra.records)
    if (r.pass == Phase::kMetaTest) sum += r.flops;
  EXPECT_EQ(ra.summaries[1].cflop, sum);
  const auto log = read_record_log(a.path() / kRecordLogName);
  EXPECT_EQ(log.records.size(), 8u);
  EXPECT_EQ(log.header.at("strategy"), "FT-d");
}

TEST(Run, ResumeMatchesUninterrupted) {
  const Stream s = synthetic(4);
  for (std::size_t k : {0u, 1u, 3u, 5u, 7u}) {
    TempDir full, part;
    StrategyLearner lf(quick(Family::kFtS));
    run_protocol(s, lf, {{Phase::kMetaTrain, Phase::kMetaTest}, 2, full.path()});
    StrategyLearner lp(quick(Family::kFtS));
    RunOptions o{{Phase::kMetaTrain, Phase::kMetaTest}, 2, part.path(), k};
    const auto first = run_protocol(s, lp, o);
    EXPECT_FALSE(first.complete);
    EXPECT_EQ(first.tasks_run, k);
    StrategyLearner lr(quick(Family::kFtS));  // fresh process
    o.stop_after.reset();
    const auto second = run_protocol(s, lr, o, true);
    EXPECT_TRUE(second.complete);
    EXPECT_EQ(second.tasks_run, 8 - k);
    EXPECT_EQ(strip_wall_time(full.path() / kRecordLogName),
              strip_wall_time(part.path() / kRecordLogName))
        << "interrupted after " << k;
    const auto again = run_protocol(s, lr, o, true);
    EXPECT_TRUE(again.complete);
    EXPECT_EQ(again.tasks_run, 0u);
  }
}

TEST(Run, ResumeWithoutCheckpointStartsFresh) {
  const Stream s = synthetic(1);
  TempDir d;
  ScriptedLearner l({{0.1, 0.1, 1}, {0.1, 0.1, 1}, {0.1, 0.1, 1}, {0.1, 0.1, 1}, {0.1, 0.1, 1}});
  const auto r = run_protocol(s, l, {{Phase::kMetaTrain}, 0, d.path()}, true);
  EXPECT_TRUE(r.complete);
  EXPECT_EQ(l.visits, (std::vector<std::size_t>{0, 1, 2}));
}

TEST(Run, CorruptOrMismatchedCheckpointIsRejected) {
  const Stream s = synthetic(1);
  TempDir d;
  StrategyLearner l(quick(Family::kIndep));
  RunOptions o{{Phase::kMetaTrain}, 0, d.path(), 1};
  run_protocol(s, l, o);
  RunOptions other = o;
  other.seed = 1;
  EXPECT_THROW(run_protocol(s, l, other, true), ConfigError);
  write_file_atomic(d.path() / kCheckpointName, std::string("garbage"));
  EXPECT_THROW(run_protocol(s, l, o, true), DataError);
}

}  // namespace
}  // namespace taskstream
