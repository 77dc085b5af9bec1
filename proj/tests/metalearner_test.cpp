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

#include <cmath>

#include "taskstream/metalearner.hpp"
#include "taskstream/protocol.hpp"
#include "test_util.hpp"

namespace taskstream {
namespace {

LearnerConfig small_config(Family family, std::int64_t updates = 200, std::size_t trials = 2) {
  LearnerConfig c;
  c.strategy.family = family;
  c.search.n_trials = trials;
  c.search.space = "small";
  c.predictor.arch = Architecture::mlp({32});
  c.predictor.num_updates = updates;
  return c;
}

TEST(Ensemble, HandWeights) {
  const auto w = ensemble_weights({0.9, 0.8}, 0.1);
  EXPECT_NEAR(w[0], 0.7310585786, 1e-6);
  EXPECT_NEAR(w[1], 0.2689414214, 1e-6);
  EXPECT_DOUBLE_EQ(ensemble_weights({0.4}, 0.1)[0], 1.0);
  for (double v : ensemble_weights({0.5, 0.5, 0.5}, 0.1)) EXPECT_NEAR(v, 1.0 / 3, 1e-15);
}

TEST(Ensemble, WeightsSumToOneAndShiftInvariant) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u;
  for (int r = 0; r < 100; ++r) {
    std::vector<double> acc(1 + rng() % 6);
    for (auto& a : acc) a = u(rng);
    const auto w = ensemble_weights(acc, 0.1);
    EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0), 1.0, 1e-12);
    auto shifted = acc;
    for (auto& a : shifted) a += 0.37;
    const auto ws = ensemble_weights(shifted, 0.1);
    for (std::size_t i = 0; i < w.size(); ++i) EXPECT_NEAR(w[i], ws[i], 1e-12);
  }
}

TEST(Ensemble, SingleMemberIsIdentity) {
  auto s = init_backbone(Architecture::mlp({4}), {0, 0, 0, 3}, 1);
  s.heads["t"] = init_head(4, 3, 2);
  RowMatrix x = RowMatrix::Random(5, 3);
  const RowMatrix p = ensemble_predict({{&s, 0.7}}, "t", x, TaskKind::kSingleLabel, 0.1);
  EXPECT_TRUE(p.isApprox(predict_proba(s, "t", x, TaskKind::kSingleLabel), 1e-15));
}

MetaLearnerState bank_of(const std::vector<std::string>& ids, const InputShape& input) {
  MetaLearnerState st;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto m = init_backbone(Architecture::mlp({4}), input, i);
    m.heads[ids[i]] = init_head(4, 2, i);
    st.bank[ids[i]] = {m, 0.1, kScratch};
    st.dataset_refs.push_back(ids[i]);
  }
  return st;
}

TEST(SelectInit, Definitions) {
  const InputShape in{0, 0, 0, 3};
  const auto st = bank_of({"a", "b", "c"}, in);
  Strategy s;
  s.family = Family::kIndep;
  EXPECT_EQ(select_init(s, st, {}, in).provenance, kScratch);
  EXPECT_FALSE(select_init(s, st, {}, in).init);
  s.family = Family::kFtPrev;
  EXPECT_EQ(select_init(s, st, {}, in).provenance, "c");
  s.family = Family::kFtD;
  EXPECT_EQ(select_init(s, MetaLearnerState{}, {}, in).provenance, kScratch);
  const std::vector<RelatednessScore> scores = {{"a", 0.5}, {"b", 0.9}, {"c", 0.9}};
  EXPECT_EQ(select_init(s, st, scores, in).provenance, "b");
  // Positive rescaling leaves the choice unchanged; repeated calls agree.
  auto scaled = scores;
  for (auto& x : scaled) x.score *= 3.5;
  EXPECT_EQ(select_init(s, st, scaled, in).provenance, "b");
  EXPECT_EQ(select_init(s, st, scores, in).provenance, select_init(s, st, scores, in).provenance);
  // Models with a different input shape are ineligible.
  EXPECT_EQ(select_init(s, st, scores, {0, 0, 0, 5}).provenance, kScratch);
}

TEST(SelectInit, PretrainedVariants) {
  const InputShape in{0, 0, 0, 3};
  auto st = bank_of({"a", "b"}, in);
  Strategy s;
  s.family = Family::kPt;
  EXPECT_THROW(select_init(s, st, {}, in), ConfigError);
  st.pretrained = init_backbone(Architecture::mlp({4}), in, 9);
  EXPECT_EQ(select_init(s, st, {}, in).provenance, kPretrained);
  s.family = Family::kPtFt;
  EXPECT_EQ(select_init(s, st, {{kPretrained, 0.95}, {"a", 0.6}, {"b", 0.9}}, in).provenance,
            kPretrained);
  EXPECT_EQ(select_init(s, st, {{kPretrained, 0.5}, {"a", 0.6}, {"b", 0.9}}, in).provenance, "b");
  s.family = Family::kFtD;
  EXPECT_EQ(select_init(s, st, {{kPretrained, 0.95}, {"a", 0.6}}, in).provenance, "a");
}

TEST(Strategy, ParsingAndValidation) {
  EXPECT_EQ(family_from_string("FT-d"), Family::kFtD);
  EXPECT_EQ(family_from_string("pt+ft"), Family::kPtFt);
  EXPECT_EQ(family_from_string("Indep"), Family::kIndep);
  EXPECT_THROW(family_from_string("ewc"), ConfigError);
  Strategy s;
  s.family = Family::kPt;
  EXPECT_THROW(s.validate(), ConfigError);
  s.family = Family::kMt;
  s.mt_k = 2;
  EXPECT_EQ(s.label(), "MT(k=2)");
}

TEST(TrialConfig, MapsHyperparameters) {
  PredictorConfig base;
  const auto c = trial_config(base,
                              {{"learning_rate", 0.05},
                               {"label_smoothing", 0.1},
                               {"schedule", std::string("piecewise")},
                               {"batch_size", 32.0},
                               {"architecture", std::string("mlp_deep")},
                               {"horizontal_flip", std::string("off")},
                               {"mt_lambda", 0.3}},
                              77, 5);
  EXPECT_DOUBLE_EQ(c.learning_rate, 0.05);
  EXPECT_EQ(c.schedule, Schedule::kPiecewiseConstant);
  EXPECT_EQ(*c.batch_size, 32);
  EXPECT_EQ(c.arch.layers.size(), 2u);
  EXPECT_FALSE(c.augmentation.horizontal_flip);
  EXPECT_EQ(c.num_updates, 77);
  EXPECT_THROW(trial_config(base, {{"momentum", 0.5}}, 1, 1), ConfigError);
}

Task random_label_task(std::size_t n, int classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal;
  auto make = [&](std::size_t count) {
    Split s;
    for (std::size_t i = 0; i < count; ++i) {
      Example e;
      e.input = {normal(rng), normal(rng), normal(rng), normal(rng)};
      e.label = static_cast<int>(rng() % classes);
      s.push_back(std::move(e));
    }
    return s;
  };
  auto splits = std::make_shared<TaskSplits>();
  splits->train = make(n);
  splits->val = make(10);
  splits->test = make(10);
  TaskInfo info;
  info.id = "random";
  info.num_classes = classes;
  info.kind = TaskKind::kSingleLabel;
  return Task(info, splits);
}

TEST(Relatedness, UntrainedFeaturesScoreChance) {
  const int c = 4;
  double total = 0.0;
  std::size_t n_val = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Task t = random_label_task(900, c, seed);
    const auto model = init_backbone(Architecture::mlp({16}), {0, 0, 0, 4}, seed);
    const auto s = relatedness_scores(t, {{"m", &model}}, {}, 64, seed);
    ASSERT_EQ(s.size(), 1u);
    total += s[0].score * 300;
    n_val += 300;
  }
  const double p = total / static_cast<double>(n_val);
  const double sigma = std::sqrt(0.25 * 0.75 / static_cast<double>(n_val));
  EXPECT_NEAR(p, 1.0 / c, 3 * sigma);
}

TEST(Relatedness, SubsampleCaps) {
  const Task t = random_label_task(50000, 2, 1);
  const auto model = init_backbone(Architecture::mlp({8}), {0, 0, 0, 4}, 1);
  const auto s = relatedness_scores(t, {{"m", &model}}, {}, 64, 3);
  EXPECT_EQ(s[0].embed_flops, 15000u * backbone_forward_flops(model.arch, model.input));
  const auto small = relatedness_scores(random_label_task(30, 2, 1), {{"m", &model}}, {}, 64, 3);
  EXPECT_EQ(small[0].embed_flops, 30u * backbone_forward_flops(model.arch, model.input));
}

TEST(Relatedness, DuplicateTaskScoresHighest) {
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SyntheticStreamSpec spec;
    spec.num_tasks = 3;
    spec.task_defaults.num_classes = 4;
    spec.task_defaults.sizes = {300, 100, 100};
    spec.repeats = {0};
    spec.seed = seed;
    const Stream s = make_synthetic_stream(spec);
    std::vector<PredictorState> models;
    for (std::size_t i = 0; i < 3; ++i) {
      PredictorConfig c;
      c.arch = Architecture::mlp({32});
      c.num_updates = 300;
      c.learning_rate = 0.05;
      c.seed = seed;
      models.push_back(train(TrainTask::from(s[i]), c).final_state);
    }
    std::vector<Candidate> cands;
    for (std::size_t i = 0; i < 3; ++i) cands.push_back({s[i].id(), &models[i]});
    auto scores = relatedness_scores(s[3], cands, {}, 64, seed);
    const double top = std::max({scores[0].score, scores[1].score, scores[2].score});
    wins += scores[0].score == top ? 1 : 0;
  }
  EXPECT_GE(wins, 16);
}

TEST(TrainTask, TrialCountAndAccounting) {
  const Stream s = testing::tiny_stream(2, 2);
  auto cfg = small_config(Family::kIndep, 20, 8);
  MetaLearnerState st;
  const auto r = train_task(cfg, CausalView(s, 0), st, 1);
  EXPECT_EQ(r.trials.size(), 8u);
  EXPECT_EQ(r.reports.size(), 8u);
  Flops max_trial = 0, sum = 0;
  for (const auto& t : r.trials) {
    max_trial = std::max(max_trial, t.flops);
    sum += t.flops;
  }
  EXPECT_EQ(r.total_flops, sum);
  EXPECT_LE(max_trial, r.total_flops);
  EXPECT_EQ(r.provenance, kScratch);
  EXPECT_EQ(st.dataset_refs.size(), 1u);
  const auto r2 = train_task(cfg, CausalView(s, 1), st, 2);
  EXPECT_EQ(r2.provenance, kScratch);
  EXPECT_EQ(st.dataset_refs.size(), 2u);
}

TEST(TrainTask, FineTuneFamiliesRecordProvenance) {
  const Stream s = testing::tiny_stream(3, 3);
  for (Family f : {Family::kFtPrev, Family::kFtD, Family::kFtS, Family::kMt}) {
    auto cfg = small_config(f, 10, 2);
    MetaLearnerState st;
    const auto r0 = train_task(cfg, CausalView(s, 0), st, 1);
    EXPECT_EQ(r0.provenance, kScratch);
    const auto r1 = train_task(cfg, CausalView(s, 1), st, 2);
    EXPECT_EQ(r1.provenance, "t0") << to_string(f);
    if (f == Family::kFtPrev) {
      EXPECT_EQ(r1.embed_flops, 0u);
    } else {
      EXPECT_GT(r1.embed_flops, 0u);
      EXPECT_GE(r1.total_flops, r1.trial_flops + r1.embed_flops);
    }
    if (f == Family::kFtS) {
      EXPECT_EQ(st.frozen.size(), 2u);
      EXPECT_GT(r1.frozen_flops, 0u);
    }
    if (f == Family::kMt) EXPECT_TRUE(r1.trials[0].hparams.count("mt_lambda"));
  }
}

TEST(TrainTask, UnchargedFlagsDropExtraCosts) {
  const Stream s = testing::tiny_stream(2, 2);
  auto cfg = small_config(Family::kFtS, 10, 2);
  cfg.charge_embedding_flops = false;
  cfg.charge_frozen_models = false;
  MetaLearnerState st;
  train_task(cfg, CausalView(s, 0), st, 1);
  const auto r = train_task(cfg, CausalView(s, 1), st, 2);
  EXPECT_EQ(r.total_flops, r.trial_flops);
}

TEST(Multitask, ZeroWeightMatchesSingleTask) {
  const Stream s = testing::tiny_stream(2, 2);
  PredictorConfig c;
  c.arch = Architecture::mlp({6}, Activation::kTanh, true);
  c.num_updates = 15;
  const auto init = init_backbone(c.arch, {0, 0, 0, 2}, 3);
  MultitaskSpec spec{{{TrainTask::from(s[0]), init_head(6, 2, 1)}}, 0.0, 64};
  const auto single = train(TrainTask::from(s[1]), c, init);
  const auto multi = train(TrainTask::from(s[1]), c, init, &spec);
  EXPECT_EQ(serialize(single.final_state), serialize(multi.final_state));
  EXPECT_GT(multi.flops, single.flops);
}

TEST(TrainTask, EnsembleEvaluation) {
  const Stream s = testing::tiny_stream(1, 1);
  auto cfg = small_config(Family::kIndep, 20, 4);
  cfg.strategy.ensemble = true;
  MetaLearnerState st;
  const auto r = train_task(cfg, CausalView(s, 0), st, 1);
  ASSERT_EQ(r.ensemble_weights.size(), 4u);
  EXPECT_NEAR(std::accumulate(r.ensemble_weights.begin(), r.ensemble_weights.end(), 0.0), 1.0,
              1e-12);
}

TEST(TrainTask, FineTuningHelpsOnRelatedTask) {
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SyntheticStreamSpec spec;
    spec.num_tasks = 2;
    spec.tasks = {{4, {1000, 200, 200}}, {4, {40, 200, 200}}};
    spec.relations = {{1, 0, 0.1, false}};
    spec.seed = seed;
    const Stream s = make_synthetic_stream(spec);
    double err[2];
    int k = 0;
    for (Family f : {Family::kIndep, Family::kFtD}) {
      auto cfg = small_config(f, 200, 2);
      MetaLearnerState st;
      train_task(cfg, CausalView(s, 0), st, seed);
      err[k++] = train_task(cfg, CausalView(s, 1), st, seed + 100).val_error;
    }
    wins += err[1] < err[0] ? 1 : 0;
  }
  EXPECT_GE(wins, 16);
}

TEST(StrategyLearner, StateRoundTrip) {
  const Stream s = testing::tiny_stream(3, 3);
  StrategyLearner a(small_config(Family::kFtS, 10, 2));
  a.learn(CausalView(s, 0), 1);
  a.learn(CausalView(s, 1), 2);
  StrategyLearner b(small_config(Family::kFtS, 10, 2));
  b.load_state(a.save_state());
  EXPECT_EQ(b.save_state(), a.save_state());
  const auto oa = a.learn(CausalView(s, 2), 3);
  const auto ob = b.learn(CausalView(s, 2), 3);
  EXPECT_EQ(oa.flops, ob.flops);
  EXPECT_EQ(oa.provenance, ob.provenance);
  EXPECT_EQ(oa.error_on(s[2].test()), ob.error_on(s[2].test()));
  StrategyLearner other(small_config(Family::kFtD, 10, 2));
  EXPECT_THROW(other.load_state(a.save_state()), ConfigError);
}

TEST(StrategyLearner, PretrainedSourceMustLoad) {
  auto cfg = small_config(Family::kPt);
  cfg.strategy.pretrained_source = "/nonexistent/model.tsps";
  EXPECT_THROW(StrategyLearner{cfg}, DataError);
}

}  // namespace
}  // namespace taskstream
