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

// Meta-learning strategies: initialisation policy, relatedness probe,
// multitask training, ensembling and per-task search.

#ifndef TASKSTREAM_METALEARNER_HPP_
#define TASKSTREAM_METALEARNER_HPP_

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "taskstream/hpo.hpp"
#include "taskstream/learner.hpp"
#include "taskstream/predictor.hpp"

namespace taskstream {

enum class Family { kIndep, kFtPrev, kFtS, kFtD, kMt, kPt, kPtFt };

std::string to_string(Family f);
Family family_from_string(const std::string& s);

struct Strategy {
  Family family = Family::kIndep;
  int mt_k = 1;
  bool ensemble = false;
  double ensemble_temperature = 0.1;
  std::filesystem::path pretrained_source;

  void validate() const;
  std::string label() const;
};

enum class SearchKind { kRandom, kBhpo };

struct SearchConfig {
  SearchKind kind = SearchKind::kRandom;
  std::string space = "small";
  std::size_t n_trials = 2;
  double beta = 2.0;
};

struct KnnOptions {
  int k = 1;
  std::size_t max_train = 10000;
  std::size_t max_val = 5000;
  // Tasks with at most this many training examples are probed leave-one-out
  // over the whole training set instead of a disjoint split.
  std::size_t loo_max = 1000;
};

struct LearnerConfig {
  Strategy strategy;
  SearchConfig search;
  PredictorConfig predictor;  // defaults for everything the search does not set
  KnnOptions knn;
  bool charge_embedding_flops = true;
  bool charge_frozen_models = true;
  std::int64_t frozen_num_updates = 0;  // 0: same as predictor.num_updates

  void validate() const;
};

struct BankEntry {
  PredictorState model;
  double val_error = 1.0;
  std::string provenance;
};

struct MetaLearnerState {
  std::map<std::string, BankEntry> bank;
  std::vector<std::string> dataset_refs;
  std::map<std::string, PredictorState> frozen;
  std::optional<PredictorState> pretrained;
};

inline constexpr const char* kScratch = "scratch";
inline constexpr const char* kPretrained = "pretrained";

struct RelatednessScore {
  std::string source;
  double score = 0.0;
  Flops embed_flops = 0;
};

struct Candidate {
  std::string id;
  const PredictorState* model = nullptr;
};

// kNN accuracy of the task's own data in each candidate's feature space.
// Candidates whose input shape differs from the task's are skipped.
std::vector<RelatednessScore> relatedness_scores(const Task& task,
                                                 const std::vector<Candidate>& candidates,
                                                 const KnnOptions& options, int resolution,
                                                 std::uint64_t seed);

// Leave-nothing-out 1-NN style classifier accuracy; exposed for tests.
double knn_accuracy(const RowMatrix& train_features, const Split& train,
                    const std::vector<std::size_t>& train_idx, const RowMatrix& val_features,
                    const Split& val_split, const std::vector<std::size_t>& val_idx,
                    TaskKind kind, int num_classes, int k);

// kNN accuracy where every row of `idx` is queried against all the others.
double knn_loo_accuracy(const RowMatrix& features, const Split& split,
                        const std::vector<std::size_t>& idx, TaskKind kind, int num_classes,
                        int k);

struct InitChoice {
  std::optional<PredictorState> init;
  std::string provenance = kScratch;
};

// Pure in (strategy, state, scores). Only models whose input shape equals
// `input` are eligible.
InitChoice select_init(const Strategy& strategy, const MetaLearnerState& state,
                       const std::vector<RelatednessScore>& scores, const InputShape& input);

std::vector<double> ensemble_weights(const std::vector<double>& accuracies, double temperature);

struct EnsembleMember {
  const PredictorState* model = nullptr;
  double val_accuracy = 0.0;
};

RowMatrix ensemble_predict(const std::vector<EnsembleMember>& members, const std::string& head,
                           const RowMatrix& inputs, TaskKind kind, double temperature);

// Builds the trainer configuration for one trial.
PredictorConfig trial_config(const PredictorConfig& base, const HParams& hparams,
                             std::int64_t num_updates, std::uint64_t seed);

struct TaskTrainResult {
  std::vector<Trial> trials;
  std::vector<TrainReport> reports;
  std::size_t chosen = 0;
  std::string provenance = kScratch;
  Flops trial_flops = 0;
  Flops embed_flops = 0;
  Flops frozen_flops = 0;
  Flops total_flops = 0;
  double val_error = 1.0;
  std::vector<double> ensemble_weights;
};

// Runs the per-task search for the current task of `view` and updates `state`.
TaskTrainResult train_task(const LearnerConfig& config, const CausalView& view,
                           MetaLearnerState& state, std::uint64_t seed);

// Meta-learner that threads a MetaLearnerState through the stream.
class StrategyLearner : public MetaLearner {
 public:
  explicit StrategyLearner(LearnerConfig config);

  std::string name() const override { return config_.strategy.label(); }
  void reset() override;
  TaskOutcome learn(const CausalView& view, std::uint64_t seed) override;
  std::vector<std::uint8_t> save_state() const override;
  void load_state(std::span<const std::uint8_t> bytes) override;

  const MetaLearnerState& state() const noexcept { return state_; }
  const LearnerConfig& config() const noexcept { return config_; }
  const TaskTrainResult& last_result() const noexcept { return last_; }

 private:
  LearnerConfig config_;
  MetaLearnerState state_;
  std::optional<PredictorState> pretrained_;
  TaskTrainResult last_;
};

}  // namespace taskstream

#endif  // TASKSTREAM_METALEARNER_HPP_
