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

#include "taskstream/metalearner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <random>

#include "json.hpp"
#include "taskstream/task_io.hpp"

namespace taskstream {

using Eigen::Index;
using nlohmann::json;

namespace {

struct FamilyName {
  Family family;
  const char* label;
  const char* key;
};

constexpr FamilyName kFamilies[] = {
    {Family::kIndep, "Indep", "indep"},  {Family::kFtPrev, "FT-prev", "ft_prev"},
    {Family::kFtS, "FT-s", "ft_s"},      {Family::kFtD, "FT-d", "ft_d"},
    {Family::kMt, "MT", "mt"},           {Family::kPt, "PT", "pt"},
    {Family::kPtFt, "PT+FT", "pt_ft"},
};

std::string normalise(std::string s) {
  for (auto& c : s) {
    if (c == '-' || c == '+') c = '_';
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return s;
}

}  // namespace

std::string to_string(Family f) {
  for (const auto& n : kFamilies)
    if (n.family == f) return n.key;
  return "?";
}

Family family_from_string(const std::string& s) {
  const auto key = normalise(s);
  for (const auto& n : kFamilies)
    if (key == n.key) return n.family;
  throw ConfigError("unknown strategy '" + s +
                    "' (expected indep, ft_prev, ft_s, ft_d, mt, pt or pt_ft)");
}

void Strategy::validate() const {
  const bool pt = family == Family::kPt || family == Family::kPtFt;
  if (pt && pretrained_source.empty())
    throw ConfigError("strategy " + to_string(family) + " needs a pretrained_source");
  if (!pt && !pretrained_source.empty())
    throw ConfigError("pretrained_source is only valid for pt and pt_ft");
  if (mt_k < 1) throw ConfigError("mt_k must be >= 1");
  if (!(ensemble_temperature > 0.0)) throw ConfigError("ensemble_temperature must be positive");
}

std::string Strategy::label() const {
  std::string out;
  for (const auto& n : kFamilies)
    if (n.family == family) out = n.label;
  if (family == Family::kMt) out += "(k=" + std::to_string(mt_k) + ")";
  if (ensemble) out += "+ens";
  return out;
}

void LearnerConfig::validate() const {
  strategy.validate();
  predictor.validate();
  if (search.n_trials < 1) throw ConfigError("n_trials must be >= 1");
  if (search.kind == SearchKind::kBhpo && search.n_trials < 2)
    throw ConfigError("bhpo needs n_trials >= 2");
  if (knn.k < 1 || knn.max_train < 1 || knn.max_val < 1) throw ConfigError("bad kNN options");
  if (frozen_num_updates < 0) throw ConfigError("frozen_num_updates must be >= 0");
  named_space(search.space).validate();
}

// ---------------------------------------------------------------------------
// Relatedness

namespace {

// With `leave_one_out`, train and val are the same rows and each query
// ignores itself.
double knn_core(const RowMatrix& train_features, const Split& train,
                const std::vector<std::size_t>& train_idx, const RowMatrix& val_features,
                const Split& val_split, const std::vector<std::size_t>& val_idx, TaskKind kind,
                int num_classes, int k, bool leave_one_out) {
  const std::size_t pool = train_idx.size() - (leave_one_out ? 1 : 0);
  if (train_idx.empty() || val_idx.empty() || pool == 0) return 0.0;
  auto normalised = [](const RowMatrix& m) {
    RowMatrix out = m;
    for (Index i = 0; i < out.rows(); ++i) {
      const double n = out.row(i).norm();
      if (n > 0) out.row(i) /= n;
    }
    return out;
  };
  const RowMatrix tf = normalised(train_features);
  const RowMatrix vf = normalised(val_features);
  const int kk = std::min<int>(k, static_cast<int>(pool));
  double correct = 0.0;
  constexpr Index kChunk = 256;
  std::vector<Index> order(static_cast<std::size_t>(tf.rows()));
  for (Index start = 0; start < vf.rows(); start += kChunk) {
    const Index len = std::min(kChunk, vf.rows() - start);
    RowMatrix sim = vf.middleRows(start, len) * tf.transpose();
    if (leave_one_out)
      for (Index r = 0; r < len; ++r) sim(r, start + r) = -std::numeric_limits<double>::infinity();
    for (Index r = 0; r < len; ++r) {
      std::iota(order.begin(), order.end(), 0);
      std::partial_sort(order.begin(), order.begin() + kk, order.end(), [&](Index a, Index b) {
        return sim(r, a) > sim(r, b) || (sim(r, a) == sim(r, b) && a < b);
      });
      const Example& truth = val_split[val_idx[static_cast<std::size_t>(start + r)]];
      if (kind == TaskKind::kSingleLabel) {
        std::vector<int> votes(static_cast<std::size_t>(num_classes), 0);
        int best = -1;
        for (int n = 0; n < kk; ++n) {
          const int label = train[train_idx[static_cast<std::size_t>(order[n])]].label;
          ++votes[static_cast<std::size_t>(label)];
          if (best < 0 || votes[label] > votes[best]) best = label;
        }
        correct += best == truth.label ? 1.0 : 0.0;
      } else {
        double agree = 0.0;
        for (int c = 0; c < num_classes; ++c) {
          double mean = 0.0;
          for (int n = 0; n < kk; ++n)
            mean += train[train_idx[static_cast<std::size_t>(order[n])]].labels[c];
          agree += ((mean / kk) >= 0.5) == (truth.labels[c] != 0) ? 1.0 : 0.0;
        }
        correct += agree / num_classes;
      }
    }
  }
  return correct / static_cast<double>(val_idx.size());
}

}  // namespace

double knn_accuracy(const RowMatrix& train_features, const Split& train,
                    const std::vector<std::size_t>& train_idx, const RowMatrix& val_features,
                    const Split& val_split, const std::vector<std::size_t>& val_idx,
                    TaskKind kind, int num_classes, int k) {
  return knn_core(train_features, train, train_idx, val_features, val_split, val_idx, kind,
                  num_classes, k, false);
}

double knn_loo_accuracy(const RowMatrix& features, const Split& split,
                        const std::vector<std::size_t>& idx, TaskKind kind, int num_classes,
                        int k) {
  return knn_core(features, split, idx, features, split, idx, kind, num_classes, k, true);
}

std::vector<RelatednessScore> relatedness_scores(const Task& task,
                                                 const std::vector<Candidate>& candidates,
                                                 const KnnOptions& options, int resolution,
                                                 std::uint64_t seed) {
  const Split& train = task.train();
  const std::size_t n = train.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  if (n <= options.loo_max) {
    std::mt19937_64 unused(0);
    const RowMatrix x = stack_inputs(train, order, PreprocessMode::kEval, resolution, unused, {});
    const InputShape shape = input_shape_for(task, resolution);
    std::vector<RelatednessScore> scores;
    for (const auto& c : candidates) {
      if (!c.model || !(c.model->input == shape)) continue;
      RelatednessScore s;
      s.source = c.id;
      s.score = knn_loo_accuracy(extract_features(*c.model, x), train, order, task.info().kind,
                                 task.info().num_classes, options.k);
      s.embed_flops = static_cast<Flops>(n) * backbone_forward_flops(c.model->arch, c.model->input);
      scores.push_back(std::move(s));
    }
    return scores;
  }
  std::size_t n_train, n_val;
  if (n >= options.max_train + options.max_val) {
    n_train = options.max_train;
    n_val = options.max_val;
  } else {
    n_train = std::min(options.max_train, std::max<std::size_t>(1, (2 * n + 2) / 3));
    n_val = std::min(options.max_val, n - std::min(n, n_train));
  }
  const std::vector<std::size_t> train_idx(order.begin(), order.begin() + n_train);
  const std::vector<std::size_t> val_idx(order.begin() + n_train,
                                         order.begin() + n_train + n_val);
  std::mt19937_64 unused(0);
  const RowMatrix tx = stack_inputs(train, train_idx, PreprocessMode::kEval, resolution, unused, {});
  const RowMatrix vx = stack_inputs(train, val_idx, PreprocessMode::kEval, resolution, unused, {});
  const InputShape shape = input_shape_for(task, resolution);

  std::vector<RelatednessScore> scores;
  for (const auto& c : candidates) {
    if (!c.model || !(c.model->input == shape)) continue;
    RelatednessScore s;
    s.source = c.id;
    s.score = knn_accuracy(extract_features(*c.model, tx), train, train_idx,
                           extract_features(*c.model, vx), train, val_idx, task.info().kind,
                           task.info().num_classes, options.k);
    s.embed_flops = static_cast<Flops>(n_train + n_val) *
                    backbone_forward_flops(c.model->arch, c.model->input);
    scores.push_back(std::move(s));
  }
  return scores;
}

// ---------------------------------------------------------------------------
// Initialisation

namespace {

// Position used to break ties: pretrained first, then stream order.
long rank_of(const MetaLearnerState& state, const std::string& id) {
  if (id == kPretrained) return -1;
  const auto it = std::find(state.dataset_refs.begin(), state.dataset_refs.end(), id);
  return it == state.dataset_refs.end() ? static_cast<long>(state.dataset_refs.size())
                                        : static_cast<long>(it - state.dataset_refs.begin());
}

// Scores sorted best first; ties resolved by earliest position.
std::vector<RelatednessScore> ranked(const MetaLearnerState& state,
                                     std::vector<RelatednessScore> scores) {
  std::stable_sort(scores.begin(), scores.end(), [&](const auto& a, const auto& b) {
    if (a.score != b.score) return a.score > b.score;
    return rank_of(state, a.source) < rank_of(state, b.source);
  });
  return scores;
}

const PredictorState* live_model(const MetaLearnerState& state, const std::string& id) {
  if (id == kPretrained) return state.pretrained ? &*state.pretrained : nullptr;
  const auto it = state.bank.find(id);
  return it == state.bank.end() ? nullptr : &it->second.model;
}

}  // namespace

InitChoice select_init(const Strategy& strategy, const MetaLearnerState& state,
                       const std::vector<RelatednessScore>& scores, const InputShape& input) {
  auto eligible = [&](const PredictorState* m) { return m && m->input == input; };
  auto from = [&](const std::string& id) {
    InitChoice c;
    c.init = *live_model(state, id);
    c.provenance = id;
    return c;
  };
  switch (strategy.family) {
    case Family::kIndep: return {};
    case Family::kPt:
      if (!state.pretrained) throw ConfigError("strategy pt needs a pretrained model");
      if (!eligible(&*state.pretrained)) return {};
      return from(kPretrained);
    case Family::kFtPrev:
      for (auto it = state.dataset_refs.rbegin(); it != state.dataset_refs.rend(); ++it)
        if (eligible(live_model(state, *it))) return from(*it);
      return {};
    case Family::kPtFt:
      if (!state.pretrained) throw ConfigError("strategy pt_ft needs a pretrained model");
      [[fallthrough]];
    case Family::kFtS:
    case Family::kFtD:
    case Family::kMt:
      for (const auto& s : ranked(state, scores)) {
        if (s.source == kPretrained && strategy.family != Family::kPtFt) continue;
        if (eligible(live_model(state, s.source))) return from(s.source);
      }
      return {};
  }
  return {};
}

// ---------------------------------------------------------------------------
// Ensembling

std::vector<double> ensemble_weights(const std::vector<double>& accuracies, double temperature) {
  if (accuracies.empty()) throw ConfigError("ensemble needs at least one member");
  const double m = *std::max_element(accuracies.begin(), accuracies.end());
  std::vector<double> w(accuracies.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::exp((accuracies[i] - m) / temperature);
    sum += w[i];
  }
  for (auto& v : w) v /= sum;
  return w;
}

RowMatrix ensemble_predict(const std::vector<EnsembleMember>& members, const std::string& head,
                           const RowMatrix& inputs, TaskKind kind, double temperature) {
  std::vector<double> acc;
  for (const auto& m : members) acc.push_back(m.val_accuracy);
  const auto w = ensemble_weights(acc, temperature);
  RowMatrix out;
  for (std::size_t i = 0; i < members.size(); ++i) {
    const RowMatrix p = predict_proba(*members[i].model, head, inputs, kind);
    if (i == 0) out = RowMatrix::Zero(p.rows(), p.cols());
    out += w[i] * p;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Per-task search

PredictorConfig trial_config(const PredictorConfig& base, const HParams& hparams,
                             std::int64_t num_updates, std::uint64_t seed) {
  PredictorConfig c = base;
  c.num_updates = num_updates;
  c.seed = seed;
  auto on = [](const HValue& v) {
    const auto s = as_string(v);
    if (s == "on" || s == "true" || s == "1") return true;
    if (s == "off" || s == "false" || s == "0") return false;
    throw ConfigError("expected on/off, got '" + s + "'");
  };
  for (const auto& [name, value] : hparams) {
    if (name == "learning_rate") {
      c.learning_rate = as_double(value);
    } else if (name == "label_smoothing") {
      c.label_smoothing = as_double(value);
    } else if (name == "schedule") {
      const auto s = as_string(value);
      if (s == "cosine") c.schedule = Schedule::kCosine;
      else if (s == "piecewise") c.schedule = Schedule::kPiecewiseConstant;
      else throw ConfigError("unknown schedule '" + s + "'");
    } else if (name == "batch_size") {
      c.batch_size = static_cast<int>(as_double(value));
    } else if (name == "architecture") {
      const auto a = as_string(value);
      if (a == "mlp") c.arch = base.arch.name == "mlp" ? base.arch : Architecture::mlp({64});
      else if (a == "mlp_deep") c.arch = Architecture::mlp({64, 64});
      else if (a == "small_conv")
        c.arch = base.arch.name == "small_conv" ? base.arch : Architecture::small_conv({16, 32});
      else throw ConfigError("unknown architecture '" + a + "'");
    } else if (name == "random_resized_crop") {
      c.augmentation.random_resized_crop = on(value);
    } else if (name == "horizontal_flip") {
      c.augmentation.horizontal_flip = on(value);
    } else if (name != "mt_lambda") {
      throw ConfigError("unknown hyper-parameter '" + name + "'");
    }
  }
  c.validate();
  return c;
}

TaskTrainResult train_task(const LearnerConfig& config, const CausalView& view,
                           MetaLearnerState& state, std::uint64_t seed) {
  const Task& task = view.current();
  const Strategy& strategy = config.strategy;
  const int r = config.predictor.input_resolution;
  const InputShape input = input_shape_for(task, r);
  TaskTrainResult result;

  std::vector<Candidate> candidates;
  switch (strategy.family) {
    case Family::kFtS:
      for (const auto& id : state.dataset_refs)
        if (auto it = state.frozen.find(id); it != state.frozen.end())
          candidates.push_back({id, &it->second});
      break;
    case Family::kPtFt:
      if (state.pretrained) candidates.push_back({kPretrained, &*state.pretrained});
      [[fallthrough]];
    case Family::kFtD:
    case Family::kMt:
      for (const auto& id : state.dataset_refs)
        if (auto it = state.bank.find(id); it != state.bank.end())
          candidates.push_back({id, &it->second.model});
      break;
    default: break;
  }
  std::vector<RelatednessScore> scores;
  if (!candidates.empty()) {
    scores = relatedness_scores(task, candidates, config.knn, r, derive_seed(seed, 0x4e4e));
    for (const auto& s : scores) result.embed_flops += s.embed_flops;
  }
  InitChoice choice = select_init(strategy, state, scores, input);
  result.provenance = choice.provenance;

  MultitaskSpec mt;
  const bool multitask = strategy.family == Family::kMt;
  if (multitask && choice.init) {
    const int features = choice.init->feature_dim();
    for (const auto& s : ranked(state, scores)) {
      if (static_cast<int>(mt.aux.size()) >= strategy.mt_k) break;
      const auto it = state.bank.find(s.source);
      if (it == state.bank.end()) continue;
      const Head& head = it->second.model.heads.at(s.source);
      if (head.weight.rows() != features || !(it->second.model.input == input)) continue;
      mt.aux.push_back({TrainTask::from(view.task(s.source)), head});
    }
  }

  const SearchSpace space = named_space(config.search.space, {multitask, task.has_images()});
  std::vector<std::optional<TrainReport>> reports(config.search.n_trials);
  const TrainTask target = TrainTask::from(task);
  Objective objective = [&](const HParams& h, std::size_t t) {
    PredictorConfig cfg = trial_config(config.predictor, h, config.predictor.num_updates,
                                       derive_seed(seed, 0x7217, t));
    if (choice.init) cfg.arch = choice.init->arch;
    const MultitaskSpec* spec = nullptr;
    MultitaskSpec weighted = mt;
    if (multitask && !mt.aux.empty()) {
      weighted.weight = as_double(h.at("mt_lambda"));
      spec = &weighted;
    }
    TrainReport rep = train(target, cfg, choice.init, spec);
    const Evaluation e{rep.val_error, rep.flops};
    reports[t] = std::move(rep);
    return e;
  };
  const std::uint64_t search_seed = derive_seed(seed, 0x5ea4);
  result.trials = config.search.kind == SearchKind::kBhpo
                      ? bhpo(space, config.search.n_trials, objective, search_seed,
                             {config.search.beta, 1024})
                      : random_search(space, config.search.n_trials, objective, search_seed);
  bool any = false;
  for (const auto& t : result.trials) {
    result.trial_flops += t.flops;
    any = any || !t.failed;
  }
  if (!any) throw TrainingError("every trial failed for task " + task.id());
  result.chosen = best_trial(result.trials).index;
  for (auto& rep : reports)
    if (rep) result.reports.push_back(std::move(*rep));
    else result.reports.emplace_back();
  const TrainReport& best = result.reports[result.chosen];
  result.val_error = best.val_error;

  if (strategy.ensemble) {
    std::vector<EnsembleMember> members;
    for (std::size_t t = 0; t < result.trials.size(); ++t)
      if (!result.trials[t].failed)
        members.push_back({&result.reports[t].final_state, 1.0 - result.trials[t].val_error});
    std::vector<double> acc;
    for (const auto& m : members) acc.push_back(m.val_accuracy);
    result.ensemble_weights = ensemble_weights(acc, strategy.ensemble_temperature);
    const RowMatrix scores_val = ensemble_predict(members, task.id(), eval_inputs(task.val(), r),
                                                  task.info().kind, strategy.ensemble_temperature);
    result.val_error = task_error(scores_val, task.val(), task.info().kind, task.info().num_classes);
  }

  if (strategy.family == Family::kFtS) {
    const std::int64_t updates =
        config.frozen_num_updates > 0 ? config.frozen_num_updates : config.predictor.num_updates;
    const PredictorConfig cfg =
        trial_config(config.predictor, {}, updates, derive_seed(seed, 0xf203));
    TrainReport frozen = train(target, cfg);
    result.frozen_flops = frozen.flops;
    state.frozen[task.id()] = std::move(frozen.final_state);
  }

  state.dataset_refs.push_back(task.id());
  state.bank[task.id()] = BankEntry{best.final_state, result.val_error, result.provenance};
  result.total_flops = result.trial_flops +
                       (config.charge_embedding_flops ? result.embed_flops : 0) +
                       (config.charge_frozen_models ? result.frozen_flops : 0);
  return result;
}

// ---------------------------------------------------------------------------
// StrategyLearner

StrategyLearner::StrategyLearner(LearnerConfig config) : config_(std::move(config)) {
  config_.validate();
  const Family f = config_.strategy.family;
  if (f == Family::kPt || f == Family::kPtFt) {
    try {
      pretrained_ = load_predictor(config_.strategy.pretrained_source);
    } catch (const DataError& e) {
      throw DataError("cannot load pretrained model " +
                      config_.strategy.pretrained_source.string() + ": " + e.what());
    }
  }
  reset();
}

void StrategyLearner::reset() {
  state_ = MetaLearnerState{};
  state_.pretrained = pretrained_;
  last_ = TaskTrainResult{};
}

TaskOutcome StrategyLearner::learn(const CausalView& view, std::uint64_t seed) {
  last_ = train_task(config_, view, state_, seed);
  const Task& task = view.current();
  TaskOutcome out;
  const Trial& chosen = last_.trials[last_.chosen];
  out.hparams = chosen.hparams;
  out.provenance = last_.provenance;
  out.flops = last_.total_flops;
  out.val_error = last_.val_error;
  out.learning_curve = last_.reports[last_.chosen].learning_curve;
  out.n_trials = last_.trials.size();

  const std::string id = task.id();
  const TaskKind kind = task.info().kind;
  const int classes = task.info().num_classes;
  const int r = config_.predictor.input_resolution;
  if (config_.strategy.ensemble) {
    auto models = std::make_shared<std::vector<PredictorState>>();
    std::vector<double> acc;
    for (std::size_t t = 0; t < last_.trials.size(); ++t)
      if (!last_.trials[t].failed) {
        models->push_back(last_.reports[t].final_state);
        acc.push_back(1.0 - last_.trials[t].val_error);
      }
    const double temp = config_.strategy.ensemble_temperature;
    out.error_on = [models, acc, temp, id, kind, classes, r](const Split& split) {
      std::vector<EnsembleMember> members;
      for (std::size_t i = 0; i < models->size(); ++i) members.push_back({&(*models)[i], acc[i]});
      return task_error(ensemble_predict(members, id, eval_inputs(split, r), kind, temp), split,
                        kind, classes);
    };
  } else {
    auto model = std::make_shared<PredictorState>(last_.reports[last_.chosen].final_state);
    out.error_on = [model, id, kind, classes, r](const Split& split) {
      return evaluate(*model, id, split, kind, classes, r);
    };
  }
  return out;
}

std::vector<std::uint8_t> StrategyLearner::save_state() const {
  json meta;
  meta["version"] = 1;
  meta["strategy"] = config_.strategy.label();
  meta["dataset_refs"] = state_.dataset_refs;
  json bank = json::array();
  for (const auto& [id, e] : state_.bank)
    bank.push_back({{"id", id}, {"val_error", e.val_error}, {"provenance", e.provenance}});
  meta["bank"] = bank;
  std::vector<Blob> blobs;
  const auto text = meta.dump();
  blobs.emplace_back("meta", std::vector<std::uint8_t>(text.begin(), text.end()));
  for (const auto& [id, e] : state_.bank) blobs.emplace_back("bank/" + id, serialize(e.model));
  for (const auto& [id, m] : state_.frozen) blobs.emplace_back("frozen/" + id, serialize(m));
  return encode_blobs(blobs);
}

void StrategyLearner::load_state(std::span<const std::uint8_t> bytes) {
  const auto blobs = decode_blobs(bytes);
  if (blobs.empty() || blobs.front().first != "meta")
    throw DataError("learner state has no metadata");
  json meta;
  try {
    const auto& m = blobs.front().second;
    meta = json::parse(std::string(m.begin(), m.end()));
  } catch (const json::exception& e) {
    throw DataError(std::string("corrupt learner state: ") + e.what());
  }
  if (meta.value("version", 0) != 1) throw DataError("unsupported learner state version");
  if (meta.value("strategy", std::string()) != config_.strategy.label())
    throw ConfigError("checkpoint was written by strategy " + meta.value("strategy", std::string()) +
                      ", not " + config_.strategy.label());
  MetaLearnerState s;
  s.pretrained = pretrained_;
  s.dataset_refs = meta.at("dataset_refs").get<std::vector<std::string>>();
  std::map<std::string, const std::vector<std::uint8_t>*> by_name;
  for (const auto& [name, data] : blobs) by_name[name] = &data;
  for (const auto& e : meta.at("bank")) {
    const auto id = e.at("id").get<std::string>();
    const auto it = by_name.find("bank/" + id);
    if (it == by_name.end()) throw DataError("learner state lacks the model for " + id);
    s.bank[id] = BankEntry{deserialize_predictor(*it->second), e.at("val_error").get<double>(),
                           e.at("provenance").get<std::string>()};
  }
  for (const auto& [name, data] : blobs)
    if (name.rfind("frozen/", 0) == 0) s.frozen[name.substr(7)] = deserialize_predictor(data);
  state_ = std::move(s);
}

}  // namespace taskstream
