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

// Optimisation schedule, preprocessing, metrics, FLOP model and the trainer.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "taskstream/predictor.hpp"

namespace taskstream {

using Eigen::Index;

void PredictorConfig::validate() const {
  if (!(warmup_fraction > 0.0 && warmup_fraction < 1.0))
    throw ConfigError("warmup_fraction must lie in (0, 1)");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(final_learning_rate >= 0.0)) throw ConfigError("final_learning_rate must be >= 0");
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0))
    throw ConfigError("label_smoothing must lie in [0, 1)");
  if (num_updates < 0) throw ConfigError("num_updates must be >= 0");
  if (max_batch < 16) throw ConfigError("max_batch must be >= 16");
  if (!(batch_fraction > 0.0)) throw ConfigError("batch_fraction must be positive");
  if (batch_size && *batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (input_resolution < 1) throw ConfigError("input_resolution must be >= 1");
  if (eval_interval < 0) throw ConfigError("eval_interval must be >= 0");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must lie in [0, 1)");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
}

// ---------------------------------------------------------------------------
// Schedule

int compute_batch_size(std::size_t dataset_size, int max_batch, double fraction) {
  if (dataset_size < 1 || max_batch < 16 || !(fraction > 0.0))
    throw ConfigError("compute_batch_size: need D >= 1, B >= 16 and p > 0");
  const double pd = fraction * static_cast<double>(dataset_size);
  if (pd < 16.0) return 16;
  const int e = static_cast<int>(std::floor(std::log2(pd)));
  const double pow2 = std::ldexp(1.0, e);
  return static_cast<int>(std::min<double>(max_batch, std::max(16.0, pow2)));
}

int warmup_steps(const PredictorConfig& config) {
  if (config.num_updates <= 0) return 0;
  return static_cast<int>(std::max<double>(
      1.0, std::ceil(config.warmup_fraction * static_cast<double>(config.num_updates))));
}

double learning_rate_at(const PredictorConfig& config, std::int64_t step) {
  const double peak = config.learning_rate;
  const double floor = config.final_learning_rate;
  const std::int64_t n = config.num_updates;
  const std::int64_t w = warmup_steps(config);
  if (step < w) return floor + (peak - floor) * static_cast<double>(step) / w;
  if (config.schedule == Schedule::kPiecewiseConstant) {
    if (step >= (3 * n) / 4) return peak * 0.01;
    if (step >= n / 2) return peak * 0.1;
    return peak;
  }
  if (n <= w) return peak;
  const double progress =
      std::clamp(static_cast<double>(step - w) / static_cast<double>(n - w), 0.0, 1.0);
  return floor + (peak - floor) * 0.5 * (1.0 + std::cos(M_PI * progress));
}

// ---------------------------------------------------------------------------
// Preprocessing

namespace {

struct Crop {
  int x0, y0, w, h;
};

Crop central_square(int width, int height) {
  const int s = std::min(width, height);
  return {(width - s) / 2, (height - s) / 2, s, s};
}

std::vector<float> resize_crop(const Example& ex, const Crop& c, int r, bool flip) {
  const int ch = ex.channels;
  std::vector<float> out(static_cast<std::size_t>(r) * r * ch);
  const double sy = static_cast<double>(c.h) / r;
  const double sx = static_cast<double>(c.w) / r;
  for (int oy = 0; oy < r; ++oy) {
    const double fy = std::clamp(c.y0 + (oy + 0.5) * sy - 0.5, double(c.y0), double(c.y0 + c.h - 1));
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, c.y0 + c.h - 1);
    const double ty = fy - y0;
    for (int ox = 0; ox < r; ++ox) {
      const double fx =
          std::clamp(c.x0 + (ox + 0.5) * sx - 0.5, double(c.x0), double(c.x0 + c.w - 1));
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, c.x0 + c.w - 1);
      const double tx = fx - x0;
      const int dx = flip ? r - 1 - ox : ox;
      for (int k = 0; k < ch; ++k) {
        auto at = [&](int y, int x) {
          return static_cast<double>(ex.input[(static_cast<std::size_t>(y) * ex.width + x) * ch + k]);
        };
        const double v = (1 - ty) * ((1 - tx) * at(y0, x0) + tx * at(y0, x1)) +
                         ty * ((1 - tx) * at(y1, x0) + tx * at(y1, x1));
        out[(static_cast<std::size_t>(oy) * r + dx) * ch + k] = static_cast<float>(v);
      }
    }
  }
  return out;
}

Crop random_resized_crop(int width, int height, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double area = static_cast<double>(width) * height;
  const double log_lo = std::log(3.0 / 4.0);
  const double log_hi = std::log(4.0 / 3.0);
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double target = area * (0.08 + 0.92 * unit(rng));
    const double ratio = std::exp(log_lo + (log_hi - log_lo) * unit(rng));
    const int cw = static_cast<int>(std::lround(std::sqrt(target * ratio)));
    const int chh = static_cast<int>(std::lround(std::sqrt(target / ratio)));
    if (cw >= 1 && chh >= 1 && cw <= width && chh <= height) {
      const int x0 = std::uniform_int_distribution<int>(0, width - cw)(rng);
      const int y0 = std::uniform_int_distribution<int>(0, height - chh)(rng);
      return {x0, y0, cw, chh};
    }
  }
  return central_square(width, height);
}

}  // namespace

std::vector<float> preprocess(const Example& example, PreprocessMode mode, int resolution,
                              std::mt19937_64& rng, const Augmentation& augmentation) {
  if (!example.is_image()) return example.input;
  if (example.width < 1 || example.channels < 1)
    throw DataError("preprocess: malformed image example");
  if (mode == PreprocessMode::kEval)
    return resize_crop(example, central_square(example.width, example.height), resolution, false);
  const Crop crop = augmentation.random_resized_crop
                        ? random_resized_crop(example.width, example.height, rng)
                        : central_square(example.width, example.height);
  bool flip = false;
  if (augmentation.horizontal_flip) flip = std::uniform_real_distribution<double>(0, 1)(rng) < 0.5;
  return resize_crop(example, crop, resolution, flip);
}

InputShape input_shape_for(const Task& task, int resolution) {
  if (task.has_images()) return {resolution, resolution, task.input_channels(), 0};
  return {0, 0, 0, task.input_dim()};
}

namespace {

InputShape shape_of(const Split& split, int resolution) {
  if (split.empty()) throw DataError("empty split");
  const Example& e = split.front();
  if (e.is_image()) return {resolution, resolution, e.channels, 0};
  return {0, 0, 0, static_cast<int>(e.input.size())};
}

}  // namespace

RowMatrix stack_inputs(const Split& split, const std::vector<std::size_t>& indices,
                       PreprocessMode mode, int resolution, std::mt19937_64& rng,
                       const Augmentation& augmentation) {
  const InputShape shape = shape_of(split, resolution);
  RowMatrix x(static_cast<Index>(indices.size()), shape.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto v = preprocess(split[indices[r]], mode, resolution, rng, augmentation);
    if (static_cast<Index>(v.size()) != x.cols())
      throw DataError("example " + std::to_string(indices[r]) + " has an inconsistent shape");
    x.row(static_cast<Index>(r)) =
        Eigen::Map<const Eigen::RowVectorXf>(v.data(), x.cols()).cast<double>();
  }
  return x;
}

RowMatrix eval_inputs(const Split& split, int resolution) {
  std::vector<std::size_t> idx(split.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 unused(0);
  return stack_inputs(split, idx, PreprocessMode::kEval, resolution, unused, {});
}

// ---------------------------------------------------------------------------
// Metrics

double accuracy(const RowMatrix& scores, const std::vector<int>& labels) {
  if (scores.rows() == 0) return 0.0;
  std::size_t correct = 0;
  for (Index i = 0; i < scores.rows(); ++i) {
    Index best;
    scores.row(i).maxCoeff(&best);
    if (best == labels[static_cast<std::size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(scores.rows());
}

double average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  const auto positives = static_cast<std::size_t>(std::count_if(
      labels.begin(), labels.end(), [](std::uint8_t v) { return v != 0; }));
  if (positives == 0) return 0.0;
  // Tied scores form one threshold: precision is taken at the end of the group.
  double ap = 0.0;
  std::size_t seen = 0, hits = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::size_t group_hits = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      group_hits += labels[order[j]] != 0;
      ++j;
    }
    seen += j - i;
    hits += group_hits;
    ap += static_cast<double>(group_hits) * static_cast<double>(hits) / static_cast<double>(seen);
    i = j;
  }
  return ap / static_cast<double>(positives);
}

double mean_average_precision(const RowMatrix& scores, const RowMatrix& labels) {
  double sum = 0.0;
  int counted = 0;
  for (Index c = 0; c < scores.cols(); ++c) {
    std::vector<double> s(static_cast<std::size_t>(scores.rows()));
    std::vector<std::uint8_t> y(s.size());
    bool any = false;
    for (Index i = 0; i < scores.rows(); ++i) {
      s[i] = scores(i, c);
      y[i] = labels(i, c) > 0.5;
      any = any || y[i];
    }
    if (!any) continue;
    sum += average_precision(s, y);
    ++counted;
  }
  return counted == 0 ? 1.0 : sum / counted;
}

double task_error(const RowMatrix& scores, const Split& split, TaskKind kind, int num_classes) {
  std::vector<std::size_t> idx(split.size());
  std::iota(idx.begin(), idx.end(), 0);
  const Targets t = targets_for(split, idx, kind, num_classes);
  if (kind == TaskKind::kSingleLabel) return 1.0 - accuracy(scores, t.labels);
  return 1.0 - mean_average_precision(scores, t.binary);
}

double evaluate(const PredictorState& state, const std::string& head, const Split& split,
                TaskKind kind, int num_classes, int resolution) {
  if (!state.heads.count(head)) throw TrainingError("predictor has no head for task " + head);
  const RowMatrix x = eval_inputs(split, resolution);
  return task_error(predict_proba(state, head, x, kind), split, kind, num_classes);
}

// ---------------------------------------------------------------------------
// FLOP model

FlopCounts& FlopCounts::operator+=(const FlopCounts& o) {
  train_steps += o.train_steps;
  batch += o.batch;
  eval_examples += o.eval_examples;
  feature_examples += o.feature_examples;
  return *this;
}

Flops backbone_forward_flops(const Architecture& arch, const InputShape& input) {
  Flops total = 0;
  bool spatial = input.image();
  std::uint64_t h = spatial ? input.height : 1, w = spatial ? input.width : 1;
  std::uint64_t c = spatial ? input.channels : input.dim;
  for (const auto& l : arch.layers) {
    const std::uint64_t extra =
        (l.activation != Activation::kNone ? 1u : 0u) + (l.batchnorm ? 4u : 0u);
    switch (l.kind) {
      case LayerKind::kDense: {
        const std::uint64_t in = h * w * c, out = l.width;
        total += 2 * in * out + out + extra * out;
        spatial = false;
        h = w = 1;
        c = out;
        break;
      }
      case LayerKind::kConv: {
        const std::uint64_t k = l.kernel, pad = k / 2, s = l.stride;
        const std::uint64_t ho = (h + 2 * pad - k) / s + 1, wo = (w + 2 * pad - k) / s + 1;
        const std::uint64_t out = l.width;
        total += ho * wo * (2 * k * k * c * out + out + extra * out);
        h = ho;
        w = wo;
        c = out;
        break;
      }
      case LayerKind::kGlobalAvgPool:
        total += h * w * c;
        spatial = false;
        h = w = 1;
        break;
    }
  }
  return total;
}

Flops forward_flops(const ModelShape& shape) {
  PredictorState probe;
  probe.arch = shape.arch;
  probe.input = shape.input;
  const std::uint64_t f = static_cast<std::uint64_t>(probe.feature_dim());
  const std::uint64_t k = static_cast<std::uint64_t>(shape.num_classes);
  return backbone_forward_flops(shape.arch, shape.input) + 2 * f * k + k;
}

Flops flop_estimate(const ModelShape& shape, const FlopCounts& counts) {
  const Flops fwd = forward_flops(shape);
  const Flops feat = backbone_forward_flops(shape.arch, shape.input);
  return counts.train_steps * counts.batch * 3 * fwd + counts.eval_examples * fwd +
         counts.feature_examples * feat;
}

// ---------------------------------------------------------------------------
// Training

TrainTask TrainTask::from(const Task& task) {
  return {task.id(), task.info().kind, task.info().num_classes, &task.train(), &task.val()};
}

namespace {

class BatchSampler {
 public:
  BatchSampler(std::size_t n, std::uint64_t seed) : order_(n), rng_(seed) {
    std::iota(order_.begin(), order_.end(), 0);
    std::shuffle(order_.begin(), order_.end(), rng_);
  }
  std::vector<std::size_t> next(std::size_t batch) {
    std::vector<std::size_t> out;
    out.reserve(batch);
    while (out.size() < batch) {
      if (pos_ == order_.size()) {
        std::shuffle(order_.begin(), order_.end(), rng_);
        pos_ = 0;
      }
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  std::vector<std::size_t> order_;
  std::mt19937_64 rng_;
  std::size_t pos_ = 0;
};

bool decays(const std::string& name) {
  return name.size() >= 7 && name.compare(name.size() - 7, 7, ".weight") == 0;
}

void sgd_step(Eigen::MatrixXd& param, const Eigen::MatrixXd& grad, Eigen::MatrixXd& velocity,
              double lr, double momentum, double weight_decay) {
  Eigen::MatrixXd g = grad;
  if (weight_decay > 0.0) g += weight_decay * param;
  if (velocity.size() == 0) velocity = Eigen::MatrixXd::Zero(param.rows(), param.cols());
  velocity = momentum * velocity + g;
  param -= lr * (g + momentum * velocity);
}

void check_head(const Head& h, int features, int classes, const std::string& id) {
  if (h.weight.rows() != features || h.weight.cols() != classes || h.bias.cols() != classes)
    throw TrainingError("head for task " + id + " has incompatible shape");
}

}  // namespace

TrainReport train(const TrainTask& task, const PredictorConfig& config,
                  const std::optional<PredictorState>& init, const MultitaskSpec* multitask) {
  config.validate();
  if (!task.train || !task.val || task.train->empty() || task.val->empty())
    throw DataError("task " + task.id + ": train and validation splits must be nonempty");
  const auto start = std::chrono::steady_clock::now();
  const int r = config.input_resolution;
  const InputShape shape = shape_of(*task.train, r);

  TrainReport report;
  PredictorState& state = report.final_state;
  if (init) {
    if (!(init->arch == config.arch) || !(init->input == shape))
      throw TrainingError("task " + task.id +
                          ": initial state does not match the configured architecture/input");
    state = *init;
    state.heads.clear();
  } else {
    state = init_backbone(config.arch, shape, derive_seed(config.seed, 1));
  }
  const int features = state.feature_dim();
  state.heads[task.id] = init_head(features, task.num_classes, derive_seed(config.seed, 4));
  std::vector<const AuxiliaryTask*> aux;
  if (multitask) {
    for (const auto& a : multitask->aux) {
      if (a.task.id == task.id) throw TrainingError("auxiliary task duplicates the current task");
      if (!a.task.train || a.task.train->empty())
        throw DataError("auxiliary task " + a.task.id + " has no training data");
      if (!(shape_of(*a.task.train, r) == shape))
        throw TrainingError("auxiliary task " + a.task.id + " has an incompatible input shape");
      check_head(a.head, features, a.task.num_classes, a.task.id);
      state.heads[a.task.id] = a.head;
      aux.push_back(&a);
    }
  }

  const std::int64_t n = config.num_updates;
  const int batch = config.batch_size.value_or(
      compute_batch_size(task.train->size(), config.max_batch, config.batch_fraction));
  report.batch_size = batch;

  std::vector<std::int64_t> eval_steps;
  if (n > 0) {
    eval_steps.push_back(0);
    if (config.eval_interval > 0)
      for (std::int64_t s = config.eval_interval; s < n; s += config.eval_interval)
        eval_steps.push_back(s);
    eval_steps.push_back(n);
  }
  RowMatrix val_x;
  auto eval_now = [&](std::int64_t step) {
    if (val_x.size() == 0) val_x = eval_inputs(*task.val, r);
    const double err = task_error(predict_proba(state, task.id, val_x, task.kind), *task.val,
                                  task.kind, task.num_classes);
    report.learning_curve.push_back({step, 1.0 - err});
    return err;
  };

  BatchSampler sampler(task.train->size(), derive_seed(config.seed, 2));
  std::mt19937_64 aug_rng(derive_seed(config.seed, 3));
  std::vector<BatchSampler> aux_samplers;
  for (std::size_t k = 0; k < aux.size(); ++k)
    aux_samplers.emplace_back(aux[k]->task.train->size(), derive_seed(config.seed, 10 + k));
  std::map<std::string, Eigen::MatrixXd> vel;
  std::map<std::string, Head> head_vel;

  std::size_t next_eval = 0;
  for (std::int64_t t = 0; t < n; ++t) {
    if (next_eval < eval_steps.size() && eval_steps[next_eval] == t) {
      eval_now(t);
      ++next_eval;
    }
    const auto idx = sampler.next(static_cast<std::size_t>(batch));
    const RowMatrix x =
        stack_inputs(*task.train, idx, PreprocessMode::kTrain, r, aug_rng, config.augmentation);
    const Targets y = targets_for(*task.train, idx, task.kind, task.num_classes);
    LossAndGradient lg = loss_and_gradient(state, task.id, x, y, config.label_smoothing,
                                           NormMode::kTrain, &state);
    for (std::size_t k = 0; k < aux.size(); ++k) {
      const auto& a = aux[k]->task;
      const auto aidx = aux_samplers[k].next(static_cast<std::size_t>(multitask->aux_batch));
      const RowMatrix ax =
          stack_inputs(*a.train, aidx, PreprocessMode::kTrain, r, aug_rng, config.augmentation);
      const Targets ay = targets_for(*a.train, aidx, a.kind, a.num_classes);
      const LossAndGradient al = loss_and_gradient(state, a.id, ax, ay, config.label_smoothing,
                                                   NormMode::kTrainFrozen, nullptr);
      lg.loss += multitask->weight * al.loss;
      lg.gradients.add_scaled(al.gradients, multitask->weight);
    }
    if (!std::isfinite(lg.loss)) {
      std::ostringstream msg;
      msg << "task " << task.id << ": non-finite loss at step " << t
          << " (learning_rate=" << config.learning_rate
          << ", label_smoothing=" << config.label_smoothing << ", batch=" << batch << ")";
      throw TrainingError(msg.str());
    }
    const double lr = learning_rate_at(config, t);
    for (auto& [name, g] : lg.gradients.params)
      sgd_step(state.params.at(name), g, vel[name], lr, config.momentum,
               decays(name) ? config.weight_decay : 0.0);
    for (auto& [id, g] : lg.gradients.heads) {
      Head& h = state.heads.at(id);
      Head& v = head_vel[id];
      sgd_step(h.weight, g.weight, v.weight, lr, config.momentum, config.weight_decay);
      sgd_step(h.bias, g.bias, v.bias, lr, config.momentum, 0.0);
    }
  }
  if (n > 0) {
    report.val_error = eval_now(n);
  } else {
    val_x = eval_inputs(*task.val, r);
    report.val_error = task_error(predict_proba(state, task.id, val_x, task.kind), *task.val,
                                  task.kind, task.num_classes);
  }

  const ModelShape main_shape{config.arch, shape, task.num_classes};
  FlopCounts counts;
  counts.train_steps = static_cast<std::uint64_t>(n);
  counts.batch = static_cast<std::uint64_t>(batch);
  counts.eval_examples = report.learning_curve.size() * task.val->size();
  report.flops = flop_estimate(main_shape, counts);
  for (const auto* a : aux) {
    FlopCounts ac;
    ac.train_steps = static_cast<std::uint64_t>(n);
    ac.batch = static_cast<std::uint64_t>(multitask->aux_batch);
    report.flops += flop_estimate({config.arch, shape, a->task.num_classes}, ac);
  }
  for (const auto* a : aux) state.heads.erase(a->task.id);
  report.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace taskstream
