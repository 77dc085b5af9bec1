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

#ifndef TASKSTREAM_PREDICTOR_HPP_
#define TASKSTREAM_PREDICTOR_HPP_

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "taskstream/common.hpp"
#include "taskstream/stream.hpp"

namespace taskstream {

// Activations are stored one example (or one spatial position) per row, so
// a row-major layout keeps channels contiguous.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class LayerKind { kDense, kConv, kGlobalAvgPool };
enum class Activation { kNone, kRelu, kTanh };

struct LayerSpec {
  LayerKind kind = LayerKind::kDense;
  int width = 0;  // dense units or conv output channels
  int kernel = 3;
  int stride = 1;
  Activation activation = Activation::kRelu;
  bool batchnorm = false;

  bool operator==(const LayerSpec&) const = default;
};

// Backbone layers; every task adds its own dense head on top.
struct Architecture {
  std::string name;
  std::vector<LayerSpec> layers;

  static Architecture mlp(const std::vector<int>& widths,
                          Activation activation = Activation::kRelu,
                          bool batchnorm = false);
  // Stride-2 3x3 convolutions followed by global average pooling.
  static Architecture small_conv(const std::vector<int>& channels, bool batchnorm = false);

  bool operator==(const Architecture&) const = default;
};

std::string to_json_string(const Architecture& arch);
Architecture architecture_from_json_string(const std::string& text);

struct InputShape {
  int height = 0;
  int width = 0;
  int channels = 0;
  int dim = 0;  // feature-vector length when not an image

  bool image() const noexcept { return height > 0; }
  int size() const noexcept { return image() ? height * width * channels : dim; }
  bool operator==(const InputShape&) const = default;
};

enum class Schedule { kCosine, kPiecewiseConstant };

struct Augmentation {
  bool random_resized_crop = true;
  bool horizontal_flip = true;
};

struct PredictorConfig {
  Architecture arch = Architecture::mlp({64});
  int input_resolution = 64;
  int max_batch = 512;
  double batch_fraction = 0.0025;
  std::optional<int> batch_size;  // overrides the heuristic when set
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double warmup_fraction = 0.05;
  std::int64_t num_updates = 1000;
  double learning_rate = 0.01;
  double final_learning_rate = 0.0;
  double label_smoothing = 0.0;
  Schedule schedule = Schedule::kCosine;
  Augmentation augmentation;
  std::int64_t eval_interval = 0;  // 0: evaluate at the first and last step only
  std::uint64_t seed = 0;

  void validate() const;
};

struct Head {
  Eigen::MatrixXd weight;  // features x classes
  Eigen::MatrixXd bias;    // 1 x classes
};

// Network parameters. Backbone arrays are keyed "<layer>.<name>"; heads are
// keyed by task id.
struct PredictorState {
  Architecture arch;
  InputShape input;
  std::map<std::string, Eigen::MatrixXd> params;
  std::map<std::string, Head> heads;

  int feature_dim() const;
  std::size_t num_parameters() const;
};

// Randomly initialised backbone with no heads.
PredictorState init_backbone(const Architecture& arch, const InputShape& input,
                             std::uint64_t seed);
Head init_head(int features, int classes, std::uint64_t seed);

// Versioned binary container: "TSPS", version, architecture JSON, input
// shape, then named arrays in key order.
std::vector<std::uint8_t> serialize(const PredictorState& state);
PredictorState deserialize_predictor(std::span<const std::uint8_t> bytes);
void save_predictor(const PredictorState& state, const std::filesystem::path& path);
PredictorState load_predictor(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Batch size heuristic and learning-rate schedule

// min(B, max(16, 2^floor(log2(p * D)))).
int compute_batch_size(std::size_t dataset_size, int max_batch, double fraction);

int warmup_steps(const PredictorConfig& config);
// Learning rate applied by update `step` (0-based).
double learning_rate_at(const PredictorConfig& config, std::int64_t step);

// ---------------------------------------------------------------------------
// Preprocessing

enum class PreprocessMode { kTrain, kEval };

// Images: train mode takes a random resized crop then a random flip; eval
// mode takes the central min(w,h) square. Both resize to r x r (bilinear).
// Feature vectors pass through unchanged.
std::vector<float> preprocess(const Example& example, PreprocessMode mode, int resolution,
                              std::mt19937_64& rng, const Augmentation& augmentation = {});

InputShape input_shape_for(const Task& task, int resolution);

// Stacks preprocessed inputs, one row per example.
RowMatrix stack_inputs(const Split& split, const std::vector<std::size_t>& indices,
                       PreprocessMode mode, int resolution, std::mt19937_64& rng,
                       const Augmentation& augmentation);
RowMatrix eval_inputs(const Split& split, int resolution);

// ---------------------------------------------------------------------------
// Forward / backward

enum class NormMode {
  kEval,         // running statistics
  kTrain,        // batch statistics, running statistics updated
  kTrainFrozen,  // batch statistics, running statistics untouched
};

struct Targets {
  TaskKind kind = TaskKind::kSingleLabel;
  int num_classes = 2;
  std::vector<int> labels;  // single label
  RowMatrix binary;         // multi label, N x classes
};

Targets targets_for(const Split& split, const std::vector<std::size_t>& indices,
                    TaskKind kind, int num_classes);

struct Gradients {
  std::map<std::string, Eigen::MatrixXd> params;
  std::map<std::string, Head> heads;

  void add_scaled(const Gradients& other, double scale);
};

struct LossAndGradient {
  double loss = 0.0;
  Gradients gradients;
};

// Penultimate activations.
RowMatrix forward_features(const PredictorState& state, const RowMatrix& inputs,
                           NormMode mode = NormMode::kEval,
                           PredictorState* stats = nullptr);
RowMatrix forward_logits(const PredictorState& state, const std::string& head,
                         const RowMatrix& inputs);

// Mean data loss of one mini-batch (label-smoothed softmax cross-entropy or
// per-class sigmoid cross-entropy) and its gradient. Weight decay is applied
// by the optimizer, not here. With NormMode::kTrain the running statistics
// of `stats` are updated.
LossAndGradient loss_and_gradient(const PredictorState& state, const std::string& head,
                                  const RowMatrix& inputs, const Targets& targets,
                                  double label_smoothing, NormMode mode = NormMode::kTrain,
                                  PredictorState* stats = nullptr);

double data_loss(const PredictorState& state, const std::string& head,
                 const RowMatrix& inputs, const Targets& targets, double label_smoothing,
                 NormMode mode = NormMode::kTrain);

// Class probabilities (softmax) or per-class scores (sigmoid).
RowMatrix predict_proba(const PredictorState& state, const std::string& head,
                        const RowMatrix& inputs, TaskKind kind);

// ---------------------------------------------------------------------------
// Metrics

double accuracy(const RowMatrix& scores, const std::vector<int>& labels);
// Average precision of one class over the full score ranking; tied scores
// share the precision of their threshold.
double average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels);
// Mean of per-class AP over classes with at least one positive.
double mean_average_precision(const RowMatrix& scores, const RowMatrix& labels);
// 1 - accuracy or 1 - mAP.
double task_error(const RowMatrix& scores, const Split& split, TaskKind kind, int num_classes);

double evaluate(const PredictorState& state, const std::string& head, const Split& split,
                TaskKind kind, int num_classes, int resolution = 64);

RowMatrix extract_features(const PredictorState& state, const RowMatrix& inputs);

// ---------------------------------------------------------------------------
// FLOP model

struct ModelShape {
  Architecture arch;
  InputShape input;
  int num_classes = 2;
};

struct FlopCounts {
  std::uint64_t train_steps = 0;
  std::uint64_t batch = 0;
  std::uint64_t eval_examples = 0;
  std::uint64_t feature_examples = 0;

  FlopCounts& operator+=(const FlopCounts& o);
};

// Per-example forward cost of the backbone alone and with the head.
Flops backbone_forward_flops(const Architecture& arch, const InputShape& input);
Flops forward_flops(const ModelShape& shape);

// training: steps * batch * 3 * forward; eval at forward rate; feature
// extraction at backbone rate.
Flops flop_estimate(const ModelShape& shape, const FlopCounts& counts);

// ---------------------------------------------------------------------------
// Training

struct CurvePoint {
  std::int64_t step = 0;
  double accuracy = 0.0;
};

struct TrainReport {
  PredictorState final_state;
  double val_error = 1.0;
  Flops flops = 0;
  std::vector<CurvePoint> learning_curve;
  double wall_time = 0.0;
  int batch_size = 0;
};

// A task as seen by the trainer.
struct TrainTask {
  std::string id;
  TaskKind kind = TaskKind::kSingleLabel;
  int num_classes = 2;
  const Split* train = nullptr;
  const Split* val = nullptr;

  static TrainTask from(const Task& task);
};

// Auxiliary tasks co-trained with a fixed batch size; their losses are
// scaled by `weight` and their batches never update normalization
// statistics.
struct AuxiliaryTask {
  TrainTask task;
  Head head;
};

struct MultitaskSpec {
  std::vector<AuxiliaryTask> aux;
  double weight = 0.0;
  int aux_batch = 64;
};

// Trains a head for `task` (and the backbone) with SGD + Nesterov momentum.
// `init` supplies the backbone; its heads are dropped and a fresh head is
// created for `task`.
TrainReport train(const TrainTask& task, const PredictorConfig& config,
                  const std::optional<PredictorState>& init = std::nullopt,
                  const MultitaskSpec* multitask = nullptr);

}  // namespace taskstream

#endif  // TASKSTREAM_PREDICTOR_HPP_
