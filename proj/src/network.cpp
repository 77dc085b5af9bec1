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

// Backbone/head forward and backward passes, initialisation, and the
// predictor state container.

#include <cmath>
#include <cstring>
#include <random>

#include "json.hpp"
#include "taskstream/predictor.hpp"
#include "taskstream/task_io.hpp"

namespace taskstream {

using Eigen::Index;
using Eigen::MatrixXd;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Architecture

Architecture Architecture::mlp(const std::vector<int>& widths, Activation activation,
                               bool batchnorm) {
  Architecture a;
  a.name = "mlp";
  for (int w : widths) a.layers.push_back({LayerKind::kDense, w, 0, 1, activation, batchnorm});
  return a;
}

Architecture Architecture::small_conv(const std::vector<int>& channels, bool batchnorm) {
  Architecture a;
  a.name = "small_conv";
  for (int c : channels)
    a.layers.push_back({LayerKind::kConv, c, 3, 2, Activation::kRelu, batchnorm});
  a.layers.push_back({LayerKind::kGlobalAvgPool, 0, 0, 1, Activation::kNone, false});
  return a;
}

namespace {

const char* kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::kDense: return "dense";
    case LayerKind::kConv: return "conv";
    case LayerKind::kGlobalAvgPool: return "gap";
  }
  return "?";
}

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::kNone: return "none";
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
  }
  return "?";
}

}  // namespace

std::string to_json_string(const Architecture& arch) {
  json layers = json::array();
  for (const auto& l : arch.layers) {
    layers.push_back({{"kind", kind_name(l.kind)},
                      {"width", l.width},
                      {"kernel", l.kernel},
                      {"stride", l.stride},
                      {"activation", activation_name(l.activation)},
                      {"batchnorm", l.batchnorm}});
  }
  return json{{"name", arch.name}, {"layers", layers}}.dump();
}

Architecture architecture_from_json_string(const std::string& text) {
  try {
    const json j = json::parse(text);
    Architecture a;
    a.name = j.value("name", "custom");
    for (const auto& l : j.at("layers")) {
      LayerSpec s;
      const auto kind = l.at("kind").get<std::string>();
      if (kind == "dense") s.kind = LayerKind::kDense;
      else if (kind == "conv") s.kind = LayerKind::kConv;
      else if (kind == "gap") s.kind = LayerKind::kGlobalAvgPool;
      else throw ConfigError("unknown layer kind '" + kind + "'");
      s.width = l.value("width", 0);
      s.kernel = l.value("kernel", 3);
      s.stride = l.value("stride", 1);
      const auto act = l.value("activation", std::string("relu"));
      if (act == "relu") s.activation = Activation::kRelu;
      else if (act == "tanh") s.activation = Activation::kTanh;
      else if (act == "none") s.activation = Activation::kNone;
      else throw ConfigError("unknown activation '" + act + "'");
      s.batchnorm = l.value("batchnorm", false);
      a.layers.push_back(s);
    }
    return a;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad architecture: ") + e.what());
  }
}

namespace {

struct Shape {
  bool spatial = false;
  int h = 1, w = 1, c = 0;
  int features() const { return spatial ? h * w * c : c; }
};

std::vector<Shape> layer_shapes(const Architecture& arch, const InputShape& input) {
  std::vector<Shape> shapes;
  shapes.push_back(input.image() ? Shape{true, input.height, input.width, input.channels}
                                 : Shape{false, 1, 1, input.dim});
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const auto& l = arch.layers[i];
    const Shape& in = shapes.back();
    switch (l.kind) {
      case LayerKind::kDense:
        if (l.width < 1) throw ConfigError("dense layer needs width >= 1");
        shapes.push_back({false, 1, 1, l.width});
        break;
      case LayerKind::kConv: {
        if (!in.spatial) throw ConfigError("conv layer " + std::to_string(i) + " needs image input");
        if (l.width < 1 || l.kernel < 1 || l.stride < 1) throw ConfigError("bad conv layer spec");
        const int pad = l.kernel / 2;
        const int ho = (in.h + 2 * pad - l.kernel) / l.stride + 1;
        const int wo = (in.w + 2 * pad - l.kernel) / l.stride + 1;
        if (ho < 1 || wo < 1) throw ConfigError("conv layer reduces the image to nothing");
        shapes.push_back({true, ho, wo, l.width});
        break;
      }
      case LayerKind::kGlobalAvgPool:
        if (!in.spatial) throw ConfigError("pooling layer needs spatial input");
        shapes.push_back({false, 1, 1, in.c});
        break;
    }
  }
  return shapes;
}

std::string key(std::size_t layer, const char* name) {
  return "layer" + std::to_string(layer) + "." + name;
}

MatrixXd normal_matrix(Index rows, Index cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, stddev);
  MatrixXd m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = n(rng);
  return m;
}

RowMatrix reshaped(RowMatrix m, Index rows, Index cols) {
  return Eigen::Map<RowMatrix>(m.data(), rows, cols);
}

RowMatrix im2col(const RowMatrix& a, Index n, const Shape& in, const Shape& out, int k,
                 int stride) {
  const int pad = k / 2;
  RowMatrix p = RowMatrix::Zero(n * out.h * out.w, static_cast<Index>(k) * k * in.c);
  for (Index b = 0; b < n; ++b)
    for (int oy = 0; oy < out.h; ++oy)
      for (int ox = 0; ox < out.w; ++ox) {
        const Index row = (b * out.h + oy) * out.w + ox;
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= in.h) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= in.w) continue;
            p.row(row).segment((ky * k + kx) * in.c, in.c) = a.row((b * in.h + iy) * in.w + ix);
          }
        }
      }
  return p;
}

RowMatrix col2im(const RowMatrix& dp, Index n, const Shape& in, const Shape& out, int k,
                 int stride) {
  const int pad = k / 2;
  RowMatrix da = RowMatrix::Zero(n * in.h * in.w, in.c);
  for (Index b = 0; b < n; ++b)
    for (int oy = 0; oy < out.h; ++oy)
      for (int ox = 0; ox < out.w; ++ox) {
        const Index row = (b * out.h + oy) * out.w + ox;
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= in.h) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= in.w) continue;
            da.row((b * in.h + iy) * in.w + ix) += dp.row(row).segment((ky * k + kx) * in.c, in.c);
          }
        }
      }
  return da;
}

constexpr double kBatchNormEps = 1e-5;
constexpr double kBatchNormMomentum = 0.9;

struct LayerCache {
  RowMatrix input;
  RowMatrix patches;
  RowMatrix xhat;
  Eigen::RowVectorXd inv_std;
  RowMatrix output;
};

struct Forward {
  std::vector<Shape> shapes;
  std::vector<LayerCache> layers;
  RowMatrix features;
  Index n = 0;
};

Forward run_forward(const PredictorState& s, const RowMatrix& inputs, NormMode mode,
                    PredictorState* stats, bool keep_cache) {
  Forward f;
  f.shapes = layer_shapes(s.arch, s.input);
  f.n = inputs.rows();
  if (inputs.cols() != s.input.size())
    throw TrainingError("input width " + std::to_string(inputs.cols()) +
                        " does not match the predictor's input size " +
                        std::to_string(s.input.size()));
  const Index n = f.n;
  RowMatrix a = f.shapes[0].spatial
                    ? reshaped(inputs, n * f.shapes[0].h * f.shapes[0].w, f.shapes[0].c)
                    : inputs;
  if (keep_cache) f.layers.resize(s.arch.layers.size());
  for (std::size_t i = 0; i < s.arch.layers.size(); ++i) {
    const auto& l = s.arch.layers[i];
    const Shape& in = f.shapes[i];
    const Shape& out = f.shapes[i + 1];
    RowMatrix z;
    if (l.kind == LayerKind::kGlobalAvgPool) {
      const Index hw = static_cast<Index>(in.h) * in.w;
      z.resize(n, in.c);
      for (Index b = 0; b < n; ++b) z.row(b) = a.middleRows(b * hw, hw).colwise().mean();
      if (keep_cache) f.layers[i].output = z;
      a = std::move(z);
      continue;
    }
    const MatrixXd& w = s.params.at(key(i, "weight"));
    const MatrixXd& bias = s.params.at(key(i, "bias"));
    if (l.kind == LayerKind::kDense) {
      if (in.spatial) a = reshaped(std::move(a), n, in.features());
      z = a * w;
      if (keep_cache) f.layers[i].input = std::move(a);
    } else {
      RowMatrix p = im2col(a, n, in, out, l.kernel, l.stride);
      z = p * w;
      if (keep_cache) {
        f.layers[i].input = std::move(a);
        f.layers[i].patches = std::move(p);
      }
    }
    z.rowwise() += bias.row(0);
    if (l.batchnorm) {
      const MatrixXd& gamma = s.params.at(key(i, "gamma"));
      const MatrixXd& beta = s.params.at(key(i, "beta"));
      Eigen::RowVectorXd mean, var;
      if (mode == NormMode::kEval) {
        mean = s.params.at(key(i, "running_mean")).row(0);
        var = s.params.at(key(i, "running_var")).row(0);
      } else {
        mean = z.colwise().mean();
        var = (z.rowwise() - mean).array().square().colwise().mean();
        if (mode == NormMode::kTrain && stats) {
          auto& rm = stats->params.at(key(i, "running_mean"));
          auto& rv = stats->params.at(key(i, "running_var"));
          rm.row(0) = kBatchNormMomentum * rm.row(0) + (1 - kBatchNormMomentum) * mean;
          rv.row(0) = kBatchNormMomentum * rv.row(0) + (1 - kBatchNormMomentum) * var;
        }
      }
      Eigen::RowVectorXd inv_std = (var.array() + kBatchNormEps).rsqrt().matrix();
      RowMatrix xhat = ((z.rowwise() - mean).array().rowwise() * inv_std.array()).matrix();
      z = (xhat.array().rowwise() * gamma.row(0).array()).matrix();
      z.rowwise() += beta.row(0);
      if (keep_cache) {
        f.layers[i].xhat = std::move(xhat);
        f.layers[i].inv_std = std::move(inv_std);
      }
    }
    switch (l.activation) {
      case Activation::kRelu: z = z.cwiseMax(0.0); break;
      case Activation::kTanh: z = z.array().tanh().matrix(); break;
      case Activation::kNone: break;
    }
    if (keep_cache) f.layers[i].output = z;
    a = std::move(z);
  }
  const Shape& last = f.shapes.back();
  f.features = last.spatial ? reshaped(std::move(a), n, last.features()) : std::move(a);
  return f;
}

// Accumulates backbone gradients given d(loss)/d(features).
void run_backward(const PredictorState& s, const Forward& f, RowMatrix d_features,
                  NormMode mode, Gradients& g) {
  const Index n = f.n;
  const Shape& last = f.shapes.back();
  RowMatrix d = last.spatial
                    ? reshaped(std::move(d_features), n * last.h * last.w, last.c)
                    : std::move(d_features);
  for (std::size_t ii = s.arch.layers.size(); ii-- > 0;) {
    const auto& l = s.arch.layers[ii];
    const LayerCache& c = f.layers[ii];
    const Shape& in = f.shapes[ii];
    const Shape& out = f.shapes[ii + 1];
    if (l.kind == LayerKind::kGlobalAvgPool) {
      const Index hw = static_cast<Index>(in.h) * in.w;
      RowMatrix da(n * hw, in.c);
      for (Index b = 0; b < n; ++b)
        da.middleRows(b * hw, hw).rowwise() = d.row(b) / static_cast<double>(hw);
      d = std::move(da);
      continue;
    }
    switch (l.activation) {
      case Activation::kRelu:
        d = (d.array() * (c.output.array() > 0.0).cast<double>()).matrix();
        break;
      case Activation::kTanh:
        d = (d.array() * (1.0 - c.output.array().square())).matrix();
        break;
      case Activation::kNone: break;
    }
    if (l.batchnorm) {
      const MatrixXd& gamma = s.params.at(key(ii, "gamma"));
      g.params[key(ii, "gamma")] = (d.array() * c.xhat.array()).colwise().sum().matrix();
      g.params[key(ii, "beta")] = d.colwise().sum();
      RowMatrix dxhat = (d.array().rowwise() * gamma.row(0).array()).matrix();
      if (mode == NormMode::kEval) {
        d = (dxhat.array().rowwise() * c.inv_std.array()).matrix();
      } else {
        const double m = static_cast<double>(d.rows());
        const Eigen::RowVectorXd sum_dxhat = dxhat.colwise().sum();
        const Eigen::RowVectorXd sum_dxhat_xhat = (dxhat.array() * c.xhat.array()).colwise().sum();
        RowMatrix t = (m * dxhat).rowwise() - sum_dxhat;
        t -= (c.xhat.array().rowwise() * sum_dxhat_xhat.array()).matrix();
        d = ((t.array().rowwise() * c.inv_std.array()) / m).matrix();
      }
    }
    const MatrixXd& w = s.params.at(key(ii, "weight"));
    g.params[key(ii, "bias")] = d.colwise().sum();
    if (l.kind == LayerKind::kDense) {
      g.params[key(ii, "weight")] = c.input.transpose() * d;
      RowMatrix da = d * w.transpose();
      d = in.spatial ? reshaped(std::move(da), n * in.h * in.w, in.c) : std::move(da);
    } else {
      g.params[key(ii, "weight")] = c.patches.transpose() * d;
      RowMatrix dp = d * w.transpose();
      d = col2im(dp, n, in, out, l.kernel, l.stride);
    }
  }
}

RowMatrix head_logits(const Head& h, const RowMatrix& features) {
  RowMatrix z = features * h.weight;
  z.rowwise() += h.bias.row(0);
  return z;
}

RowMatrix softmax_rows(const RowMatrix& logits) {
  RowMatrix p = logits;
  for (Index i = 0; i < p.rows(); ++i) {
    const double m = p.row(i).maxCoeff();
    p.row(i) = (p.row(i).array() - m).exp().matrix();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

// Mean loss over the batch; writes d(loss)/d(logits).
double loss_from_logits(const RowMatrix& logits, const Targets& t, double smoothing,
                        RowMatrix* d_logits) {
  const Index n = logits.rows();
  const Index k = logits.cols();
  double loss = 0.0;
  if (t.kind == TaskKind::kSingleLabel) {
    RowMatrix q = RowMatrix::Constant(n, k, smoothing / static_cast<double>(k));
    for (Index i = 0; i < n; ++i) q(i, t.labels[i]) += 1.0 - smoothing;
    for (Index i = 0; i < n; ++i) {
      const double m = logits.row(i).maxCoeff();
      const double lse = m + std::log((logits.row(i).array() - m).exp().sum());
      loss -= (q.row(i).array() * (logits.row(i).array() - lse)).sum();
    }
    loss /= static_cast<double>(n);
    if (d_logits) *d_logits = (softmax_rows(logits) - q) / static_cast<double>(n);
  } else {
    const RowMatrix y = (t.binary.array() * (1.0 - smoothing) + smoothing / 2.0).matrix();
    // log(1 + exp(-|z|)) form for stability.
    const auto z = logits.array();
    const auto softplus_neg_abs = (-z.abs()).exp().log1p();
    loss = (z.max(0.0) - z * y.array() + softplus_neg_abs).sum() / static_cast<double>(n * k);
    if (d_logits) {
      const RowMatrix sig = (1.0 / (1.0 + (-z).exp())).matrix();
      *d_logits = (sig - y) / static_cast<double>(n * k);
    }
  }
  return loss;
}

}  // namespace

int PredictorState::feature_dim() const { return layer_shapes(arch, input).back().features(); }

std::size_t PredictorState::num_parameters() const {
  std::size_t n = 0;
  for (const auto& [k, v] : params)
    if (k.find("running_") == std::string::npos) n += static_cast<std::size_t>(v.size());
  for (const auto& [k, h] : heads) n += h.weight.size() + h.bias.size();
  return n;
}

PredictorState init_backbone(const Architecture& arch, const InputShape& input,
                             std::uint64_t seed) {
  PredictorState s;
  s.arch = arch;
  s.input = input;
  const auto shapes = layer_shapes(arch, input);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const auto& l = arch.layers[i];
    if (l.kind == LayerKind::kGlobalAvgPool) continue;
    const int fan_in = l.kind == LayerKind::kDense ? shapes[i].features()
                                                   : l.kernel * l.kernel * shapes[i].c;
    const double gain = l.activation == Activation::kRelu ? 2.0 : 1.0;
    s.params[key(i, "weight")] = normal_matrix(fan_in, l.width, std::sqrt(gain / fan_in), rng);
    s.params[key(i, "bias")] = MatrixXd::Zero(1, l.width);
    if (l.batchnorm) {
      s.params[key(i, "gamma")] = MatrixXd::Ones(1, l.width);
      s.params[key(i, "beta")] = MatrixXd::Zero(1, l.width);
      s.params[key(i, "running_mean")] = MatrixXd::Zero(1, l.width);
      s.params[key(i, "running_var")] = MatrixXd::Ones(1, l.width);
    }
  }
  return s;
}

Head init_head(int features, int classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return {normal_matrix(features, classes, std::sqrt(1.0 / features), rng),
          MatrixXd::Zero(1, classes)};
}

void Gradients::add_scaled(const Gradients& other, double scale) {
  for (const auto& [k, v] : other.params) {
    auto it = params.find(k);
    if (it == params.end()) params.emplace(k, scale * v);
    else it->second += scale * v;
  }
  for (const auto& [k, h] : other.heads) {
    auto it = heads.find(k);
    if (it == heads.end()) {
      heads.emplace(k, Head{scale * h.weight, scale * h.bias});
    } else {
      it->second.weight += scale * h.weight;
      it->second.bias += scale * h.bias;
    }
  }
}

RowMatrix forward_features(const PredictorState& state, const RowMatrix& inputs, NormMode mode,
                           PredictorState* stats) {
  return run_forward(state, inputs, mode, stats, false).features;
}

RowMatrix forward_logits(const PredictorState& state, const std::string& head,
                         const RowMatrix& inputs) {
  auto it = state.heads.find(head);
  if (it == state.heads.end()) throw TrainingError("predictor has no head for task " + head);
  return head_logits(it->second, forward_features(state, inputs));
}

LossAndGradient loss_and_gradient(const PredictorState& state, const std::string& head,
                                  const RowMatrix& inputs, const Targets& targets,
                                  double label_smoothing, NormMode mode, PredictorState* stats) {
  auto it = state.heads.find(head);
  if (it == state.heads.end()) throw TrainingError("predictor has no head for task " + head);
  const Head& h = it->second;
  Forward f = run_forward(state, inputs, mode, stats, true);
  const RowMatrix logits = head_logits(h, f.features);
  RowMatrix d_logits;
  LossAndGradient out;
  out.loss = loss_from_logits(logits, targets, label_smoothing, &d_logits);
  Head gh{f.features.transpose() * d_logits, d_logits.colwise().sum()};
  out.gradients.heads.emplace(head, std::move(gh));
  RowMatrix d_features = d_logits * h.weight.transpose();
  run_backward(state, f, std::move(d_features), mode, out.gradients);
  return out;
}

double data_loss(const PredictorState& state, const std::string& head, const RowMatrix& inputs,
                 const Targets& targets, double label_smoothing, NormMode mode) {
  auto it = state.heads.find(head);
  if (it == state.heads.end()) throw TrainingError("predictor has no head for task " + head);
  const Forward f = run_forward(state, inputs, mode, nullptr, false);
  return loss_from_logits(head_logits(it->second, f.features), targets, label_smoothing, nullptr);
}

RowMatrix predict_proba(const PredictorState& state, const std::string& head,
                        const RowMatrix& inputs, TaskKind kind) {
  constexpr Index kChunk = 512;
  RowMatrix out;
  for (Index start = 0; start < inputs.rows(); start += kChunk) {
    const Index len = std::min(kChunk, inputs.rows() - start);
    const RowMatrix logits = forward_logits(state, head, inputs.middleRows(start, len));
    RowMatrix p = kind == TaskKind::kSingleLabel
                      ? softmax_rows(logits)
                      : RowMatrix((1.0 / (1.0 + (-logits.array()).exp())).matrix());
    if (start == 0) out.resize(inputs.rows(), p.cols());
    out.middleRows(start, len) = p;
  }
  return out;
}

RowMatrix extract_features(const PredictorState& state, const RowMatrix& inputs) {
  constexpr Index kChunk = 512;
  RowMatrix out(inputs.rows(), state.feature_dim());
  for (Index start = 0; start < inputs.rows(); start += kChunk) {
    const Index len = std::min(kChunk, inputs.rows() - start);
    out.middleRows(start, len) = forward_features(state, inputs.middleRows(start, len));
  }
  return out;
}

Targets targets_for(const Split& split, const std::vector<std::size_t>& indices, TaskKind kind,
                    int num_classes) {
  Targets t;
  t.kind = kind;
  t.num_classes = num_classes;
  if (kind == TaskKind::kSingleLabel) {
    t.labels.reserve(indices.size());
    for (auto i : indices) t.labels.push_back(split[i].label);
  } else {
    t.binary.resize(static_cast<Index>(indices.size()), num_classes);
    for (std::size_t r = 0; r < indices.size(); ++r)
      for (int c = 0; c < num_classes; ++c) t.binary(r, c) = split[indices[r]].labels[c];
  }
  return t;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

constexpr char kStateMagic[4] = {'T', 'S', 'P', 'S'};
constexpr std::uint32_t kStateVersion = 1;

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  std::uint8_t buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

void put_string(std::vector<std::uint8_t>& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.insert(out.end(), s.begin(), s.end());
}

void put_matrix(std::vector<std::uint8_t>& out, const std::string& name, const MatrixXd& m) {
  put_string(out, name);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols()));
  const auto* p = reinterpret_cast<const std::uint8_t*>(m.data());
  out.insert(out.end(), p, p + m.size() * sizeof(double));
}

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> b) : b_(b) {}
  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, b_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  MatrixXd matrix() {
    const auto r = get<std::uint32_t>();
    const auto c = get<std::uint32_t>();
    const std::size_t bytes = static_cast<std::size_t>(r) * c * sizeof(double);
    need(bytes);
    MatrixXd m(r, c);
    std::memcpy(m.data(), b_.data() + pos_, bytes);
    pos_ += bytes;
    return m;
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > b_.size()) throw DataError("truncated predictor state");
  }
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize(const PredictorState& state) {
  std::vector<std::uint8_t> out(kStateMagic, kStateMagic + 4);
  put<std::uint32_t>(out, kStateVersion);
  put_string(out, to_json_string(state.arch));
  for (int v : {state.input.height, state.input.width, state.input.channels, state.input.dim})
    put<std::int32_t>(out, v);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(state.params.size()));
  for (const auto& [k, m] : state.params) put_matrix(out, k, m);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(state.heads.size()));
  for (const auto& [k, h] : state.heads) {
    put_matrix(out, k + "/weight", h.weight);
    put_matrix(out, k + "/bias", h.bias);
  }
  return out;
}

PredictorState deserialize_predictor(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kStateMagic, 4) != 0)
    throw DataError("not a predictor state (bad magic)");
  ByteReader r(bytes.subspan(4));
  const auto version = r.get<std::uint32_t>();
  if (version != kStateVersion)
    throw DataError("unsupported predictor state version " + std::to_string(version));
  PredictorState s;
  s.arch = architecture_from_json_string(r.string());
  s.input.height = r.get<std::int32_t>();
  s.input.width = r.get<std::int32_t>();
  s.input.channels = r.get<std::int32_t>();
  s.input.dim = r.get<std::int32_t>();
  const auto n_params = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_params; ++i) {
    auto name = r.string();
    s.params[name] = r.matrix();
  }
  const auto n_heads = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_heads; ++i) {
    auto wname = r.string();
    MatrixXd w = r.matrix();
    auto bname = r.string();
    MatrixXd b = r.matrix();
    const auto id = wname.substr(0, wname.rfind('/'));
    s.heads[id] = Head{std::move(w), std::move(b)};
  }
  if (!r.done()) throw DataError("trailing bytes in predictor state");
  // Shape check against the declared architecture.
  const PredictorState fresh = init_backbone(s.arch, s.input, 0);
  for (const auto& [k, m] : fresh.params) {
    auto it = s.params.find(k);
    if (it == s.params.end() || it->second.rows() != m.rows() || it->second.cols() != m.cols())
      throw DataError("predictor state array " + k + " does not match its architecture");
  }
  return s;
}

void save_predictor(const PredictorState& state, const std::filesystem::path& path) {
  write_file_atomic(path, serialize(state));
}

PredictorState load_predictor(const std::filesystem::path& path) {
  return deserialize_predictor(read_file_bytes(path));
}

}  // namespace taskstream
