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

#include "taskstream/stream.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"
#include "taskstream/task_io.hpp"

namespace taskstream {

using nlohmann::json;

std::string to_string(TaskKind kind) {
  return kind == TaskKind::kSingleLabel ? "single_label" : "multi_label";
}

TaskKind task_kind_from_string(const std::string& s) {
  if (s == "single_label" || s == "C") return TaskKind::kSingleLabel;
  if (s == "multi_label" || s == "M") return TaskKind::kMultiLabel;
  throw DataError("unknown task kind '" + s + "'");
}

const Split& TaskSplits::get(SplitRole role) const {
  switch (role) {
    case SplitRole::kTrain: return train;
    case SplitRole::kVal: return val;
    case SplitRole::kTest: return test;
  }
  return test;
}

std::string content_key(const Example& e) {
  std::string key;
  key.resize(3 * sizeof(int) + e.input.size() * sizeof(float));
  int shape[3] = {e.height, e.width, e.channels};
  std::memcpy(key.data(), shape, sizeof(shape));
  std::memcpy(key.data() + sizeof(shape), e.input.data(), e.input.size() * sizeof(float));
  return key;
}

void check_disjoint(const TaskSplits& splits, const std::string& task_id) {
  std::unordered_map<std::string, int> seen;
  const Split* parts[3] = {&splits.train, &splits.val, &splits.test};
  static constexpr const char* kNames[3] = {"train", "val", "test"};
  for (int s = 0; s < 3; ++s) {
    for (const auto& e : *parts[s]) {
      auto [it, inserted] = seen.emplace(content_key(e), s);
      if (!inserted && it->second != s) {
        throw DataError("task " + task_id + ": an input appears in both " +
                        kNames[it->second] + " and " + kNames[s] + " splits");
      }
    }
  }
}

void validate_example(const Example& e, TaskKind kind, int num_classes,
                      const std::string& task_id) {
  if (e.input.empty()) throw DataError("task " + task_id + ": empty input");
  if (e.is_image() &&
      static_cast<std::size_t>(e.height) * e.width * e.channels != e.input.size())
    throw DataError("task " + task_id + ": image shape does not match data");
  if (kind == TaskKind::kSingleLabel) {
    if (e.label < 0 || e.label >= num_classes)
      throw DataError("task " + task_id + ": label " + std::to_string(e.label) +
                      " outside [0, " + std::to_string(num_classes) + ")");
  } else {
    if (e.labels.size() != static_cast<std::size_t>(num_classes))
      throw DataError("task " + task_id + ": label vector length " +
                      std::to_string(e.labels.size()) + " != num_classes");
    for (auto v : e.labels)
      if (v > 1) throw DataError("task " + task_id + ": non-binary label vector");
  }
}

Task::Task(TaskInfo info, std::shared_ptr<const TaskSplits> splits)
    : info_(std::move(info)), splits_(std::move(splits)) {
  if (!splits_) throw DataError("task " + info_.id + ": no split data");
  if (info_.id.empty()) throw DataError("task with empty id");
  if (info_.num_classes < 2)
    throw DataError("task " + info_.id + ": num_classes must be >= 2");
  if (splits_->train.empty() || splits_->val.empty() || splits_->test.empty())
    throw DataError("task " + info_.id + ": every split must be nonempty");
  for (const Split* s : {&splits_->train, &splits_->val, &splits_->test})
    for (const auto& e : *s) validate_example(e, info_.kind, info_.num_classes, info_.id);
  check_disjoint(*splits_, info_.id);
  info_.sizes = {splits_->train.size(), splits_->val.size(), splits_->test.size()};
}

bool Task::has_images() const { return splits_->train.front().is_image(); }

int Task::input_dim() const {
  const auto& e = splits_->train.front();
  return e.is_image() ? 0 : static_cast<int>(e.input.size());
}

int Task::input_channels() const {
  const auto& e = splits_->train.front();
  return e.is_image() ? e.channels : 0;
}

Stream::Stream(std::vector<Task> tasks, std::size_t boundary, std::string name)
    : tasks_(std::move(tasks)), boundary_(boundary), name_(std::move(name)) {
  if (boundary_ == 0 || boundary_ > tasks_.size())
    throw DataError("stream boundary " + std::to_string(boundary_) +
                    " must lie in [1, " + std::to_string(tasks_.size()) + "]");
  std::unordered_set<std::string> ids;
  for (const auto& t : tasks_)
    if (!ids.insert(t.id()).second) throw DataError("duplicate task id " + t.id());
}

StreamViews split_boundary(const Stream& stream) {
  return {stream.meta_train(), stream.meta_test()};
}

// ---------------------------------------------------------------------------
// Manifests

namespace {

json row_to_json(const ManifestRow& row) {
  const auto& i = row.info;
  return json{{"record", "task"},
              {"id", i.id},
              {"name", i.name},
              {"year", i.year},
              {"kind", to_string(i.kind)},
              {"domain", i.domain},
              {"num_classes", i.num_classes},
              {"sizes", {{"train", i.sizes.train}, {"val", i.sizes.val}, {"test", i.sizes.test}}},
              {"avg_resolution", {i.avg_resolution.height, i.avg_resolution.width}},
              {"files", row.files},
              {"checksums", row.checksums},
              {"meta_test", row.meta_test}};
}

ManifestRow row_from_json(const json& j, std::size_t line) {
  try {
    ManifestRow row;
    auto& i = row.info;
    i.id = j.at("id").get<std::string>();
    i.name = j.value("name", i.id);
    i.year = j.at("year").get<int>();
    i.kind = task_kind_from_string(j.at("kind").get<std::string>());
    i.domain = j.at("domain").get<std::string>();
    i.num_classes = j.at("num_classes").get<int>();
    const auto& sz = j.at("sizes");
    i.sizes = {sz.at("train").get<std::size_t>(), sz.value("val", std::size_t{0}),
               sz.value("test", std::size_t{0})};
    if (j.contains("avg_resolution")) {
      const auto& r = j.at("avg_resolution");
      i.avg_resolution = {r.at(0).get<int>(), r.at(1).get<int>()};
    }
    row.files = j.value("files", std::map<std::string, std::string>{});
    row.checksums = j.value("checksums", std::map<std::string, std::string>{});
    row.meta_test = j.value("meta_test", false);
    if (i.num_classes < 2) throw DataError("num_classes must be >= 2");
    return row;
  } catch (const json::exception& e) {
    throw DataError("manifest line " + std::to_string(line) + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError("manifest line " + std::to_string(line) + ": " + e.what());
  }
}

}  // namespace

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  Manifest m;
  bool have_header = false;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError("manifest " + path.string() + " line " + std::to_string(lineno) +
                      ": " + e.what());
    }
    const auto record = j.value("record", std::string("task"));
    if (record == "stream") {
      if (have_header) throw DataError("manifest has two stream headers");
      have_header = true;
      m.version = j.value("version", 1);
      if (m.version != 1)
        throw DataError("unsupported manifest version " + std::to_string(m.version));
      m.name = j.value("name", path.stem().string());
      m.boundary = j.at("boundary").get<std::size_t>();
    } else if (record == "task") {
      m.rows.push_back(row_from_json(j, lineno));
    } else {
      throw DataError("manifest line " + std::to_string(lineno) + ": unknown record '" +
                      record + "'");
    }
  }
  if (!have_header) throw DataError("manifest " + path.string() + " has no stream header");
  if (m.rows.empty()) throw DataError("manifest " + path.string() + " has no tasks");
  if (m.boundary == 0 || m.boundary > m.rows.size())
    throw DataError("manifest boundary " + std::to_string(m.boundary) +
                    " invalid for " + std::to_string(m.rows.size()) + " rows");
  std::unordered_set<std::string> ids;
  for (std::size_t r = 0; r < m.rows.size(); ++r) {
    const auto& row = m.rows[r];
    if (!ids.insert(row.info.id).second)
      throw DataError("manifest has duplicate task id " + row.info.id);
    if (row.meta_test != (r >= m.boundary))
      throw DataError("manifest row " + row.info.id +
                      ": meta_test flag disagrees with stream boundary");
    if (r > 0 && row.info.year < m.rows[r - 1].info.year)
      throw DataError("manifest years must be non-decreasing (task " + row.info.id + ")");
  }
  return m;
}

void write_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  std::ostringstream out;
  out << json{{"record", "stream"},
              {"version", manifest.version},
              {"name", manifest.name},
              {"boundary", manifest.boundary}}
             .dump()
      << '\n';
  for (const auto& row : manifest.rows) out << row_to_json(row).dump() << '\n';
  write_file_atomic(path, out.str());
}

Stream load_stream(const std::filesystem::path& manifest_path,
                   const std::filesystem::path& data_root) {
  const Manifest m = read_manifest(manifest_path);
  const auto root = data_root.empty() ? manifest_path.parent_path() : data_root;
  std::vector<Task> tasks;
  tasks.reserve(m.rows.size());
  for (const auto& row : m.rows) {
    auto splits = std::make_shared<TaskSplits>();
    for (const char* role : {"train", "val", "test"}) {
      auto f = row.files.find(role);
      if (f == row.files.end())
        throw DataError("task " + row.info.id + ": manifest names no " + role + " file");
      const auto path = root / f->second;
      if (!std::filesystem::exists(path))
        throw DataError("task " + row.info.id + ": missing data file " + path.string());
      const auto bytes = read_file_bytes(path);
      if (auto c = row.checksums.find(role); c != row.checksums.end()) {
        const auto actual = sha256_hex(bytes);
        if (actual != c->second)
          throw DataError("task " + row.info.id + ": checksum mismatch for " + role +
                          " (expected " + c->second + ", got " + actual + ")");
      }
      Split split = decode_split(bytes);
      if (std::string(role) == "train") splits->train = std::move(split);
      else if (std::string(role) == "val") splits->val = std::move(split);
      else splits->test = std::move(split);
    }
    const SplitSizes declared = row.info.sizes;
    Task task(row.info, std::move(splits));
    if (task.info().sizes.train != declared.train ||
        (declared.val && task.info().sizes.val != declared.val) ||
        (declared.test && task.info().sizes.test != declared.test))
      throw DataError("task " + row.info.id + ": split sizes disagree with manifest");
    tasks.push_back(std::move(task));
  }
  return Stream(std::move(tasks), m.boundary, m.name);
}

// ---------------------------------------------------------------------------
// Synthetic streams

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = n(rng);
  return m;
}

// Rows form an orthonormal basis of a random `k`-dim subspace, optionally
// inside the orthogonal complement of `exclude`'s row space.
MatrixXd random_subspace(int k, int dim, std::mt19937_64& rng,
                         const MatrixXd* exclude = nullptr) {
  MatrixXd g = gaussian_matrix(dim, k, rng);
  if (exclude) {
    Eigen::HouseholderQR<MatrixXd> qr(exclude->transpose());
    const auto r = std::min<Eigen::Index>(exclude->rows(), dim);
    MatrixXd q = qr.householderQ() * MatrixXd::Identity(dim, r);
    g -= q * (q.transpose() * g);
  }
  Eigen::HouseholderQR<MatrixXd> qr(g);
  MatrixXd basis = qr.householderQ() * MatrixXd::Identity(dim, k);
  return basis.transpose();
}

MatrixXd fresh_map(int classes, int latent, int dim, std::mt19937_64& rng,
                   const MatrixXd* exclude = nullptr) {
  const MatrixXd u = random_subspace(latent, dim, rng, exclude);
  const MatrixXd a = gaussian_matrix(classes, latent, rng);
  MatrixXd w = a * u;
  for (Eigen::Index c = 0; c < w.rows(); ++c) w.row(c).normalize();
  return w;
}

MatrixXd perturbed_map(const MatrixXd& w, double magnitude, std::mt19937_64& rng) {
  MatrixXd p = gaussian_matrix(w.rows(), w.cols(), rng);
  // Project out w in the Frobenius inner product.
  p -= (p.cwiseProduct(w).sum() / w.squaredNorm()) * w;
  p *= magnitude * w.norm() / p.norm();
  MatrixXd out = w + p;
  out *= w.norm() / out.norm();
  return out;
}

Split sample_split(const MatrixXd& w, TaskKind kind, std::size_t n, double noise,
                   std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto classes = static_cast<int>(w.rows());
  std::uniform_int_distribution<int> any_class(0, classes - 1);
  Split split;
  split.reserve(n);
  VectorXd x(w.cols());
  for (std::size_t k = 0; k < n; ++k) {
    for (Eigen::Index d = 0; d < x.size(); ++d) x(d) = normal(rng);
    const VectorXd scores = w * x;
    Example e;
    e.input.assign(x.data(), x.data() + x.size());
    for (auto& v : e.input) v = static_cast<float>(v);
    if (kind == TaskKind::kSingleLabel) {
      Eigen::Index best = 0;
      scores.maxCoeff(&best);
      e.label = static_cast<int>(best);
      if (noise > 0 && unit(rng) < noise) e.label = any_class(rng);
    } else {
      e.labels.resize(classes);
      for (int c = 0; c < classes; ++c) {
        bool on = scores(c) > 0.0;
        if (noise > 0 && unit(rng) < noise) on = !on;
        e.labels[c] = on ? 1 : 0;
      }
    }
    split.push_back(std::move(e));
  }
  return split;
}

Task make_task(TaskInfo info, const MatrixXd& w, double noise, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto splits = std::make_shared<TaskSplits>();
  splits->train = sample_split(w, info.kind, info.sizes.train, noise, rng);
  splits->val = sample_split(w, info.kind, info.sizes.val, noise, rng);
  splits->test = sample_split(w, info.kind, info.sizes.test, noise, rng);
  return Task(std::move(info), std::move(splits));
}

std::string synthetic_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "task_%02zu", i);
  return buf;
}

}  // namespace

Stream make_synthetic_stream(const SyntheticStreamSpec& spec) {
  const std::size_t n = spec.num_tasks;
  if (n == 0) throw ConfigError("synthetic stream needs at least one task");
  if (!spec.tasks.empty() && spec.tasks.size() != n)
    throw ConfigError("synthetic spec lists " + std::to_string(spec.tasks.size()) +
                      " tasks but num_tasks is " + std::to_string(n));
  if (spec.input_dim < 1 || spec.latent_dim < 1 || spec.latent_dim > spec.input_dim)
    throw ConfigError("synthetic spec needs 1 <= latent_dim <= input_dim");
  auto task_spec = [&](std::size_t i) -> const SyntheticTaskSpec& {
    return spec.tasks.empty() ? spec.task_defaults : spec.tasks[i];
  };
  for (std::size_t i = 0; i < n; ++i) {
    const auto& t = task_spec(i);
    if (t.num_classes < 2) throw ConfigError("synthetic task needs >= 2 classes");
    const auto floor = static_cast<std::size_t>(2 * t.num_classes);
    if (t.sizes.train < floor || t.sizes.val < 1 || t.sizes.test < 1)
      throw ConfigError("synthetic task " + std::to_string(i) +
                        ": train size must be >= 2 * num_classes and val/test nonempty");
  }
  std::vector<const Relation*> relation_of(n, nullptr);
  for (const auto& r : spec.relations) {
    if (r.target >= n || r.source >= n || r.source >= r.target)
      throw ConfigError("relation " + std::to_string(r.source) + "~" +
                        std::to_string(r.target) +
                        " must reference valid indices with source before target");
    if (task_spec(r.source).num_classes != task_spec(r.target).num_classes && !r.anti)
      throw ConfigError("related synthetic tasks must share the class count");
    if (r.perturbation < 0) throw ConfigError("relation perturbation must be >= 0");
    if (!relation_of[r.target]) relation_of[r.target] = &r;
  }
  for (auto r : spec.repeats)
    if (r >= n) throw ConfigError("repeat index " + std::to_string(r) + " out of range");

  std::mt19937_64 rng(derive_seed(spec.seed, 0x5717));
  std::vector<MatrixXd> maps(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& t = task_spec(i);
    if (const Relation* r = relation_of[i]) {
      if (r->anti) {
        maps[i] = fresh_map(t.num_classes, spec.latent_dim, spec.input_dim, rng, &maps[r->source]);
      } else {
        maps[i] = perturbed_map(maps[r->source], r->perturbation, rng);
      }
    } else {
      maps[i] = fresh_map(t.num_classes, spec.latent_dim, spec.input_dim, rng);
    }
  }

  std::vector<Task> tasks;
  const std::size_t total = n + spec.repeats.size();
  tasks.reserve(total);
  auto info_for = [&](std::size_t position, std::size_t source_index, std::string id) {
    const auto& t = task_spec(source_index);
    TaskInfo info;
    info.id = std::move(id);
    info.name = info.id;
    info.year = t.year.value_or(2000 + static_cast<int>(position));
    info.domain = t.domain;
    info.kind = t.kind;
    info.num_classes = t.num_classes;
    info.sizes = t.sizes;
    info.avg_resolution = {1, spec.input_dim};
    return info;
  };
  for (std::size_t i = 0; i < n; ++i) {
    tasks.push_back(make_task(info_for(i, i, synthetic_id(i)), maps[i], spec.label_noise,
                              derive_seed(spec.seed, 1000 + i)));
  }
  for (std::size_t k = 0; k < spec.repeats.size(); ++k) {
    const auto src = spec.repeats[k];
    const auto position = n + k;
    tasks.push_back(make_task(info_for(position, src, synthetic_id(src) + "_rep" + std::to_string(k)),
                              maps[src], spec.label_noise,
                              derive_seed(spec.seed, 5000 + k)));
  }
  const std::size_t boundary = spec.boundary.value_or(total);
  if (boundary == 0 || boundary > total)
    throw ConfigError("synthetic boundary must lie in [1, " + std::to_string(total) + "]");
  return Stream(std::move(tasks), boundary, spec.name);
}

Stream make_class_partition_stream(const Task& base, int num_partitions, std::uint64_t seed,
                                   std::optional<std::size_t> boundary) {
  const int classes = base.info().num_classes;
  if (num_partitions < 1 || classes % num_partitions != 0)
    throw ConfigError("cannot split " + std::to_string(classes) + " classes into " +
                      std::to_string(num_partitions) + " equal partitions");
  if (base.info().kind != TaskKind::kSingleLabel)
    throw ConfigError("class-partition streams need a single-label base task");
  const int per = classes / num_partitions;
  if (per < 2) throw ConfigError("each partition needs at least two classes");
  std::vector<int> order(classes);
  std::iota(order.begin(), order.end(), 0);
  if (num_partitions > 1) {
    std::mt19937_64 rng(derive_seed(seed, 0xc1a55));
    std::shuffle(order.begin(), order.end(), rng);
  }
  std::vector<int> group_of(classes), new_label(classes);
  for (int p = 0; p < num_partitions; ++p) {
    std::vector<int> members(order.begin() + p * per, order.begin() + (p + 1) * per);
    std::sort(members.begin(), members.end());
    for (int k = 0; k < per; ++k) {
      group_of[members[k]] = p;
      new_label[members[k]] = k;
    }
  }
  std::vector<std::shared_ptr<TaskSplits>> parts(num_partitions);
  for (auto& p : parts) p = std::make_shared<TaskSplits>();
  auto route = [&](const Split& src, Split TaskSplits::*member) {
    for (const auto& e : src) {
      Example copy = e;
      copy.label = new_label[e.label];
      ((*parts[group_of[e.label]]).*member).push_back(std::move(copy));
    }
  };
  route(base.train(), &TaskSplits::train);
  route(base.val(), &TaskSplits::val);
  route(base.test(), &TaskSplits::test);
  std::vector<Task> tasks;
  for (int p = 0; p < num_partitions; ++p) {
    TaskInfo info = base.info();
    info.id = base.id() + "_part" + std::to_string(p);
    info.name = base.info().name + " part " + std::to_string(p);
    info.num_classes = per;
    tasks.emplace_back(std::move(info), parts[p]);
  }
  const auto b = boundary.value_or(tasks.size());
  return Stream(std::move(tasks), b, base.id() + "_split");
}

// ---------------------------------------------------------------------------
// Variants

std::string to_string(const Variant& v) {
  auto joined = [&] {
    std::string s;
    for (const auto& n : v.names) s += (s.empty() ? "" : ",") + n;
    return s;
  };
  switch (v.kind) {
    case Variant::Kind::kWithinYearShuffle: return "within_year_shuffle(" + std::to_string(v.seed) + ")";
    case Variant::Kind::kFullShuffle: return "full_shuffle(" + std::to_string(v.seed) + ")";
    case Variant::Kind::kRemoveFirst: return "remove_first(" + std::to_string(v.k) + ")";
    case Variant::Kind::kRemoveLast: return "remove_last(" + std::to_string(v.k) + ")";
    case Variant::Kind::kRemoveRandom:
      return "remove_random(" + std::to_string(v.k) + "," + std::to_string(v.seed) + ")";
    case Variant::Kind::kKeepLargest: return "keep_largest(" + std::to_string(v.k) + ")";
    case Variant::Kind::kFilterDomains: return "filter_domains(" + joined() + ")";
    case Variant::Kind::kExcludeNamed: return "exclude_named(" + joined() + ")";
  }
  return {};
}

Variant variant_from_string(const std::string& s) {
  const auto open = s.find('(');
  if (open == std::string::npos || s.back() != ')')
    throw ConfigError("malformed variant '" + s + "'");
  const std::string name = s.substr(0, open);
  const std::string args = s.substr(open + 1, s.size() - open - 2);
  std::vector<std::string> parts;
  std::stringstream ss(args);
  for (std::string p; std::getline(ss, p, ',');)
    if (!p.empty()) parts.push_back(p);
  auto num = [&](std::size_t i) -> std::uint64_t {
    if (i >= parts.size()) throw ConfigError("variant '" + s + "' is missing an argument");
    try {
      return std::stoull(parts[i]);
    } catch (const std::exception&) {
      throw ConfigError("variant '" + s + "': '" + parts[i] + "' is not an integer");
    }
  };
  if (name == "within_year_shuffle") return Variant::within_year_shuffle(num(0));
  if (name == "full_shuffle") return Variant::full_shuffle(num(0));
  if (name == "remove_first") return Variant::remove_first(num(0));
  if (name == "remove_last") return Variant::remove_last(num(0));
  if (name == "remove_random") return Variant::remove_random(num(0), num(1));
  if (name == "keep_largest") return Variant::keep_largest(num(0));
  if (name == "filter_domains")
    return Variant::filter_domains({parts.begin(), parts.end()});
  if (name == "exclude_named") return Variant::exclude_named({parts.begin(), parts.end()});
  throw ConfigError("unknown variant '" + name + "'");
}

Stream apply_variant(const Stream& stream, const Variant& v) {
  std::vector<Task> tasks = stream.tasks();
  std::size_t boundary = stream.boundary();
  std::mt19937_64 rng(derive_seed(v.seed, 0x7a71a));

  // Keeps the meta-train tasks selected by `keep`; the meta-test part is
  // never touched.
  auto filter_train = [&](const std::vector<bool>& keep) {
    std::vector<Task> out;
    std::size_t kept = 0;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      if (i < boundary) {
        if (!keep[i]) continue;
        ++kept;
      }
      out.push_back(tasks[i]);
    }
    if (kept == 0) throw ConfigError("variant " + to_string(v) + " removes every meta-train task");
    tasks = std::move(out);
    boundary = kept;
  };
  auto check_k = [&] {
    if (v.k >= boundary)
      throw ConfigError("variant " + to_string(v) + ": k must be smaller than the " +
                        std::to_string(boundary) + " meta-train tasks");
  };

  switch (v.kind) {
    case Variant::Kind::kWithinYearShuffle: {
      std::map<int, std::vector<std::size_t>> positions;
      for (std::size_t i = 0; i < tasks.size(); ++i) positions[tasks[i].info().year].push_back(i);
      std::vector<Task> out = tasks;
      for (auto& [year, pos] : positions) {
        std::vector<std::size_t> perm = pos;
        std::shuffle(perm.begin(), perm.end(), rng);
        for (std::size_t k = 0; k < pos.size(); ++k) out[pos[k]] = tasks[perm[k]];
      }
      tasks = std::move(out);
      break;
    }
    case Variant::Kind::kFullShuffle:
      std::shuffle(tasks.begin(), tasks.end(), rng);
      break;
    case Variant::Kind::kRemoveFirst: {
      check_k();
      std::vector<bool> keep(boundary, true);
      std::fill(keep.begin(), keep.begin() + v.k, false);
      filter_train(keep);
      break;
    }
    case Variant::Kind::kRemoveLast: {
      check_k();
      std::vector<bool> keep(boundary, true);
      std::fill(keep.end() - v.k, keep.end(), false);
      filter_train(keep);
      break;
    }
    case Variant::Kind::kRemoveRandom: {
      check_k();
      std::vector<std::size_t> idx(boundary);
      std::iota(idx.begin(), idx.end(), 0);
      std::shuffle(idx.begin(), idx.end(), rng);
      std::vector<bool> keep(boundary, true);
      for (std::size_t k = 0; k < v.k; ++k) keep[idx[k]] = false;
      filter_train(keep);
      break;
    }
    case Variant::Kind::kKeepLargest: {
      if (v.k == 0 || v.k > boundary)
        throw ConfigError("variant " + to_string(v) + ": k must lie in [1, " +
                          std::to_string(boundary) + "]");
      std::vector<std::size_t> idx(boundary);
      std::iota(idx.begin(), idx.end(), 0);
      std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) {
        return tasks[a].info().sizes.train > tasks[b].info().sizes.train;
      });
      std::vector<bool> keep(boundary, false);
      for (std::size_t k = 0; k < v.k; ++k) keep[idx[k]] = true;
      filter_train(keep);
      break;
    }
    case Variant::Kind::kFilterDomains: {
      std::set<std::string> present;
      for (const auto& t : tasks) present.insert(t.info().domain);
      for (const auto& d : v.names)
        if (!present.count(d)) throw ConfigError("unknown domain tag '" + d + "'");
      std::vector<bool> keep(boundary);
      for (std::size_t i = 0; i < boundary; ++i) keep[i] = v.names.count(tasks[i].info().domain) > 0;
      filter_train(keep);
      break;
    }
    case Variant::Kind::kExcludeNamed: {
      std::set<std::string> matched;
      std::vector<bool> keep(boundary, true);
      for (std::size_t i = 0; i < boundary; ++i) {
        for (const auto& n : {tasks[i].id(), tasks[i].info().name}) {
          if (v.names.count(n)) {
            keep[i] = false;
            matched.insert(n);
          }
        }
      }
      for (const auto& n : v.names)
        if (!matched.count(n)) throw ConfigError("no meta-train task named '" + n + "'");
      filter_train(keep);
      break;
    }
  }
  return Stream(std::move(tasks), boundary, stream.name());
}

// ---------------------------------------------------------------------------
// Statistics

std::string size_bucket(std::size_t n) {
  if (n < 1000) return "<1k";
  if (n < 10000) return "1k-10k";
  if (n < 100000) return "10k-100k";
  return ">=100k";
}

std::string resolution_bucket(const Resolution& r) {
  const int m = std::min(r.height, r.width);
  if (m < 64) return "<64";
  if (m < 128) return "64-128";
  if (m < 256) return "128-256";
  return ">=256";
}

StreamStatistics stream_statistics(const std::vector<TaskInfo>& infos, std::size_t boundary) {
  StreamStatistics s;
  s.num_tasks = infos.size();
  s.meta_train = std::min(boundary, infos.size());
  s.meta_test = infos.size() - s.meta_train;
  for (const auto& i : infos) {
    ++s.tasks_per_year[i.year];
    ++s.tasks_per_domain[i.domain];
    ++s.tasks_per_size_bucket[size_bucket(i.sizes.train)];
    if (i.kind == TaskKind::kMultiLabel) ++s.multi_label;
    s.total_train_examples += i.sizes.train;
  }
  return s;
}

}  // namespace taskstream
