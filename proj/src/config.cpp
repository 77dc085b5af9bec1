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

#include "taskstream/config.hpp"

#include <fstream>
#include <set>

namespace taskstream {

using nlohmann::json;

namespace {

// Typed field access with the dotted path in every message.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + ": expected an object");
  }

  void allow(std::initializer_list<const char*> keys) const {
    std::set<std::string> ok(keys.begin(), keys.end());
    for (const auto& [k, v] : j_.items())
      if (!ok.count(k)) throw ConfigError("unknown field '" + at(k) + "'");
  }

  bool has(const char* k) const { return j_.contains(k); }
  const json& raw(const char* k) const { return j_.at(k); }
  Reader sub(const char* k) const { return Reader(j_.at(k), at(k)); }
  std::string at(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }

  template <typename T>
  T get(const char* k, T fallback) const {
    if (!j_.contains(k) || j_[k].is_null()) return fallback;
    try {
      return j_[k].get<T>();
    } catch (const json::exception&) {
      throw ConfigError(at(k) + ": has the wrong type (" + j_[k].dump() + ")");
    }
  }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }
  const json& j_;
  std::string path_;
};

std::filesystem::path resolve(const std::string& p, const std::filesystem::path& base) {
  if (p.empty()) return {};
  std::filesystem::path path(p);
  if (path.is_relative() && !base.empty()) path = base / path;
  return path.lexically_normal();
}

std::string phase_list_error(const std::string& s) {
  return "phases: unknown phase '" + s + "' (expected meta_train or meta_test)";
}

SyntheticTaskSpec task_spec_from(const Reader& r, SyntheticTaskSpec t) {
  r.allow({"num_classes", "sizes", "kind", "domain", "year"});
  t.num_classes = r.get("num_classes", t.num_classes);
  if (r.has("sizes")) {
    const Reader s = r.sub("sizes");
    s.allow({"train", "val", "test"});
    t.sizes.train = s.get("train", t.sizes.train);
    t.sizes.val = s.get("val", t.sizes.val);
    t.sizes.test = s.get("test", t.sizes.test);
  }
  if (r.has("kind")) t.kind = task_kind_from_string(r.get<std::string>("kind", ""));
  t.domain = r.get("domain", t.domain);
  if (r.has("year")) t.year = r.get("year", 0);
  return t;
}

json to_json(const SyntheticTaskSpec& t) {
  json j = {{"num_classes", t.num_classes},
            {"sizes", {{"train", t.sizes.train}, {"val", t.sizes.val}, {"test", t.sizes.test}}},
            {"kind", to_string(t.kind)},
            {"domain", t.domain}};
  if (t.year) j["year"] = *t.year;
  return j;
}

PredictorConfig predictor_from(const Reader& r, PredictorConfig p) {
  r.allow({"arch", "input_resolution", "max_batch", "batch_fraction", "batch_size", "momentum",
           "weight_decay", "warmup_fraction", "num_updates", "learning_rate",
           "final_learning_rate", "label_smoothing", "schedule", "augmentation", "eval_interval",
           "seed"});
  if (r.has("arch")) {
    try {
      p.arch = architecture_from_json(r.raw("arch"));
    } catch (const ConfigError& e) {
      throw ConfigError(r.at("arch") + ": " + e.what());
    }
  }
  p.input_resolution = r.get("input_resolution", p.input_resolution);
  p.max_batch = r.get("max_batch", p.max_batch);
  p.batch_fraction = r.get("batch_fraction", p.batch_fraction);
  if (r.has("batch_size") && !r.raw("batch_size").is_null()) p.batch_size = r.get("batch_size", 0);
  p.momentum = r.get("momentum", p.momentum);
  p.weight_decay = r.get("weight_decay", p.weight_decay);
  p.warmup_fraction = r.get("warmup_fraction", p.warmup_fraction);
  p.num_updates = r.get("num_updates", p.num_updates);
  p.learning_rate = r.get("learning_rate", p.learning_rate);
  p.final_learning_rate = r.get("final_learning_rate", p.final_learning_rate);
  p.label_smoothing = r.get("label_smoothing", p.label_smoothing);
  if (r.has("schedule")) {
    const auto s = r.get<std::string>("schedule", "");
    if (s == "cosine") p.schedule = Schedule::kCosine;
    else if (s == "piecewise") p.schedule = Schedule::kPiecewiseConstant;
    else throw ConfigError(r.at("schedule") + ": expected cosine or piecewise, got '" + s + "'");
  }
  if (r.has("augmentation")) {
    const Reader a = r.sub("augmentation");
    a.allow({"random_resized_crop", "horizontal_flip"});
    p.augmentation.random_resized_crop =
        a.get("random_resized_crop", p.augmentation.random_resized_crop);
    p.augmentation.horizontal_flip = a.get("horizontal_flip", p.augmentation.horizontal_flip);
  }
  p.eval_interval = r.get("eval_interval", p.eval_interval);
  p.seed = r.get("seed", p.seed);
  return p;
}

json to_json(const PredictorConfig& p) {
  return {{"arch", to_json(p.arch)},
          {"input_resolution", p.input_resolution},
          {"max_batch", p.max_batch},
          {"batch_fraction", p.batch_fraction},
          {"batch_size", p.batch_size ? json(*p.batch_size) : json(nullptr)},
          {"momentum", p.momentum},
          {"weight_decay", p.weight_decay},
          {"warmup_fraction", p.warmup_fraction},
          {"num_updates", p.num_updates},
          {"learning_rate", p.learning_rate},
          {"final_learning_rate", p.final_learning_rate},
          {"label_smoothing", p.label_smoothing},
          {"schedule", p.schedule == Schedule::kCosine ? "cosine" : "piecewise"},
          {"augmentation",
           {{"random_resized_crop", p.augmentation.random_resized_crop},
            {"horizontal_flip", p.augmentation.horizontal_flip}}},
          {"eval_interval", p.eval_interval},
          {"seed", p.seed}};
}

}  // namespace

json to_json(const Architecture& a) { return json::parse(to_json_string(a)); }

Architecture architecture_from_json(const json& j) {
  if (j.is_object() && j.contains("layers")) return architecture_from_json_string(j.dump());
  if (!j.is_object()) throw ConfigError("architecture must be an object");
  const bool bn = j.value("batchnorm", false);
  if (j.contains("mlp")) {
    const auto act = j.value("activation", std::string("relu"));
    Activation a = Activation::kRelu;
    if (act == "tanh") a = Activation::kTanh;
    else if (act == "none") a = Activation::kNone;
    else if (act != "relu") throw ConfigError("unknown activation '" + act + "'");
    return Architecture::mlp(j.at("mlp").get<std::vector<int>>(), a, bn);
  }
  if (j.contains("small_conv"))
    return Architecture::small_conv(j.at("small_conv").get<std::vector<int>>(), bn);
  throw ConfigError("architecture needs 'layers', 'mlp' or 'small_conv'");
}

void RunConfig::validate() const {
  const auto& s = learner.search;
  if (s.n_trials < kMinTrials || s.n_trials > kMaxTrials)
    throw ConfigError("learner.search.n_trials: " + std::to_string(s.n_trials) +
                      " is outside the tier range [" + std::to_string(kMinTrials) + ", " +
                      std::to_string(kMaxTrials) + "]");
  const auto u = learner.predictor.num_updates;
  if (tier == BudgetTier::kStandard && (u < kMinStandardUpdates || u > kMaxStandardUpdates))
    throw ConfigError("learner.predictor.num_updates: " + std::to_string(u) +
                      " is outside the standard tier [10000, 100000] (set tier to cheap for "
                      "smaller budgets)");
  if (tier == BudgetTier::kCheap && (u < 1 || u >= kMinStandardUpdates))
    throw ConfigError("learner.predictor.num_updates: " + std::to_string(u) +
                      " is outside the cheap tier [1, 10000)");
  if (learner.frozen_num_updates < 0 || learner.frozen_num_updates > u)
    throw ConfigError("learner.frozen_num_updates must lie in [0, num_updates]");
  if (phases.empty()) throw ConfigError("phases: at least one phase is required");
  if (std::set<Phase>(phases.begin(), phases.end()).size() != phases.size())
    throw ConfigError("phases: duplicate phase");
  switch (stream.kind) {
    case StreamSource::Kind::kManifest:
      if (stream.manifest.empty()) throw ConfigError("stream.manifest: required for a manifest source");
      break;
    case StreamSource::Kind::kClassPartition:
      if (stream.manifest.empty()) throw ConfigError("stream.manifest: required for a class-partition source");
      if (stream.base_task.empty()) throw ConfigError("stream.base_task: required for a class-partition source");
      if (stream.partitions < 2) throw ConfigError("stream.partitions: must be >= 2");
      break;
    case StreamSource::Kind::kSynthetic:
      if (stream.synthetic.num_tasks < 1) throw ConfigError("stream.synthetic.num_tasks: must be >= 1");
      break;
  }
  try {
    learner.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("learner: ") + e.what());
  }
  if (!out_dir.empty() && std::filesystem::exists(out_dir) && !std::filesystem::is_directory(out_dir))
    throw ConfigError("out_dir: " + out_dir.string() + " exists and is not a directory");
}

RunConfig config_from_json(const json& j, const std::filesystem::path& base_dir) {
  RunConfig c;
  try {
    const Reader root(j, "");
    root.allow({"stream", "learner", "tier", "phases", "seed", "out_dir"});
    if (root.has("stream")) {
      const Reader s = root.sub("stream");
      s.allow({"source", "manifest", "data_root", "synthetic", "base_task", "partitions",
               "partition_seed", "boundary", "variants"});
      const auto src = s.get<std::string>("source", "synthetic");
      if (src == "manifest") c.stream.kind = StreamSource::Kind::kManifest;
      else if (src == "synthetic") c.stream.kind = StreamSource::Kind::kSynthetic;
      else if (src == "class_partition") c.stream.kind = StreamSource::Kind::kClassPartition;
      else throw ConfigError("stream.source: expected manifest, synthetic or class_partition, got '" + src + "'");
      c.stream.manifest = resolve(s.get<std::string>("manifest", ""), base_dir);
      c.stream.data_root = resolve(s.get<std::string>("data_root", ""), base_dir);
      c.stream.base_task = s.get<std::string>("base_task", "");
      c.stream.partitions = s.get("partitions", c.stream.partitions);
      c.stream.partition_seed = s.get("partition_seed", c.stream.partition_seed);
      if (s.has("boundary") && !s.raw("boundary").is_null())
        c.stream.boundary = s.get<std::size_t>("boundary", 0);
      for (const auto& v : s.get<std::vector<std::string>>("variants", {}))
        c.stream.variants.push_back(variant_from_string(v));
      if (s.has("synthetic")) {
        const Reader y = s.sub("synthetic");
        y.allow({"num_tasks", "tasks", "task_defaults", "input_dim", "latent_dim", "label_noise",
                 "relations", "repeats", "boundary", "seed", "name"});
        auto& sp = c.stream.synthetic;
        sp.num_tasks = y.get("num_tasks", sp.num_tasks);
        if (y.has("task_defaults")) sp.task_defaults = task_spec_from(y.sub("task_defaults"), sp.task_defaults);
        if (y.has("tasks")) {
          std::size_t i = 0;
          for (const auto& t : y.raw("tasks"))
            sp.tasks.push_back(task_spec_from(Reader(t, y.at("tasks") + "[" + std::to_string(i++) + "]"),
                                              sp.task_defaults));
        }
        sp.input_dim = y.get("input_dim", sp.input_dim);
        sp.latent_dim = y.get("latent_dim", sp.latent_dim);
        sp.label_noise = y.get("label_noise", sp.label_noise);
        if (y.has("relations")) {
          std::size_t i = 0;
          for (const auto& rj : y.raw("relations")) {
            const Reader r(rj, y.at("relations") + "[" + std::to_string(i++) + "]");
            r.allow({"target", "source", "perturbation", "anti"});
            Relation rel;
            rel.target = r.get<std::size_t>("target", 0);
            rel.source = r.get<std::size_t>("source", 0);
            rel.perturbation = r.get("perturbation", rel.perturbation);
            rel.anti = r.get("anti", false);
            sp.relations.push_back(rel);
          }
        }
        sp.repeats = y.get<std::vector<std::size_t>>("repeats", {});
        if (y.has("boundary") && !y.raw("boundary").is_null()) sp.boundary = y.get<std::size_t>("boundary", 0);
        sp.seed = y.get("seed", sp.seed);
        sp.name = y.get("name", sp.name);
      }
    }
    if (root.has("learner")) {
      const Reader l = root.sub("learner");
      l.allow({"strategy", "search", "predictor", "knn", "charge_embedding_flops",
               "charge_frozen_models", "frozen_num_updates"});
      auto& lc = c.learner;
      if (l.has("strategy")) {
        if (l.raw("strategy").is_string()) {
          lc.strategy.family = family_from_string(l.get<std::string>("strategy", ""));
        } else {
          const Reader st = l.sub("strategy");
          st.allow({"family", "mt_k", "ensemble", "ensemble_temperature", "pretrained"});
          lc.strategy.family = family_from_string(st.get<std::string>("family", "indep"));
          lc.strategy.mt_k = st.get("mt_k", lc.strategy.mt_k);
          lc.strategy.ensemble = st.get("ensemble", lc.strategy.ensemble);
          lc.strategy.ensemble_temperature = st.get("ensemble_temperature", lc.strategy.ensemble_temperature);
          lc.strategy.pretrained_source = resolve(st.get<std::string>("pretrained", ""), base_dir);
        }
      }
      if (l.has("search")) {
        const Reader se = l.sub("search");
        se.allow({"kind", "space", "n_trials", "beta"});
        const auto kind = se.get<std::string>("kind", "random");
        if (kind == "random") lc.search.kind = SearchKind::kRandom;
        else if (kind == "bhpo") lc.search.kind = SearchKind::kBhpo;
        else throw ConfigError("learner.search.kind: expected random or bhpo, got '" + kind + "'");
        lc.search.space = se.get("space", lc.search.space);
        const auto n = se.get<long long>("n_trials", static_cast<long long>(lc.search.n_trials));
        if (n < 0) throw ConfigError("learner.search.n_trials: must be non-negative");
        lc.search.n_trials = static_cast<std::size_t>(n);
        lc.search.beta = se.get("beta", lc.search.beta);
      }
      if (l.has("predictor")) lc.predictor = predictor_from(l.sub("predictor"), lc.predictor);
      if (l.has("knn")) {
        const Reader k = l.sub("knn");
        k.allow({"k", "max_train", "max_val", "loo_max"});
        lc.knn.k = k.get("k", lc.knn.k);
        lc.knn.max_train = k.get("max_train", lc.knn.max_train);
        lc.knn.max_val = k.get("max_val", lc.knn.max_val);
        lc.knn.loo_max = k.get("loo_max", lc.knn.loo_max);
      }
      lc.charge_embedding_flops = l.get("charge_embedding_flops", lc.charge_embedding_flops);
      lc.charge_frozen_models = l.get("charge_frozen_models", lc.charge_frozen_models);
      lc.frozen_num_updates = l.get("frozen_num_updates", lc.frozen_num_updates);
    }
    const auto tier = root.get<std::string>("tier", "cheap");
    if (tier == "standard") c.tier = BudgetTier::kStandard;
    else if (tier == "cheap") c.tier = BudgetTier::kCheap;
    else throw ConfigError("tier: expected standard or cheap, got '" + tier + "'");
    if (root.has("phases")) {
      c.phases.clear();
      for (const auto& p : root.get<std::vector<std::string>>("phases", {})) {
        if (p != "meta_train" && p != "meta_test") throw ConfigError(phase_list_error(p));
        c.phases.push_back(phase_from_string(p));
      }
    }
    c.seed = root.get("seed", c.seed);
    c.out_dir = resolve(root.get<std::string>("out_dir", ""), base_dir);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

json to_json(const RunConfig& c) {
  json stream;
  switch (c.stream.kind) {
    case StreamSource::Kind::kManifest: stream["source"] = "manifest"; break;
    case StreamSource::Kind::kSynthetic: stream["source"] = "synthetic"; break;
    case StreamSource::Kind::kClassPartition: stream["source"] = "class_partition"; break;
  }
  stream["manifest"] = c.stream.manifest.string();
  stream["data_root"] = c.stream.data_root.string();
  stream["base_task"] = c.stream.base_task;
  stream["partitions"] = c.stream.partitions;
  stream["partition_seed"] = c.stream.partition_seed;
  stream["boundary"] = c.stream.boundary ? json(*c.stream.boundary) : json(nullptr);
  json variants = json::array();
  for (const auto& v : c.stream.variants) variants.push_back(to_string(v));
  stream["variants"] = variants;
  const auto& sp = c.stream.synthetic;
  json tasks = json::array();
  for (const auto& t : sp.tasks) tasks.push_back(to_json(t));
  json relations = json::array();
  for (const auto& r : sp.relations)
    relations.push_back({{"target", r.target}, {"source", r.source},
                         {"perturbation", r.perturbation}, {"anti", r.anti}});
  stream["synthetic"] = {{"num_tasks", sp.num_tasks},
                         {"tasks", tasks},
                         {"task_defaults", to_json(sp.task_defaults)},
                         {"input_dim", sp.input_dim},
                         {"latent_dim", sp.latent_dim},
                         {"label_noise", sp.label_noise},
                         {"relations", relations},
                         {"repeats", sp.repeats},
                         {"boundary", sp.boundary ? json(*sp.boundary) : json(nullptr)},
                         {"seed", sp.seed},
                         {"name", sp.name}};
  const auto& lc = c.learner;
  json learner = {
      {"strategy",
       {{"family", to_string(lc.strategy.family)},
        {"mt_k", lc.strategy.mt_k},
        {"ensemble", lc.strategy.ensemble},
        {"ensemble_temperature", lc.strategy.ensemble_temperature},
        {"pretrained", lc.strategy.pretrained_source.string()}}},
      {"search",
       {{"kind", lc.search.kind == SearchKind::kBhpo ? "bhpo" : "random"},
        {"space", lc.search.space},
        {"n_trials", lc.search.n_trials},
        {"beta", lc.search.beta}}},
      {"predictor", to_json(lc.predictor)},
      {"knn", {{"k", lc.knn.k}, {"max_train", lc.knn.max_train}, {"max_val", lc.knn.max_val},
                {"loo_max", lc.knn.loo_max}}},
      {"charge_embedding_flops", lc.charge_embedding_flops},
      {"charge_frozen_models", lc.charge_frozen_models},
      {"frozen_num_updates", lc.frozen_num_updates}};
  json phases = json::array();
  for (Phase p : c.phases) phases.push_back(to_string(p));
  return {{"stream", stream},
          {"learner", learner},
          {"tier", c.tier == BudgetTier::kStandard ? "standard" : "cheap"},
          {"phases", phases},
          {"seed", c.seed},
          {"out_dir", c.out_dir.string()}};
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override '" + assignment + "' must look like key.path=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
    if (!node->is_object()) {
      if (!node->is_null()) throw ConfigError("override key '" + key + "' descends into a non-object");
      *node = json::object();
    }
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  for (const auto& o : overrides) apply_override(j, o);
  RunConfig c = config_from_json(j, std::filesystem::absolute(path).parent_path());
  c.validate();
  return c;
}

Stream build_stream(const StreamSource& source) {
  Stream s;
  switch (source.kind) {
    case StreamSource::Kind::kManifest:
      s = load_stream(source.manifest, source.data_root);
      break;
    case StreamSource::Kind::kSynthetic:
      s = make_synthetic_stream(source.synthetic);
      break;
    case StreamSource::Kind::kClassPartition: {
      const Stream base = load_stream(source.manifest, source.data_root);
      const Task* task = nullptr;
      for (const auto& t : base.tasks())
        if (t.id() == source.base_task) task = &t;
      if (!task) throw ConfigError("stream.base_task: '" + source.base_task + "' is not in the manifest");
      s = make_class_partition_stream(*task, source.partitions, source.partition_seed, source.boundary);
      break;
    }
  }
  for (const auto& v : source.variants) s = apply_variant(s, v);
  return s;
}

}  // namespace taskstream
