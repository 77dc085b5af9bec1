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

#include "taskstream/protocol.hpp"

#include <chrono>
#include <fstream>

#include "taskstream/task_io.hpp"

namespace taskstream {

using nlohmann::json;

const Task& CausalView::task(const std::string& id) const {
  for (std::size_t j = 0; j < stream_->size(); ++j)
    if ((*stream_)[j].id() == id) return task(j);
  throw DataError("no task '" + id + "' in stream " + stream_->name());
}

std::string to_string(Phase p) { return p == Phase::kMetaTrain ? "meta_train" : "meta_test"; }

Phase phase_from_string(const std::string& s) {
  if (s == "meta_train") return Phase::kMetaTrain;
  if (s == "meta_test") return Phase::kMetaTest;
  throw ConfigError("unknown phase '" + s + "' (expected meta_train or meta_test)");
}

namespace {

json hparams_to_json(const HParams& h) {
  json j = json::object();
  for (const auto& [k, v] : h) {
    if (const auto* d = std::get_if<double>(&v)) j[k] = *d;
    else j[k] = std::get<std::string>(v);
  }
  return j;
}

HParams hparams_from_json(const json& j) {
  HParams h;
  for (const auto& [k, v] : j.items()) {
    if (v.is_number()) h[k] = v.get<double>();
    else h[k] = v.get<std::string>();
  }
  return h;
}

}  // namespace

json to_json(const RunRecord& r) {
  json curve = json::array();
  for (const auto& p : r.learning_curve) curve.push_back({p.step, p.accuracy});
  return {{"record", "task"},
          {"schema_version", kRecordSchemaVersion},
          {"pass", to_string(r.pass)},
          {"position", r.position},
          {"task_id", r.task_id},
          {"strategy", r.strategy},
          {"hparams", hparams_to_json(r.hparams)},
          {"init_provenance", r.provenance},
          {"error", r.error},
          {"val_error", r.val_error},
          {"flops", r.flops},
          {"learning_curve", curve},
          {"seed", r.seed},
          {"wall_time", r.wall_time},
          {"n_trials", r.n_trials},
          {"domain", r.domain},
          {"kind", to_string(r.kind)},
          {"year", r.year},
          {"train_size", r.train_size},
          {"resolution", {r.resolution.height, r.resolution.width}},
          {"meta_test_task", r.meta_test_task}};
}

RunRecord record_from_json(const json& j) {
  try {
    const int version = j.at("schema_version").get<int>();
    if (version != kRecordSchemaVersion)
      throw DataError("record schema version " + std::to_string(version) +
                      " is not supported (expected " + std::to_string(kRecordSchemaVersion) + ")");
    RunRecord r;
    r.pass = phase_from_string(j.at("pass").get<std::string>());
    r.position = j.at("position").get<std::size_t>();
    r.task_id = j.at("task_id").get<std::string>();
    r.strategy = j.at("strategy").get<std::string>();
    r.hparams = hparams_from_json(j.at("hparams"));
    r.provenance = j.at("init_provenance").get<std::string>();
    r.error = j.at("error").get<double>();
    r.val_error = j.at("val_error").get<double>();
    r.flops = j.at("flops").get<Flops>();
    for (const auto& p : j.at("learning_curve"))
      r.learning_curve.push_back({p.at(0).get<std::int64_t>(), p.at(1).get<double>()});
    r.seed = j.at("seed").get<std::uint64_t>();
    r.wall_time = j.at("wall_time").get<double>();
    r.n_trials = j.at("n_trials").get<std::size_t>();
    r.domain = j.at("domain").get<std::string>();
    r.kind = task_kind_from_string(j.at("kind").get<std::string>());
    r.year = j.at("year").get<int>();
    r.train_size = j.at("train_size").get<std::size_t>();
    r.resolution = {j.at("resolution").at(0).get<int>(), j.at("resolution").at(1).get<int>()};
    r.meta_test_task = j.at("meta_test_task").get<bool>();
    if (!(r.error >= 0.0 && r.error <= 1.0)) throw DataError("record error outside [0, 1]");
    return r;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed task record: ") + e.what());
  }
}

json to_json(const PassSummary& s) {
  return {{"record", "summary"},      {"schema_version", kRecordSchemaVersion},
          {"pass", to_string(s.pass)}, {"E", s.error},
          {"cFLOP", s.cflop},          {"tasks", s.tasks}};
}

PassSummary summary_from_json(const json& j) {
  try {
    PassSummary s;
    s.pass = phase_from_string(j.at("pass").get<std::string>());
    s.error = j.at("E").get<double>();
    s.cflop = j.at("cFLOP").get<Flops>();
    s.tasks = j.at("tasks").get<std::size_t>();
    return s;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed summary record: ") + e.what());
  }
}

std::uint64_t task_seed(std::uint64_t run_seed, Phase pass, std::size_t position) {
  return derive_seed(run_seed, pass == Phase::kMetaTrain ? 1 : 2, position);
}

namespace {

std::size_t pass_length(const Stream& stream, Phase pass) {
  return pass == Phase::kMetaTrain ? stream.boundary() : stream.size();
}

RunRecord run_one(const Stream& stream, MetaLearner& learner, Phase pass, std::size_t position,
                  std::uint64_t run_seed) {
  const auto start = std::chrono::steady_clock::now();
  const CausalView view(stream, position);
  const std::uint64_t seed = task_seed(run_seed, pass, position);
  TaskOutcome out = learner.learn(view, seed);
  const Task& task = stream[position];
  RunRecord r;
  r.pass = pass;
  r.position = position;
  r.task_id = task.id();
  r.strategy = learner.name();
  r.hparams = std::move(out.hparams);
  r.provenance = std::move(out.provenance);
  r.val_error = out.val_error;
  r.error = pass == Phase::kMetaTrain ? out.val_error : out.error_on(task.test());
  r.flops = out.flops;
  r.learning_curve = std::move(out.learning_curve);
  r.seed = seed;
  r.n_trials = out.n_trials;
  r.domain = task.info().domain;
  r.kind = task.info().kind;
  r.year = task.info().year;
  r.train_size = task.train().size();
  r.resolution = task.info().avg_resolution;
  r.meta_test_task = position >= stream.boundary();
  r.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

PassSummary summarise(const Stream& stream, Phase pass, const std::vector<RunRecord>& records) {
  PassSummary s;
  s.pass = pass;
  double sum = 0.0;
  std::size_t scored = 0;
  for (const auto& r : records) {
    if (r.pass != pass) continue;
    s.cflop += r.flops;
    ++s.tasks;
    if (pass == Phase::kMetaTrain || r.position >= stream.boundary()) {
      sum += r.error;
      ++scored;
    }
  }
  s.error = scored ? sum / static_cast<double>(scored) : 0.0;
  return s;
}

PassResult run_pass(const Stream& stream, MetaLearner& learner, Phase pass,
                    std::uint64_t seed) {
  if (stream.boundary() == 0 || stream.boundary() > stream.size())
    throw ConfigError("stream boundary must lie in [1, size]");
  learner.reset();
  PassResult result;
  for (std::size_t i = 0; i < pass_length(stream, pass); ++i)
    result.records.push_back(run_one(stream, learner, pass, i, seed));
  result.summary = summarise(stream, pass, result.records);
  return result;
}

}  // namespace

PassResult run_meta_train(const Stream& stream, MetaLearner& learner, std::uint64_t seed) {
  return run_pass(stream, learner, Phase::kMetaTrain, seed);
}

PassResult run_meta_test(const Stream& stream, MetaLearner& learner, std::uint64_t seed) {
  return run_pass(stream, learner, Phase::kMetaTest, seed);
}

namespace {

struct Progress {
  std::size_t phase_index = 0;
  std::size_t position = 0;
  bool complete = false;
  std::vector<json> lines;
};

json checkpoint_header(const Stream& stream, const MetaLearner& learner,
                       const RunOptions& options, const Progress& p) {
  json phases = json::array();
  for (auto ph : options.phases) phases.push_back(to_string(ph));
  return {{"version", 1},
          {"stream", stream.name()},
          {"stream_size", stream.size()},
          {"boundary", stream.boundary()},
          {"strategy", learner.name()},
          {"seed", options.seed},
          {"phases", phases},
          {"phase_index", p.phase_index},
          {"position", p.position},
          {"complete", p.complete},
          {"lines", p.lines}};
}

void save_checkpoint(const std::filesystem::path& path, const json& header,
                     const MetaLearner& learner) {
  const auto text = header.dump();
  std::vector<Blob> blobs;
  blobs.emplace_back("header", std::vector<std::uint8_t>(text.begin(), text.end()));
  blobs.emplace_back("learner", learner.save_state());
  write_file_atomic(path, encode_blobs(blobs));
}

std::string join_lines(const std::vector<json>& lines) {
  std::string out;
  for (const auto& l : lines) out += l.dump() + "\n";
  return out;
}

void append_line(const std::filesystem::path& path, const json& line) {
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) throw DataError("cannot append to " + path.string());
  out << line.dump() << "\n";
  out.flush();
  if (!out) throw DataError("write failed on " + path.string());
}

}  // namespace

RunResult run_protocol(const Stream& stream, MetaLearner& learner, const RunOptions& options,
                       bool resume) {
  if (stream.boundary() == 0 || stream.boundary() > stream.size())
    throw ConfigError("stream boundary must lie in [1, size]");
  if (options.phases.empty()) throw ConfigError("no phases requested");
  if (options.out_dir.empty()) throw ConfigError("run needs an output directory");
  std::filesystem::create_directories(options.out_dir);
  const auto log_path = options.out_dir / kRecordLogName;
  const auto ckpt_path = options.out_dir / kCheckpointName;

  Progress p;
  RunResult result;
  bool loaded = false;
  if (resume && std::filesystem::exists(ckpt_path)) {
    const auto blobs = decode_blobs(read_file_bytes(ckpt_path));
    if (blobs.size() != 2 || blobs[0].first != "header" || blobs[1].first != "learner")
      throw DataError("corrupt checkpoint " + ckpt_path.string());
    json h;
    try {
      h = json::parse(std::string(blobs[0].second.begin(), blobs[0].second.end()));
    } catch (const json::exception& e) {
      throw DataError("corrupt checkpoint header: " + std::string(e.what()));
    }
    if (h.value("version", 0) != 1) throw DataError("unsupported checkpoint version");
    const json expected = checkpoint_header(stream, learner, options, p);
    for (const char* key : {"stream", "stream_size", "boundary", "strategy", "seed", "phases"})
      if (h.at(key) != expected.at(key))
        throw ConfigError(std::string("checkpoint does not match this run (") + key + " differs)");
    p.phase_index = h.at("phase_index").get<std::size_t>();
    p.position = h.at("position").get<std::size_t>();
    p.complete = h.at("complete").get<bool>();
    p.lines = h.at("lines").get<std::vector<json>>();
    learner.load_state(blobs[1].second);
    write_file_atomic(log_path, join_lines(p.lines));
    loaded = true;
  }
  if (!loaded) {
    json header = {{"record", "header"},
                   {"schema_version", kRecordSchemaVersion},
                   {"stream", stream.name()},
                   {"boundary", stream.boundary()},
                   {"strategy", learner.name()},
                   {"seed", options.seed}};
    for (const auto& [k, v] : options.header_extra.items()) header[k] = v;
    p.lines = {header};
    learner.reset();
    save_checkpoint(ckpt_path, checkpoint_header(stream, learner, options, p), learner);
    write_file_atomic(log_path, join_lines(p.lines));
  }

  auto collect = [&] {
    result.records.clear();
    result.summaries.clear();
    for (const auto& l : p.lines) {
      const auto kind = l.value("record", std::string());
      if (kind == "task") result.records.push_back(record_from_json(l));
      else if (kind == "summary") result.summaries.push_back(summary_from_json(l));
    }
  };

  while (!p.complete) {
    const Phase pass = options.phases[p.phase_index];
    if (p.position == 0) learner.reset();
    std::vector<bool> visited(stream.size(), false);
    for (const auto& l : p.lines)
      if (l.value("record", std::string()) == "task" && l.at("pass") == to_string(pass))
        visited[l.at("position").get<std::size_t>()] = true;
    const std::size_t n = pass_length(stream, pass);
    while (p.position < n) {
      if (options.stop_after && result.tasks_run >= *options.stop_after) {
        collect();
        return result;
      }
      if (visited[p.position])
        throw Error("protocol error: task " + std::to_string(p.position) + " revisited");
      const RunRecord rec = run_one(stream, learner, pass, p.position, options.seed);
      visited[p.position] = true;
      const json line = to_json(rec);
      p.lines.push_back(line);
      ++p.position;
      ++result.tasks_run;
      save_checkpoint(ckpt_path, checkpoint_header(stream, learner, options, p), learner);
      append_line(log_path, line);
    }
    std::vector<RunRecord> pass_records;
    for (const auto& l : p.lines)
      if (l.value("record", std::string()) == "task" && l.at("pass") == to_string(pass))
        pass_records.push_back(record_from_json(l));
    const json line = to_json(summarise(stream, pass, pass_records));
    p.lines.push_back(line);
    p.position = 0;
    ++p.phase_index;
    p.complete = p.phase_index == options.phases.size();
    save_checkpoint(ckpt_path, checkpoint_header(stream, learner, options, p), learner);
    append_line(log_path, line);
  }
  collect();
  result.complete = true;
  return result;
}

RecordLog read_record_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read record log " + path.string());
  RecordLog log;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
    const int version = j.value("schema_version", -1);
    if (version != kRecordSchemaVersion)
      throw DataError(path.string() + ":" + std::to_string(n) + ": record schema version " +
                      std::to_string(version) + " is not supported");
    const auto kind = j.value("record", std::string());
    if (kind == "header") log.header = j;
    else if (kind == "task") log.records.push_back(record_from_json(j));
    else if (kind == "summary") log.summaries.push_back(summary_from_json(j));
    else throw DataError(path.string() + ":" + std::to_string(n) + ": unknown record kind");
  }
  if (log.header.is_null()) throw DataError(path.string() + ": missing header record");
  return log;
}

}  // namespace taskstream
