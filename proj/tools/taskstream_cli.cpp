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

#include <fcntl.h>
#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "taskstream/analysis.hpp"
#include "taskstream/config.hpp"
#include "taskstream/metalearner.hpp"
#include "taskstream/plots.hpp"
#include "taskstream/protocol.hpp"
#include "taskstream/registry.hpp"
#include "taskstream/task_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace taskstream;

namespace {

constexpr const char* kResolvedConfig = "config.resolved.json";
constexpr const char* kLockName = ".lock";

class DirectoryLock {
 public:
  explicit DirectoryLock(const fs::path& dir) : path_(dir / kLockName) {
    fs::create_directories(dir);
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0)
      throw ConfigError("output directory " + dir.string() +
                        " is locked by another invocation (remove " + path_.string() +
                        " if that process is gone)");
    const std::string pid = std::to_string(::getpid()) + "\n";
    if (::write(fd, pid.data(), pid.size()) < 0) {
      ::close(fd);
      throw DataError("cannot write " + path_.string());
    }
    ::close(fd);
  }
  ~DirectoryLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  fs::path path_;
};

std::string fmt_flops(Flops f) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", static_cast<double>(f));
  return buf;
}

void print_summaries(const std::string& label, const std::vector<PassSummary>& summaries) {
  for (const auto& s : summaries)
    std::cout << label << "  " << to_string(s.pass) << "  E=" << format_double(s.error)
              << "  cFLOP=" << s.cflop << " (" << fmt_flops(s.cflop) << ")  tasks=" << s.tasks
              << "\n";
}

json header_config(RunConfig c) {
  c.out_dir.clear();
  return to_json(c);
}

int execute(const RunConfig& config, bool resume, std::optional<std::size_t> stop_after) {
  const fs::path out = config.out_dir;
  DirectoryLock lock(out);
  const Stream stream = build_stream(config.stream);
  StrategyLearner learner(config.learner);
  RunOptions options;
  options.phases = config.phases;
  options.seed = config.seed;
  options.out_dir = out;
  options.stop_after = stop_after;
  options.header_extra = {{"config", header_config(config)}};
  const RunResult r = run_protocol(stream, learner, options, resume);
  std::cout << "ran " << r.tasks_run << " task(s); log: " << (out / kRecordLogName).string() << "\n";
  print_summaries(learner.name(), r.summaries);
  if (!r.complete)
    std::cout << "stopped before completion; continue with: resume --out " << out.string() << "\n";
  return 0;
}

int cmd_run(const std::string& config_path, const std::vector<std::string>& sets,
            const std::string& out, std::optional<std::uint64_t> seed,
            std::optional<std::size_t> stop_after) {
  std::vector<std::string> overrides = sets;
  if (!out.empty()) overrides.push_back("out_dir=" + json(fs::absolute(out).string()).dump());
  if (seed) overrides.push_back("seed=" + std::to_string(*seed));
  const RunConfig config = load_config(config_path, overrides);
  if (config.out_dir.empty()) throw ConfigError("out_dir: required (set it in the config or pass --out)");
  if (fs::exists(config.out_dir / kCheckpointName))
    throw ConfigError("out_dir: " + config.out_dir.string() +
                      " already holds a run; use 'resume' or pick another directory");
  fs::create_directories(config.out_dir);
  write_file_atomic(config.out_dir / kResolvedConfig, to_json(config).dump(2) + "\n");
  return execute(config, false, stop_after);
}

int cmd_resume(const std::string& out, std::optional<std::size_t> stop_after) {
  const fs::path dir = fs::absolute(out);
  const fs::path cfg = dir / kResolvedConfig;
  if (!fs::exists(cfg)) throw ConfigError("no " + std::string(kResolvedConfig) + " in " + dir.string());
  RunConfig config = load_config(cfg);
  config.out_dir = dir;
  return execute(config, true, stop_after);
}

int cmd_fetch(std::vector<std::string> ids, const std::string& descriptors, const std::string& cache_flag,
              bool prepare_data, const std::string& manifest_out, std::optional<std::size_t> boundary) {
  const auto all = read_descriptors(descriptors);
  if (ids.empty())
    for (const auto& d : all) ids.push_back(d.id);
  const fs::path cache = cache_flag.empty() ? default_cache_dir() : fs::path(cache_flag);
  FetchOptions options;
  options.log = [](const std::string& m) { std::cerr << m << "\n"; };
  Manifest manifest;
  manifest.name = "prepared";
  for (const auto& id : ids) {
    const auto& d = find_descriptor(all, id);
    const auto dir = fetch(d, cache, options);
    std::cout << id << ": archives in " << dir.string() << "\n";
    if (!prepare_data) continue;
    const Task t = prepare(d, cache);
    std::cout << id << ": prepared train/val/test = " << t.train().size() << "/" << t.val().size()
              << "/" << t.test().size() << "\n";
    manifest.rows.push_back(read_prepared_row(cache, id));
  }
  if (prepare_data) {
    std::stable_sort(manifest.rows.begin(), manifest.rows.end(),
                     [](const ManifestRow& a, const ManifestRow& b) { return a.info.year < b.info.year; });
    manifest.boundary = boundary.value_or(manifest.rows.size());
    if (manifest.boundary == 0 || manifest.boundary > manifest.rows.size())
      throw ConfigError("--boundary must lie in [1, " + std::to_string(manifest.rows.size()) + "]");
    for (std::size_t i = 0; i < manifest.rows.size(); ++i) manifest.rows[i].meta_test = i >= manifest.boundary;
    const fs::path path = manifest_out.empty() ? prepared_dir(cache) / "manifest.jsonl" : fs::path(manifest_out);
    write_manifest(manifest, path);
    std::cout << "manifest: " << path.string() << "\n";
  }
  return 0;
}

int cmd_stream_info(const std::string& config_path, const std::string& manifest_path,
                    const std::string& data_root, bool as_json) {
  std::vector<TaskInfo> infos;
  std::size_t boundary = 0;
  std::string name;
  if (!config_path.empty()) {
    const RunConfig c = load_config(config_path);
    const Stream s = build_stream(c.stream);
    for (const auto& t : s.tasks()) infos.push_back(t.info());
    boundary = s.boundary();
    name = s.name();
  } else if (!manifest_path.empty()) {
    if (!data_root.empty()) {
      const Stream s = load_stream(manifest_path, data_root);
      for (const auto& t : s.tasks()) infos.push_back(t.info());
      boundary = s.boundary();
      name = s.name();
    } else {
      const Manifest m = read_manifest(manifest_path);
      for (const auto& r : m.rows) infos.push_back(r.info);
      boundary = m.boundary;
      name = m.name;
    }
  } else {
    throw ConfigError("stream info needs --config or --manifest");
  }
  const auto st = stream_statistics(infos, boundary);
  json j = {{"name", name},
            {"tasks", st.num_tasks},
            {"meta_train", st.meta_train},
            {"meta_test", st.meta_test},
            {"multi_label", st.multi_label},
            {"total_train_examples", st.total_train_examples},
            {"per_year", json::object()},
            {"per_domain", st.tasks_per_domain},
            {"per_size_bucket", st.tasks_per_size_bucket}};
  for (const auto& [y, n] : st.tasks_per_year) j["per_year"][std::to_string(y)] = n;
  if (as_json) {
    std::cout << j.dump(2) << "\n";
    return 0;
  }
  std::cout << "stream " << name << ": " << st.num_tasks << " tasks (" << st.meta_train
            << " meta-train, " << st.meta_test << " meta-test), " << st.multi_label
            << " multi-label, " << st.total_train_examples << " training examples\n";
  std::cout << "per year:";
  for (const auto& [y, n] : st.tasks_per_year) std::cout << " " << y << ":" << n;
  std::cout << "\nper domain:";
  for (const auto& [d, n] : st.tasks_per_domain) std::cout << " " << d << ":" << n;
  std::cout << "\nper size bucket:";
  for (const auto& [b, n] : st.tasks_per_size_bucket) std::cout << " " << b << ":" << n;
  std::cout << "\n";
  return 0;
}

std::string strategy_of(const RecordLog& log) { return log.header.value("strategy", std::string("?")); }

const PassSummary* find_summary(const RecordLog& log, Phase pass) {
  for (const auto& s : log.summaries)
    if (s.pass == pass) return &s;
  return nullptr;
}

std::vector<RunRecord> pass_records(const RecordLog& log, Phase pass) {
  std::vector<RunRecord> out;
  for (const auto& r : log.records)
    if (r.pass == pass) out.push_back(r);
  return out;
}

int cmd_report(const std::vector<std::string>& logs, const std::vector<std::string>& slices,
               const std::string& out) {
  std::vector<std::vector<std::string>> rows;
  std::map<std::string, std::vector<std::vector<std::string>>> slice_rows;
  for (const auto& path : logs) {
    const RecordLog log = read_record_log(path);
    for (const auto& s : log.summaries) {
      rows.push_back({strategy_of(log), to_string(s.pass), format_double(s.error),
                      std::to_string(s.cflop), std::to_string(s.tasks), path});
      for (const auto& k : slices) {
        const SliceKind kind = slice_from_string(k);
        for (const auto& [key, a] : slice_pass(log.records, s.pass, kind))
          slice_rows[k].push_back({strategy_of(log), to_string(s.pass), key, format_double(a.error),
                                   std::to_string(a.cflop), std::to_string(a.tasks)});
      }
    }
  }
  const std::vector<std::string> header{"strategy", "pass", "E", "cFLOP", "tasks", "log"};
  const std::vector<std::string> slice_header{"strategy", "pass", "slice", "E", "cFLOP", "tasks"};
  auto print = [](const std::vector<std::string>& h, const std::vector<std::vector<std::string>>& r) {
    for (std::size_t i = 0; i < h.size(); ++i) std::cout << (i ? "," : "") << h[i];
    std::cout << "\n";
    for (const auto& row : r) {
      for (std::size_t i = 0; i < row.size(); ++i) std::cout << (i ? "," : "") << row[i];
      std::cout << "\n";
    }
  };
  print(header, rows);
  for (const auto& [k, r] : slice_rows) {
    std::cout << "\n# slice: " << k << "\n";
    print(slice_header, r);
  }
  if (!out.empty()) {
    write_csv(fs::path(out) / "summary.csv", header, rows);
    for (const auto& [k, r] : slice_rows) write_csv(fs::path(out) / ("slice_" + k + ".csv"), slice_header, r);
  }
  return 0;
}

int cmd_plot(const std::string& kind, const std::vector<std::string>& logs, const std::string& reference,
             const std::string& config_path, const std::string& out, const std::string& pass_name,
             std::optional<std::uint64_t> seed) {
  if (out.empty()) throw ConfigError("plot: --out is required");
  const Phase pass = phase_from_string(pass_name);
  if (kind == "pareto") {
    if (logs.empty()) throw ConfigError("plot pareto: at least one record log is required");
    std::vector<ParetoPoint> points;
    for (const auto& path : logs) {
      const RecordLog log = read_record_log(path);
      const PassSummary* s = find_summary(log, pass);
      if (!s) throw DataError(path + ": no " + to_string(pass) + " summary");
      points.push_back({strategy_of(log), s->error, s->cflop});
    }
    write_text(out, svg_pareto(points, "error vs compute (" + to_string(pass) + ")"));
    for (const auto& p : pareto_front(points))
      std::cout << "front: " << p.label << " E=" << format_double(p.error) << " cFLOP=" << p.flops << "\n";
    return 0;
  }
  if (kind == "regret" || kind == "fwt") {
    if (reference.empty()) throw ConfigError("plot " + kind + ": --reference is required");
    if (logs.empty()) throw ConfigError("plot " + kind + ": at least one record log is required");
    const RecordLog ref = read_record_log(reference);
    const auto ref_records = pass_records(ref, pass);
    std::vector<Series> series;
    for (const auto& path : logs) {
      const RecordLog log = read_record_log(path);
      const auto records = pass_records(log, pass);
      Series s{strategy_of(log), {}, {}};
      if (kind == "regret") {
        const auto curve = regret_curve(records, ref_records);
        for (std::size_t i = 0; i < curve.size(); ++i) {
          s.x.push_back(static_cast<double>(i + 1));
          s.y.push_back(curve[i]);
        }
      } else {
        regret_curve(records, ref_records);  // same task sequence check
        for (std::size_t i = 0; i < records.size(); ++i) {
          std::optional<double> f;
          if (!records[i].learning_curve.empty() && !ref_records[i].learning_curve.empty())
            f = forward_transfer(ref_records[i].learning_curve, records[i].learning_curve);
          s.x.push_back(static_cast<double>(i + 1));
          s.y.push_back(f ? *f : std::numeric_limits<double>::quiet_NaN());
        }
        s.line = false;
        s.markers = true;
      }
      for (std::size_t i = 0; i < s.y.size(); ++i)
        std::cout << s.label << "," << (i + 1) << "," << format_double(s.y[i]) << "\n";
      series.push_back(std::move(s));
    }
    PlotOptions opt;
    opt.title = kind == "regret" ? "cumulative regret vs " + strategy_of(ref)
                                 : "forward transfer vs " + strategy_of(ref);
    opt.x_label = "task position";
    opt.y_label = kind == "regret" ? "cumulative error difference" : "FWT";
    write_text(out, svg_plot(series, opt));
    return 0;
  }
  if (kind == "transfer") {
    if (config_path.empty()) throw ConfigError("plot transfer: --config is required");
    const RunConfig c = load_config(config_path);
    const Stream s = build_stream(c.stream);
    TransferOptions o{c.learner.search, c.learner.predictor};
    const auto m = transfer_matrix(s, o, seed.value_or(c.seed));
    write_text(out, svg_heatmap(m, "transfer matrix (reference minus fine-tuned test error)"));
    std::vector<std::vector<std::string>> rows;
    for (const auto& [ij, d] : m.delta)
      rows.push_back({m.task_ids[ij.first], m.task_ids[ij.second], format_double(d)});
    auto csv = fs::path(out);
    csv.replace_extension(".csv");
    write_csv(csv, {"source", "target", "delta"}, rows);
    std::cout << "runs=" << m.runs << " trainings=" << m.trainings << " cells=" << m.delta.size() << "\n";
    return 0;
  }
  throw ConfigError("plot: unknown kind '" + kind + "' (expected pareto, regret, fwt or transfer)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compute-aware never-ending learning harness"};
  app.require_subcommand(1);

  std::string config_path, out, descriptors = "data/descriptors.json", cache, manifest_out, manifest,
                           data_root, reference, pass = "meta_test";
  std::vector<std::string> sets, ids, logs, slices;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> stop_after, boundary;
  bool no_prepare = false, as_json = false;
  std::string plot_kind;

  auto* fetch_cmd = app.add_subcommand("fetch", "download, verify and prepare datasets");
  fetch_cmd->add_option("ids", ids, "descriptor ids (default: all)");
  fetch_cmd->add_option("--descriptors", descriptors, "descriptor list")->capture_default_str();
  fetch_cmd->add_option("--cache", cache, "cache root (default: $TASKSTREAM_CACHE or ~/.cache/taskstream)");
  fetch_cmd->add_flag("--no-prepare", no_prepare, "only download and verify");
  fetch_cmd->add_option("--manifest-out", manifest_out, "manifest for the prepared tasks");
  fetch_cmd->add_option("--boundary", boundary, "meta-test boundary of the written manifest");

  auto* stream_cmd = app.add_subcommand("stream", "stream inspection");
  stream_cmd->require_subcommand(1);
  auto* info_cmd = stream_cmd->add_subcommand("info", "print stream statistics");
  info_cmd->add_option("--config", config_path, "run config");
  info_cmd->add_option("--manifest", manifest, "stream manifest");
  info_cmd->add_option("--data-root", data_root, "load and verify the split files under this root");
  info_cmd->add_flag("--json", as_json, "JSON output");

  auto* run_cmd = app.add_subcommand("run", "run the protocol for a config");
  run_cmd->add_option("config", config_path, "run config (JSON)")->required();
  run_cmd->add_option("--set", sets, "override, e.g. learner.search.n_trials=4");
  run_cmd->add_option("--out", out, "output directory");
  run_cmd->add_option("--seed", seed, "run seed");
  run_cmd->add_option("--stop-after", stop_after, "stop after this many tasks");

  auto* resume_cmd = app.add_subcommand("resume", "continue an interrupted run");
  resume_cmd->add_option("--out", out, "output directory of the run")->required();
  resume_cmd->add_option("--stop-after", stop_after, "stop after this many tasks");

  auto* report_cmd = app.add_subcommand("report", "E/cFLOP tables from record logs");
  report_cmd->add_option("logs", logs, "record logs")->required();
  report_cmd->add_option("--slice", slices, "domain, size or resolution");
  report_cmd->add_option("--out", out, "directory for CSV tables");

  auto* plot_cmd = app.add_subcommand("plot", "SVG figures");
  plot_cmd->add_option("kind", plot_kind, "pareto, regret, fwt or transfer")->required();
  plot_cmd->add_option("logs", logs, "record logs");
  plot_cmd->add_option("--reference", reference, "reference record log (regret, fwt)");
  plot_cmd->add_option("--config", config_path, "run config (transfer)");
  plot_cmd->add_option("--pass", pass, "meta_train or meta_test")->capture_default_str();
  plot_cmd->add_option("--seed", seed, "seed (transfer)");
  plot_cmd->add_option("--out", out, "output SVG")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*fetch_cmd) return cmd_fetch(ids, descriptors, cache, !no_prepare, manifest_out, boundary);
    if (*info_cmd) return cmd_stream_info(config_path, manifest, data_root, as_json);
    if (*run_cmd) return cmd_run(config_path, sets, out, seed, stop_after);
    if (*resume_cmd) return cmd_resume(out, stop_after);
    if (*report_cmd) return cmd_report(logs, slices, out);
    if (*plot_cmd) return cmd_plot(plot_kind, logs, reference, config_path, out, pass, seed);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
