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

#include <Eigen/Dense>
#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "taskstream/stream.hpp"
#include "taskstream/task_io.hpp"
#include "test_util.hpp"

namespace taskstream {
namespace {

using testing::TempDir;
using testing::tiny_stream;
using testing::tiny_task;

std::filesystem::path source_dir() { return TASKSTREAM_SOURCE_DIR; }

std::vector<std::string> ids_of(const Stream& s) {
  std::vector<std::string> out;
  for (const auto& t : s.tasks()) out.push_back(t.id());
  return out;
}

// Writes `stream` as prepared task files plus a manifest under `dir`.
std::filesystem::path write_prepared(const Stream& stream, const std::filesystem::path& dir) {
  Manifest m;
  m.name = "prepared";
  m.boundary = stream.boundary();
  for (std::size_t i = 0; i < stream.size(); ++i) {
    const auto& t = stream[i];
    ManifestRow row;
    row.info = t.info();
    row.meta_test = i >= stream.boundary();
    for (auto [role, split] : {std::pair{"train", &t.train()}, std::pair{"val", &t.val()},
                               std::pair{"test", &t.test()}}) {
      const auto rel = t.id() + "/" + role + ".rec";
      write_split(dir / rel, *split);
      row.files[role] = rel;
      row.checksums[role] = sha256_file(dir / rel);
    }
    m.rows.push_back(row);
  }
  write_manifest(m, dir / "manifest.jsonl");
  return dir / "manifest.jsonl";
}

TEST(LoadStream, PreservesRowOrderAndBoundary) {
  TempDir tmp;
  const Stream s = tiny_stream(5, 3);
  const auto path = write_prepared(s, tmp.path());
  const Stream loaded = load_stream(path);
  EXPECT_EQ(loaded.size(), 5u);
  EXPECT_EQ(loaded.boundary(), 3u);
  EXPECT_EQ(ids_of(loaded), ids_of(s));
  for (std::size_t i = 0; i < s.size(); ++i)
    EXPECT_EQ(encode_split(loaded[i].train()), encode_split(s[i].train()));
}

TEST(LoadStream, BoundaryBeyondRowCountIsRejected) {
  TempDir tmp;
  const auto path = write_prepared(tiny_stream(3, 3), tmp.path());
  Manifest m = read_manifest(path);
  m.boundary = 4;
  m.rows.back().meta_test = false;
  write_manifest(m, path);
  EXPECT_THROW(read_manifest(path), DataError);
  EXPECT_THROW(load_stream(path), DataError);
}

TEST(LoadStream, MissingDataNamesTheTask) {
  TempDir tmp;
  const auto path = write_prepared(tiny_stream(3, 2), tmp.path());
  std::filesystem::remove(tmp.path() / "t1" / "val.rec");
  try {
    load_stream(path);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("t1"), std::string::npos) << e.what();
  }
}

TEST(LoadStream, ChecksumMismatchIsRejected) {
  TempDir tmp;
  const auto path = write_prepared(tiny_stream(2, 1), tmp.path());
  write_split(tmp.path() / "t0" / "test.rec", tiny_task("other").test());
  EXPECT_THROW(load_stream(path), DataError);
}

TEST(LoadStream, CorruptManifestIsRejected) {
  TempDir tmp;
  std::ofstream(tmp.path() / "bad.jsonl") << "{\"record\":\"stream\",\"boundary\":1}\n{not json\n";
  EXPECT_THROW(read_manifest(tmp.path() / "bad.jsonl"), DataError);
  EXPECT_THROW(read_manifest(tmp.path() / "absent.jsonl"), DataError);
}

TEST(ShortManifest, RowsMatchTheDatasetTable) {
  const Manifest m = read_manifest(source_dir() / "data" / "short_stream.jsonl");
  EXPECT_EQ(m.rows.size(), 29u);
  const auto& mnist = m.rows[1].info;
  EXPECT_EQ(mnist.name, "MNIST");
  EXPECT_EQ(mnist.year, 2004);
  EXPECT_EQ(mnist.kind, TaskKind::kSingleLabel);
  EXPECT_EQ(mnist.domain, "ocr");
  EXPECT_EQ(mnist.sizes.train, 51000u);
  EXPECT_EQ(m.rows[9].info.kind, TaskKind::kMultiLabel);  // Pascal 2007
  EXPECT_EQ(m.rows[13].info.sizes.train, 1281167u);        // ImageNet
  std::vector<TaskInfo> infos;
  for (const auto& r : m.rows) infos.push_back(r.info);
  const auto stats = stream_statistics(infos, m.boundary);
  EXPECT_EQ(stats.meta_train + stats.meta_test, 29u);
  EXPECT_EQ(stats.multi_label, 1u);
}

TEST(Stream, ZeroBoundaryIsRejected) {
  std::vector<Task> tasks{tiny_task("a")};
  EXPECT_THROW(Stream(tasks, 0), DataError);
  EXPECT_THROW(Stream(tasks, 2), DataError);
}

TEST(Stream, DuplicateIdsAreRejected) {
  std::vector<Task> tasks{tiny_task("a"), tiny_task("a")};
  EXPECT_THROW(Stream(tasks, 1), DataError);
}

TEST(Task, OverlappingSplitsAreRejected) {
  const Task t = tiny_task("a");
  auto splits = std::make_shared<TaskSplits>(t.splits());
  splits->test.push_back(splits->train.front());
  EXPECT_THROW(Task(t.info(), splits), DataError);
}

TEST(Task, InvalidLabelsAreRejected) {
  const Task t = tiny_task("a");
  auto splits = std::make_shared<TaskSplits>(t.splits());
  splits->val.front().label = 2;
  EXPECT_THROW(Task(t.info(), splits), DataError);
}

TEST(SplitBoundary, ViewsConcatenateToTheStream) {
  const Stream s = tiny_stream(106, 79);
  const auto views = split_boundary(s);
  EXPECT_EQ(views.meta_train.size(), 79u);
  EXPECT_EQ(views.meta_test.size(), 27u);
  EXPECT_EQ(&views.meta_test.front(), &s[79]);

  const Stream full = tiny_stream(4, 4);
  EXPECT_TRUE(split_boundary(full).meta_test.empty());

  const Stream five = tiny_stream(5, 3);
  EXPECT_EQ(split_boundary(five).meta_train.size(), 3u);
  EXPECT_EQ(split_boundary(five).meta_test.size(), 2u);
}

// Least-squares one-vs-rest classifier; accuracy of a model fit on `fit`
// when applied to `eval`.
double transfer_accuracy(const Split& fit, const Split& eval, int classes) {
  const auto dim = static_cast<Eigen::Index>(fit.front().input.size());
  Eigen::MatrixXd x(fit.size(), dim + 1), y = Eigen::MatrixXd::Zero(fit.size(), classes);
  for (std::size_t i = 0; i < fit.size(); ++i) {
    for (Eigen::Index d = 0; d < dim; ++d) x(i, d) = fit[i].input[d];
    x(i, dim) = 1.0;
    y(i, fit[i].label) = 1.0;
  }
  const Eigen::MatrixXd w = x.colPivHouseholderQr().solve(y);
  int correct = 0;
  for (const auto& e : eval) {
    Eigen::RowVectorXd v(dim + 1);
    for (Eigen::Index d = 0; d < dim; ++d) v(d) = e.input[d];
    v(dim) = 1.0;
    Eigen::Index best;
    (v * w).maxCoeff(&best);
    correct += best == e.label;
  }
  return static_cast<double>(correct) / eval.size();
}

SyntheticStreamSpec related_spec() {
  SyntheticStreamSpec spec;
  spec.num_tasks = 3;
  spec.input_dim = 12;
  spec.latent_dim = 3;
  spec.task_defaults.num_classes = 3;
  spec.task_defaults.sizes = {2000, 200, 400};
  spec.relations = {{2, 0, 0.1, false}};
  spec.seed = 7;
  return spec;
}

TEST(SyntheticStream, RelatedTaskSharesTheLabelingFunction) {
  const Stream s = make_synthetic_stream(related_spec());
  ASSERT_EQ(s.size(), 3u);
  const double related = transfer_accuracy(s[0].train(), s[2].test(), 3);
  const double unrelated = transfer_accuracy(s[0].train(), s[1].test(), 3);
  EXPECT_GT(related, 0.85);
  EXPECT_LT(unrelated, 0.7);
}

TEST(SyntheticStream, SameSeedGivesIdenticalBytes) {
  const Stream a = make_synthetic_stream(related_spec());
  const Stream b = make_synthetic_stream(related_spec());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].id(), b[i].id());
    for (auto role : {SplitRole::kTrain, SplitRole::kVal, SplitRole::kTest})
      EXPECT_EQ(encode_split(a[i].splits().get(role)), encode_split(b[i].splits().get(role)));
  }
  auto other = related_spec();
  other.seed = 8;
  EXPECT_NE(encode_split(make_synthetic_stream(other)[0].train()), encode_split(a[0].train()));
}

TEST(SyntheticStream, RepeatedTaskIsAFreshSampleOfTheSameDistribution) {
  auto spec = related_spec();
  spec.num_tasks = 4;
  spec.relations.clear();
  spec.repeats = {1};
  const Stream s = make_synthetic_stream(spec);
  ASSERT_EQ(s.size(), 5u);
  EXPECT_EQ(s[4].id(), "task_01_rep0");
  EXPECT_NE(s[4].id(), s[1].id());
  EXPECT_NE(encode_split(s[4].train()), encode_split(s[1].train()));
  EXPECT_GT(transfer_accuracy(s[1].train(), s[4].test(), 3), 0.85);
}

TEST(SyntheticStream, InconsistentSpecsAreRejected) {
  auto spec = related_spec();
  spec.relations = {{0, 2, 0.1, false}};
  EXPECT_THROW(make_synthetic_stream(spec), ConfigError);
  spec = related_spec();
  spec.task_defaults.sizes.train = 5;  // < 2 * classes
  EXPECT_THROW(make_synthetic_stream(spec), ConfigError);
  spec = related_spec();
  spec.repeats = {3};
  EXPECT_THROW(make_synthetic_stream(spec), ConfigError);
}

TEST(SyntheticStream, SplitsAreDisjointForManySeeds) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto spec = related_spec();
    spec.seed = seed;
    spec.task_defaults.sizes = {60, 20, 20};
    spec.repeats = {0, 1};
    const Stream s = make_synthetic_stream(spec);
    for (const auto& t : s.tasks()) EXPECT_NO_THROW(check_disjoint(t.splits(), t.id()));
  }
}

TEST(SyntheticStream, MultiLabelTasksCarryBinaryVectors) {
  auto spec = related_spec();
  spec.task_defaults.kind = TaskKind::kMultiLabel;
  const Stream s = make_synthetic_stream(spec);
  for (const auto& e : s[0].train()) EXPECT_EQ(e.labels.size(), 3u);
}

Task many_class_task(int classes, int per_class) {
  auto splits = std::make_shared<TaskSplits>();
  int serial = 0;
  for (Split* s : {&splits->train, &splits->val, &splits->test})
    for (int c = 0; c < classes; ++c)
      for (int k = 0; k < per_class; ++k) {
        Example e;
        e.input = {static_cast<float>(serial++), static_cast<float>(c)};
        e.label = c;
        s->push_back(std::move(e));
      }
  TaskInfo info;
  info.id = "base";
  info.name = "base";
  info.num_classes = classes;
  return Task(info, splits);
}

TEST(ClassPartition, ThousandClassesIntoHundredTenWayTasks) {
  const Task base = many_class_task(1000, 1);
  const Stream s = make_class_partition_stream(base, 100, 3);
  ASSERT_EQ(s.size(), 100u);
  std::set<float> seen_classes;
  std::size_t total = 0;
  for (const auto& t : s.tasks()) {
    EXPECT_EQ(t.info().num_classes, 10);
    for (auto role : {SplitRole::kTrain, SplitRole::kVal, SplitRole::kTest}) {
      total += t.splits().get(role).size();
      for (const auto& e : t.splits().get(role)) {
        EXPECT_LT(e.label, 10);
        if (role == SplitRole::kTrain) EXPECT_TRUE(seen_classes.insert(e.input[1]).second);
      }
    }
  }
  EXPECT_EQ(seen_classes.size(), 1000u);
  EXPECT_EQ(total, 3000u);
}

TEST(ClassPartition, SinglePartitionIsTheBaseTask) {
  const Task base = many_class_task(10, 3);
  const Stream s = make_class_partition_stream(base, 1, 3);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(encode_split(s[0].train()), encode_split(base.train()));
  EXPECT_EQ(s[0].info().num_classes, 10);
}

TEST(ClassPartition, NonDivisibleClassCountIsRejected) {
  EXPECT_THROW(make_class_partition_stream(many_class_task(10, 1), 3, 0), ConfigError);
}

Stream full_sized_stream() {
  std::vector<Task> tasks;
  for (int i = 0; i < 106; ++i) {
    const std::string id = i == 40 ? "ImageNet" : "d" + std::to_string(i);
    tasks.push_back(tiny_task(id, 1990 + i / 4, i % 3 ? "object" : "ocr",
                              8 + static_cast<std::size_t>(i % 7)));
  }
  return Stream(std::move(tasks), 79);
}

TEST(ApplyVariant, RemoveFirstThirtyLeavesFortyNine) {
  const Stream s = full_sized_stream();
  const Stream v = apply_variant(s, Variant::remove_first(30));
  EXPECT_EQ(v.boundary(), 49u);
  EXPECT_EQ(v.size(), 49u + 27u);
  EXPECT_EQ(v[0].id(), s[30].id());
  EXPECT_EQ(v.meta_test().front().id(), s.meta_test().front().id());
  EXPECT_EQ(s.size(), 106u);  // input untouched
}

TEST(ApplyVariant, ExcludeImageNetLeavesSeventyEight) {
  const Stream v = apply_variant(full_sized_stream(), Variant::exclude_named({"ImageNet"}));
  EXPECT_EQ(v.boundary(), 78u);
  for (const auto& t : v.tasks()) EXPECT_NE(t.id(), "ImageNet");
  EXPECT_THROW(apply_variant(full_sized_stream(), Variant::exclude_named({"Nope"})),
               ConfigError);
}

TEST(ApplyVariant, RemoveLastAndRandomOnlyTouchMetaTrain) {
  const Stream s = full_sized_stream();
  for (const Variant& var : {Variant::remove_last(30), Variant::remove_random(30, 4)}) {
    const Stream v = apply_variant(s, var);
    EXPECT_EQ(v.boundary(), 49u);
    ASSERT_EQ(v.meta_test().size(), 27u);
    for (std::size_t i = 0; i < 27; ++i) EXPECT_EQ(v.meta_test()[i].id(), s.meta_test()[i].id());
  }
  EXPECT_EQ(apply_variant(s, Variant::remove_last(30)).meta_train().back().id(), s[48].id());
}

TEST(ApplyVariant, RemoveFirstComposes) {
  const Stream s = full_sized_stream();
  const Stream twice = apply_variant(apply_variant(s, Variant::remove_first(10)),
                                     Variant::remove_first(15));
  EXPECT_EQ(ids_of(twice), ids_of(apply_variant(s, Variant::remove_first(25))));
  EXPECT_EQ(twice.boundary(), 54u);
}

TEST(ApplyVariant, OversizedRemovalIsRejected) {
  const Stream s = full_sized_stream();
  EXPECT_THROW(apply_variant(s, Variant::remove_first(79)), ConfigError);
  EXPECT_THROW(apply_variant(s, Variant::remove_random(200, 1)), ConfigError);
}

TEST(ApplyVariant, WithinYearShuffleOfSingletonYearsIsIdentity) {
  const Stream s = tiny_stream(12, 9);
  EXPECT_EQ(ids_of(apply_variant(s, Variant::within_year_shuffle(5))), ids_of(s));
}

TEST(ApplyVariant, ShufflesPreserveTheMultisetOfTasks) {
  const Stream s = full_sized_stream();
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    for (const Variant& var : {Variant::full_shuffle(seed), Variant::within_year_shuffle(seed)}) {
      const Stream v = apply_variant(s, var);
      auto a = ids_of(v), b = ids_of(s);
      EXPECT_NE(a, b);
      std::sort(a.begin(), a.end());
      std::sort(b.begin(), b.end());
      EXPECT_EQ(a, b);
      EXPECT_EQ(v.boundary(), s.boundary());
    }
    const Stream within = apply_variant(s, Variant::within_year_shuffle(seed));
    for (std::size_t i = 0; i < s.size(); ++i)
      EXPECT_EQ(within[i].info().year, s[i].info().year);
  }
}

TEST(ApplyVariant, DomainFilterAndKeepLargest) {
  const Stream s = full_sized_stream();
  const Stream ocr = apply_variant(s, Variant::filter_domains({"ocr"}));
  for (const auto& t : ocr.meta_train()) EXPECT_EQ(t.info().domain, "ocr");
  EXPECT_EQ(ocr.meta_test().size(), 27u);
  EXPECT_THROW(apply_variant(s, Variant::filter_domains({"satellite"})), ConfigError);

  const Stream large = apply_variant(s, Variant::keep_largest(40));
  EXPECT_EQ(large.boundary(), 40u);
  std::size_t smallest_kept = SIZE_MAX;
  for (const auto& t : large.meta_train()) smallest_kept = std::min(smallest_kept, t.info().sizes.train);
  std::size_t dropped_larger = 0;
  for (const auto& t : s.meta_train())
    if (t.info().sizes.train > smallest_kept) ++dropped_larger;
  EXPECT_LE(dropped_larger, 40u);
}

TEST(ApplyVariant, ParsesFromText) {
  for (const Variant& v : {Variant::remove_random(3, 9), Variant::exclude_named({"a", "b"}),
                           Variant::within_year_shuffle(2)}) {
    EXPECT_EQ(to_string(variant_from_string(to_string(v))), to_string(v));
  }
  EXPECT_THROW(variant_from_string("rotate(3)"), ConfigError);
}

TEST(Buckets, SizeBucketsAreLeftClosed) {
  EXPECT_EQ(size_bucket(999), "<1k");
  EXPECT_EQ(size_bucket(1000), "1k-10k");
  EXPECT_EQ(size_bucket(10000), "10k-100k");
  EXPECT_EQ(size_bucket(100000), ">=100k");
  EXPECT_EQ(resolution_bucket({28, 28}), "<64");
  EXPECT_EQ(resolution_bucket({64, 300}), "64-128");
  EXPECT_EQ(resolution_bucket({406, 473}), ">=256");
}

}  // namespace
}  // namespace taskstream
