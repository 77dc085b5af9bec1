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

#include <fstream>
#include <set>

#include "registry_fixtures.hpp"
#include "taskstream/registry.hpp"
#include "taskstream/task_io.hpp"
#include "test_util.hpp"

namespace taskstream {
namespace {

using testing::TempDir;

std::set<std::string> keys(const Split& s) {
  std::set<std::string> out;
  for (const auto& e : s) out.insert(content_key(e));
  return out;
}

TEST(Descriptor, ValidationAndRoundTrip) {
  TempDir dir;
  const auto d = testing::make_idx_dataset(dir.path() / "src", "digits", 20, 6);
  const auto back = descriptor_from_json(to_json(d));
  EXPECT_EQ(to_json(back), to_json(d));

  auto bad = d;
  bad.sources[0].checksum = "sha256:";
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = d;
  bad.split.mode = SplitRecipe::Mode::kFractions;
  bad.split.train = 0.8;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = d;
  bad.label_map = {{"a", 0}, {"b", 2}};
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = d;
  bad.extraction.id = "zip_magic";
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Descriptor, ShippedListParses) {
  const auto all = read_descriptors(std::filesystem::path(TASKSTREAM_SOURCE_DIR) / "data" /
                                    "descriptors.json");
  ASSERT_GE(all.size(), 2u);
  EXPECT_EQ(find_descriptor(all, "mnist").extraction.id, "idx_gz");
  EXPECT_THROW(find_descriptor(all, "nope"), ConfigError);
}

TEST(Fetch, CachedArchiveNeedsNoNetwork) {
  TempDir dir;
  auto d = testing::make_idx_dataset(dir.path() / "src", "digits", 20, 6);
  const auto cache = dir.path() / "cache";
  const auto out = fetch(d, cache);
  EXPECT_TRUE(std::filesystem::exists(out / "train-images.gz"));
  std::filesystem::remove_all(dir.path() / "src");
  int fetched = 0;
  FetchOptions o;
  o.log = [&](const std::string& m) { fetched += m.find("fetched") != std::string::npos; };
  EXPECT_EQ(fetch(d, cache, o), out);
  EXPECT_EQ(fetched, 0);
}

TEST(Fetch, ChecksumMismatchNamesDescriptor) {
  TempDir dir;
  auto d = testing::make_idx_dataset(dir.path() / "src", "digits", 20, 6);
  d.sources[1].checksum = "sha256:" + std::string(64, '0');
  try {
    fetch(d, dir.path() / "cache");
    FAIL() << "expected a checksum error";
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("digits"), std::string::npos);
    EXPECT_NE(msg.find("expected sha256:0000"), std::string::npos);
    EXPECT_NE(msg.find("got sha256:"), std::string::npos);
  }
  EXPECT_FALSE(std::filesystem::exists(dir.path() / "cache" / "archives" / "digits" /
                                       d.sources[1].name));
}

TEST(Fetch, FailsOverToSecondMirror) {
  TempDir dir;
  auto d = testing::make_idx_dataset(dir.path() / "src", "digits", 20, 6);
  for (auto& s : d.sources)
    s.urls.insert(s.urls.begin(), testing::file_url(dir.path() / "missing" / s.name));
  std::vector<std::string> log;
  FetchOptions o;
  o.attempts_per_url = 1;
  o.log = [&](const std::string& m) { log.push_back(m); };
  const auto out = fetch(d, dir.path() / "cache", o);
  for (const auto& s : d.sources) EXPECT_TRUE(checksum_matches(out / s.name, s.checksum));
  EXPECT_EQ(log.size(), 2 * d.sources.size());

  for (auto& s : d.sources) s.urls = {testing::file_url(dir.path() / "missing" / s.name)};
  EXPECT_THROW(fetch(d, dir.path() / "cache2", o), DataError);
}

TEST(Archive, TarAndGzipRoundTrip) {
  std::vector<TarEntry> e{{"a/b.txt", {'h', 'i'}}, {"c", std::vector<std::uint8_t>(1000, 7)}};
  const auto tar = write_tar(e);
  EXPECT_EQ(tar.size() % 512, 0u);
  const auto back = read_tar(maybe_gunzip(gzip_bytes(tar)));
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].path, "a/b.txt");
  EXPECT_EQ(back[1].data, e[1].data);
  auto corrupt = tar;
  corrupt[10] ^= 1;
  EXPECT_THROW(read_tar(corrupt), DataError);
}

TEST(Archive, ImageDecoders) {
  Example e;
  e.height = 2;
  e.width = 3;
  e.channels = 3;
  for (int i = 0; i < 18; ++i) e.input.push_back(static_cast<float>(i * 10) / 255.0f);
  const auto png = decode_image(encode_png(e), "x.png");
  EXPECT_EQ(png.height, 2);
  EXPECT_EQ(png.width, 3);
  EXPECT_EQ(png.input, e.input);
  const std::string ascii = "P2\n# comment\n2 1\n4\n0 4\n";
  const auto pgm = decode_image({reinterpret_cast<const std::uint8_t*>(ascii.data()), ascii.size()},
                                "x.pgm");
  EXPECT_EQ(pgm.input, (std::vector<float>{0.0f, 1.0f}));
  const std::string junk = "GIF89a";
  EXPECT_THROW(decode_image({reinterpret_cast<const std::uint8_t*>(junk.data()), junk.size()}, "x"),
               DataError);
}

TEST(Prepare, IdxSourceSplitsWithDuplicateAcrossSources) {
  TempDir dir;
  const auto d = testing::make_idx_dataset(dir.path() / "src", "digits", 40, 10);
  const auto cache = dir.path() / "cache";
  fetch(d, cache);
  const auto raw = extract(d, cache / "archives" / "digits");
  EXPECT_EQ(raw.examples.size(), 50u);
  const auto t = prepare(d, cache);
  // 40 source-train minus 15% val; the repeated test image is dropped.
  EXPECT_EQ(t.train().size(), 34u);
  EXPECT_EQ(t.val().size(), 6u);
  EXPECT_EQ(t.test().size(), 9u);
  EXPECT_EQ(t.info().num_classes, 3);
  const auto a = keys(t.train()), b = keys(t.val()), c = keys(t.test());
  for (const auto& k : c) EXPECT_FALSE(a.count(k) || b.count(k));
  EXPECT_LT(t.train().size() + t.val().size() + t.test().size(), raw.examples.size());

  const auto row = read_prepared_row(cache, "digits");
  EXPECT_EQ(row.info.sizes.train, 34u);
  EXPECT_EQ(row.checksums.at("train"), sha256_file(prepared_dir(cache) / row.files.at("train")));
  std::ifstream side(prepared_dir(cache) / "digits" / "task.json");
  const auto j = nlohmann::json::parse(side);
  EXPECT_EQ(j.at("duplicates_removed"), 1);
  EXPECT_EQ(j.at("raw_count"), 50);
}

TEST(Prepare, DeterministicAndLoadableThroughManifest) {
  TempDir dir;
  auto d = testing::make_image_folder_dataset(dir.path() / "src", "tex", 10);
  d.split.seed = 9;
  const auto cache = dir.path() / "cache";
  fetch(d, cache);
  const auto t1 = prepare(d, cache);
  const auto bytes1 = read_file_bytes(prepared_dir(cache) / "tex" / "train.rec");
  const auto t2 = prepare(d, cache);
  EXPECT_EQ(read_file_bytes(prepared_dir(cache) / "tex" / "train.rec"), bytes1);
  EXPECT_EQ(t1.train().size(), 21u);
  EXPECT_EQ(t1.val().size(), 5u);
  EXPECT_EQ(t1.test().size(), 4u);
  EXPECT_EQ(t1.train().front().channels, 3);
  EXPECT_EQ(t1.info().domain, "texture");

  d.split.seed = 10;
  const auto t3 = prepare(d, cache);
  EXPECT_NE(keys(t3.train()), keys(t1.train()));

  Manifest m;
  m.name = "fixture";
  m.boundary = 1;
  m.rows.push_back(read_prepared_row(cache, "tex"));
  write_manifest(m, dir.path() / "m.jsonl");
  const Stream s = load_stream(dir.path() / "m.jsonl", prepared_dir(cache));
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(keys(s[0].train()), keys(t3.train()));
}

TEST(Prepare, EmptyClassAfterDedupIsAnError) {
  TempDir dir;
  auto d = testing::make_image_folder_dataset(dir.path() / "src", "tex", 4);
  d.label_map = {{"class_a", 0}, {"class_b", 1}, {"class_c", 2}, {"class_z", 3}};
  fetch(d, dir.path() / "cache");
  EXPECT_THROW(prepare(d, dir.path() / "cache"), DataError);
}

TEST(Prepare, VectorsCsv) {
  TempDir dir;
  std::ofstream(dir.path() / "v.csv") << "x1,x2,label\n"
                                      << "0.5,1,yes\n1,2,no\n0.5,1,yes\n3,1,no\n"
                                      << "2,2,yes\n4,0,no\n7,7,yes\n8,1,no\n9,3,yes\n1,9,no\n";
  DatasetDescriptor d;
  d.id = "vec";
  d.name = "vec";
  d.domain = "tabular";
  d.extraction.id = "vectors_csv";
  d.sources.push_back({"v.csv", {testing::file_url(dir.path() / "v.csv")},
                       "md5:" + digest_hex("md5", read_file_bytes(dir.path() / "v.csv"))});
  d.split.train = 0.6;
  d.split.val = 0.2;
  d.split.test = 0.2;
  fetch(d, dir.path() / "cache");
  const auto raw = extract(d, dir.path() / "cache" / "archives" / "vec");
  EXPECT_EQ(raw.class_names, (std::vector<std::string>{"no", "yes"}));
  const auto t = prepare(d, dir.path() / "cache");
  EXPECT_EQ(t.train().size() + t.val().size() + t.test().size(), 9u);
  EXPECT_FALSE(t.has_images());
  EXPECT_EQ(t.input_dim(), 2);
}

TEST(Registry, CacheDirFromEnvironment) {
  ::setenv("TASKSTREAM_CACHE", "/tmp/ts-cache-test", 1);
  EXPECT_EQ(default_cache_dir(), std::filesystem::path("/tmp/ts-cache-test"));
  ::unsetenv("TASKSTREAM_CACHE");
  EXPECT_FALSE(default_cache_dir().empty());
}

}  // namespace
}  // namespace taskstream
