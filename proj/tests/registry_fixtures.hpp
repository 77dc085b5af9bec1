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

#ifndef TASKSTREAM_TESTS_REGISTRY_FIXTURES_HPP_
#define TASKSTREAM_TESTS_REGISTRY_FIXTURES_HPP_

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "taskstream/registry.hpp"
#include "taskstream/task_io.hpp"

namespace taskstream::testing {

// Quantised image whose brightest block depends on the class.
inline std::vector<std::uint8_t> class_pixels(int label, int classes, int h, int w, int c,
                                              std::mt19937_64& rng) {
  std::uniform_int_distribution<int> noise(0, 60);
  std::vector<std::uint8_t> px(static_cast<std::size_t>(h * w * c));
  const int band = std::max(1, w / classes);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int k = 0; k < c; ++k) {
        const bool on = x / band == label % classes;
        px[(y * w + x) * c + k] = static_cast<std::uint8_t>((on ? 180 : 20) + noise(rng));
      }
  return px;
}

inline void put_be32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(v >> s));
}

inline std::string file_url(const std::filesystem::path& p) {
  return "file://" + std::filesystem::absolute(p).string();
}

// MNIST-style idx archives. The first test image repeats the first training image.
inline DatasetDescriptor make_idx_dataset(const std::filesystem::path& dir, const std::string& id,
                                          int n_train, int n_test, int classes = 3, int side = 6,
                                          std::uint64_t seed = 1) {
  std::filesystem::create_directories(dir);
  std::mt19937_64 rng(seed);
  auto build = [&](int n, std::vector<std::uint8_t>& images, std::vector<std::uint8_t>& labels,
                   const std::vector<std::uint8_t>* repeat_first) {
    put_be32(images, 0x803);
    put_be32(images, n);
    put_be32(images, side);
    put_be32(images, side);
    put_be32(labels, 0x801);
    put_be32(labels, n);
    for (int i = 0; i < n; ++i) {
      const int label = i % classes;
      auto px = class_pixels(label, classes, side, side, 1, rng);
      if (i == 0 && repeat_first) px = *repeat_first;
      images.insert(images.end(), px.begin(), px.end());
      labels.push_back(static_cast<std::uint8_t>(i == 0 && repeat_first ? 0 : label));
    }
  };
  std::vector<std::uint8_t> tri, trl, tei, tel;
  build(n_train, tri, trl, nullptr);
  const std::vector<std::uint8_t> first(tri.begin() + 16, tri.begin() + 16 + side * side);
  build(n_test, tei, tel, &first);
  DatasetDescriptor d;
  d.id = id;
  d.name = id;
  d.year = 2004;
  d.domain = "ocr";
  d.license_note = "synthetic fixture";
  d.extraction.id = "idx_gz";
  d.extraction.params = {{"train_images", "train-images.gz"}, {"train_labels", "train-labels.gz"},
                         {"test_images", "test-images.gz"}, {"test_labels", "test-labels.gz"}};
  d.split.mode = SplitRecipe::Mode::kSourceSplits;
  d.split.val_fraction = 0.15;
  d.split.seed = 0;
  const std::pair<std::string, std::vector<std::uint8_t>*> files[] = {
      {"train-images.gz", &tri}, {"train-labels.gz", &trl}, {"test-images.gz", &tei},
      {"test-labels.gz", &tel}};
  for (const auto& [name, bytes] : files) {
    const auto gz = gzip_bytes(*bytes);
    write_file_atomic(dir / name, gz);
    d.sources.push_back({name, {file_url(dir / name)}, "sha256:" + sha256_hex(gz)});
  }
  return d;
}

// Tar.gz of class folders with PNG and PGM images.
inline DatasetDescriptor make_image_folder_dataset(const std::filesystem::path& dir,
                                                   const std::string& id, int per_class,
                                                   int classes = 3, int side = 8,
                                                   std::uint64_t seed = 2) {
  std::filesystem::create_directories(dir);
  std::mt19937_64 rng(seed);
  std::vector<TarEntry> entries;
  for (int c = 0; c < classes; ++c) {
    const std::string cls = "class_" + std::string(1, static_cast<char>('a' + c));
    for (int i = 0; i < per_class; ++i) {
      const auto px = class_pixels(c, classes, side, side, i % 2 ? 1 : 3, rng);
      char name[32];
      std::snprintf(name, sizeof(name), "img%03d", i);
      if (i % 2) {
        std::string header = "P5\n" + std::to_string(side) + " " + std::to_string(side) + "\n255\n";
        std::vector<std::uint8_t> pgm(header.begin(), header.end());
        pgm.insert(pgm.end(), px.begin(), px.end());
        entries.push_back({"images/" + cls + "/" + name + ".pgm", pgm});
      } else {
        Example e;
        e.height = e.width = side;
        e.channels = 3;
        for (auto v : px) e.input.push_back(v / 255.0f);
        entries.push_back({"images/" + cls + "/" + name + ".png", encode_png(e)});
      }
    }
  }
  const auto gz = gzip_bytes(write_tar(entries));
  const std::string file = id + ".tar.gz";
  write_file_atomic(dir / file, gz);
  DatasetDescriptor d;
  d.id = id;
  d.name = id;
  d.year = 2006;
  d.domain = "texture";
  d.license_note = "synthetic fixture";
  d.extraction.id = "image_folder_tar";
  d.extraction.params = {{"file", file}, {"root", "images"}, {"layout", "class"}};
  d.sources.push_back({file, {file_url(dir / file)}, "sha256:" + sha256_hex(gz)});
  return d;
}

}  // namespace taskstream::testing

#endif  // TASKSTREAM_TESTS_REGISTRY_FIXTURES_HPP_
