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

#include "taskstream/registry.hpp"

#include <curl/curl.h>
#include <png.h>
#include <zlib.h>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <mutex>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_set>

#include "taskstream/task_io.hpp"

namespace taskstream {

using nlohmann::json;

namespace {

std::pair<std::string, std::string> split_checksum(const std::string& checksum) {
  const auto colon = checksum.find(':');
  if (colon == std::string::npos) return {"sha256", checksum};
  return {checksum.substr(0, colon), checksum.substr(colon + 1)};
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

}  // namespace

void DatasetDescriptor::validate() const {
  auto fail = [this](const std::string& m) {
    throw ConfigError("descriptor " + (id.empty() ? std::string("<unnamed>") : id) + ": " + m);
  };
  if (id.empty()) fail("id is empty");
  if (sources.empty()) fail("no source files");
  for (const auto& s : sources) {
    if (s.name.empty() || s.name.find('/') != std::string::npos)
      fail("source file name '" + s.name + "' must be a plain file name");
    if (s.urls.empty()) fail("source " + s.name + " has no URLs");
    const auto [alg, hex] = split_checksum(s.checksum);
    if (hex.empty()) fail("source " + s.name + " has an empty checksum");
    if (alg != "sha256" && alg != "md5" && alg != "sha1")
      fail("source " + s.name + ": unsupported checksum algorithm " + alg);
  }
  if (kind != TaskKind::kSingleLabel) fail("only single_label datasets can be ingested");
  static const std::set<std::string> kRecipes{"idx_gz", "image_folder_tar", "vectors_csv"};
  if (!kRecipes.count(extraction.id)) fail("unknown extraction recipe '" + extraction.id + "'");
  if (split.mode == SplitRecipe::Mode::kFractions) {
    if (split.train <= 0 || split.val <= 0 || split.test <= 0)
      fail("split fractions must be positive");
    if (std::abs(split.train + split.val + split.test - 1.0) > 1e-9)
      fail("split fractions must sum to 1");
  } else if (!(split.val_fraction > 0 && split.val_fraction < 1)) {
    fail("val_fraction must lie in (0, 1)");
  }
  if (!label_map.empty()) {
    std::vector<int> idx;
    for (const auto& [name, i] : label_map) idx.push_back(i);
    std::sort(idx.begin(), idx.end());
    for (std::size_t i = 0; i < idx.size(); ++i)
      if (idx[i] != static_cast<int>(i)) fail("label_map indices must be contiguous from 0");
    if (idx.size() < 2) fail("label_map needs at least two classes");
  }
}

DatasetDescriptor descriptor_from_json(const json& j) {
  try {
    DatasetDescriptor d;
    d.id = j.at("id").get<std::string>();
    d.name = j.value("name", d.id);
    d.year = j.value("year", 0);
    d.domain = j.value("domain", std::string("object"));
    d.kind = task_kind_from_string(j.value("kind", std::string("single_label")));
    d.license_note = j.value("license_note", std::string());
    for (const auto& s : j.at("sources")) {
      SourceFile f;
      f.name = s.at("name").get<std::string>();
      f.urls = s.at("urls").get<std::vector<std::string>>();
      f.checksum = s.at("checksum").get<std::string>();
      d.sources.push_back(std::move(f));
    }
    const auto& e = j.at("extraction");
    d.extraction.id = e.at("recipe").get<std::string>();
    d.extraction.params = e.value("params", json::object());
    if (j.contains("split")) {
      const auto& s = j["split"];
      const auto mode = s.value("mode", std::string("fractions"));
      if (mode == "fractions") {
        d.split.mode = SplitRecipe::Mode::kFractions;
      } else if (mode == "source") {
        d.split.mode = SplitRecipe::Mode::kSourceSplits;
      } else {
        throw ConfigError("descriptor " + d.id + ": unknown split mode '" + mode + "'");
      }
      d.split.train = s.value("train", d.split.train);
      d.split.val = s.value("val", d.split.val);
      d.split.test = s.value("test", d.split.test);
      d.split.val_fraction = s.value("val_fraction", d.split.val_fraction);
      d.split.seed = s.value("seed", d.split.seed);
    }
    if (j.contains("label_map")) d.label_map = j["label_map"].get<std::map<std::string, int>>();
    d.validate();
    return d;
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("malformed dataset descriptor: ") + ex.what());
  }
}

json to_json(const DatasetDescriptor& d) {
  json sources = json::array();
  for (const auto& s : d.sources)
    sources.push_back({{"name", s.name}, {"urls", s.urls}, {"checksum", s.checksum}});
  json split = {{"mode", d.split.mode == SplitRecipe::Mode::kFractions ? "fractions" : "source"},
                {"seed", d.split.seed}};
  if (d.split.mode == SplitRecipe::Mode::kFractions) {
    split["train"] = d.split.train;
    split["val"] = d.split.val;
    split["test"] = d.split.test;
  } else {
    split["val_fraction"] = d.split.val_fraction;
  }
  json j = {{"id", d.id},
            {"name", d.name},
            {"year", d.year},
            {"domain", d.domain},
            {"kind", to_string(d.kind)},
            {"license_note", d.license_note},
            {"sources", sources},
            {"extraction", {{"recipe", d.extraction.id}, {"params", d.extraction.params}}},
            {"split", split}};
  if (!d.label_map.empty()) j["label_map"] = d.label_map;
  return j;
}

std::vector<DatasetDescriptor> read_descriptors(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open descriptor list " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& ex) {
    throw ConfigError("descriptor list " + path.string() + ": " + ex.what());
  }
  const json& list = j.is_object() ? j.at("datasets") : j;
  std::vector<DatasetDescriptor> out;
  std::set<std::string> ids;
  for (const auto& d : list) {
    out.push_back(descriptor_from_json(d));
    if (!ids.insert(out.back().id).second)
      throw ConfigError("duplicate descriptor id " + out.back().id);
  }
  return out;
}

const DatasetDescriptor& find_descriptor(const std::vector<DatasetDescriptor>& all,
                                         const std::string& id) {
  for (const auto& d : all)
    if (d.id == id) return d;
  throw ConfigError("no dataset descriptor with id '" + id + "'");
}

std::filesystem::path default_cache_dir() {
  if (const char* c = std::getenv("TASKSTREAM_CACHE"); c && *c) return c;
  if (const char* h = std::getenv("HOME"); h && *h)
    return std::filesystem::path(h) / ".cache" / "taskstream";
  return std::filesystem::temp_directory_path() / "taskstream-cache";
}

// ---------------------------------------------------------------------------
// Fetch

bool checksum_matches(const std::filesystem::path& file, const std::string& checksum) {
  if (!std::filesystem::is_regular_file(file)) return false;
  const auto [alg, hex] = split_checksum(checksum);
  return digest_hex(alg, read_file_bytes(file)) == lower(hex);
}

namespace {

std::size_t write_to_file(char* data, std::size_t size, std::size_t n, void* user) {
  return std::fwrite(data, size, n, static_cast<std::FILE*>(user)) * size;
}

// Returns an empty string on success, else the failure reason.
std::string download(const std::string& url, const std::filesystem::path& dest,
                     long timeout_seconds) {
  static std::once_flag once;
  std::call_once(once, [] { curl_global_init(CURL_GLOBAL_DEFAULT); });
  std::FILE* out = std::fopen(dest.c_str(), "wb");
  if (!out) return "cannot open " + dest.string();
  CURL* curl = curl_easy_init();
  if (!curl) {
    std::fclose(out);
    return "curl initialisation failed";
  }
  char err[CURL_ERROR_SIZE] = {0};
  curl_easy_setopt(curl, CURLOPT_URL, url.c_str());
  curl_easy_setopt(curl, CURLOPT_WRITEFUNCTION, write_to_file);
  curl_easy_setopt(curl, CURLOPT_WRITEDATA, out);
  curl_easy_setopt(curl, CURLOPT_FOLLOWLOCATION, 1L);
  curl_easy_setopt(curl, CURLOPT_FAILONERROR, 1L);
  curl_easy_setopt(curl, CURLOPT_TIMEOUT, timeout_seconds);
  curl_easy_setopt(curl, CURLOPT_CONNECTTIMEOUT, 30L);
  curl_easy_setopt(curl, CURLOPT_ERRORBUFFER, err);
  const CURLcode rc = curl_easy_perform(curl);
  curl_easy_cleanup(curl);
  const bool closed = std::fclose(out) == 0;
  if (rc != CURLE_OK) return err[0] ? std::string(err) : std::string(curl_easy_strerror(rc));
  if (!closed) return "write failed for " + dest.string();
  return {};
}

}  // namespace

std::filesystem::path fetch(const DatasetDescriptor& d, const std::filesystem::path& cache_dir,
                            const FetchOptions& options) {
  d.validate();
  const auto dir = cache_dir / "archives" / d.id;
  std::filesystem::create_directories(dir);
  auto log = [&](const std::string& m) {
    if (options.log) options.log(m);
  };
  for (const auto& src : d.sources) {
    const auto dest = dir / src.name;
    if (checksum_matches(dest, src.checksum)) {
      log(d.id + "/" + src.name + ": cached");
      continue;
    }
    static std::atomic<unsigned> counter{0};
    auto tmp = dest;
    tmp += ".part." + std::to_string(counter++);
    std::vector<std::string> failures;
    bool done = false;
    for (const auto& url : src.urls) {
      for (int attempt = 0; attempt < std::max(1, options.attempts_per_url) && !done; ++attempt) {
        const std::string why = download(url, tmp, options.timeout_seconds);
        if (!why.empty()) {
          failures.push_back(url + ": " + why);
          log(d.id + "/" + src.name + ": " + failures.back());
          continue;
        }
        const auto [alg, hex] = split_checksum(src.checksum);
        const std::string actual = digest_hex(alg, read_file_bytes(tmp));
        if (actual != lower(hex)) {
          std::filesystem::remove(tmp);
          throw DataError("dataset " + d.id + ": checksum mismatch for " + src.name + " from " +
                          url + " (expected " + alg + ":" + lower(hex) + ", got " + alg + ":" +
                          actual + ")");
        }
        std::filesystem::rename(tmp, dest);
        log(d.id + "/" + src.name + ": fetched from " + url);
        done = true;
      }
      if (done) break;
    }
    if (!done) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      std::string msg = "dataset " + d.id + ": could not download " + src.name;
      for (const auto& f : failures) msg += "\n  " + f;
      throw DataError(msg);
    }
  }
  return dir;
}

// ---------------------------------------------------------------------------
// Archive formats

std::vector<std::uint8_t> maybe_gunzip(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 0x1f || bytes[1] != 0x8b)
    return {bytes.begin(), bytes.end()};
  z_stream zs{};
  if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) throw DataError("zlib initialisation failed");
  std::vector<std::uint8_t> out;
  std::uint8_t buf[1 << 16];
  zs.next_in = const_cast<Bytef*>(bytes.data());
  zs.avail_in = static_cast<uInt>(bytes.size());
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = buf;
    zs.avail_out = sizeof(buf);
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw DataError("corrupt gzip data");
    }
    out.insert(out.end(), buf, buf + (sizeof(buf) - zs.avail_out));
    if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
      inflateEnd(&zs);
      throw DataError("truncated gzip data");
    }
  }
  inflateEnd(&zs);
  return out;
}

std::vector<std::uint8_t> gzip_bytes(std::span<const std::uint8_t> bytes) {
  z_stream zs{};
  if (deflateInit2(&zs, Z_BEST_COMPRESSION, Z_DEFLATED, 16 + MAX_WBITS, 8,
                   Z_DEFAULT_STRATEGY) != Z_OK)
    throw Error("zlib initialisation failed");
  std::vector<std::uint8_t> out(deflateBound(&zs, static_cast<uLong>(bytes.size())));
  zs.next_in = const_cast<Bytef*>(bytes.data());
  zs.avail_in = static_cast<uInt>(bytes.size());
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = deflate(&zs, Z_FINISH);
  deflateEnd(&zs);
  if (rc != Z_STREAM_END) throw Error("gzip compression failed");
  out.resize(zs.total_out);
  return out;
}

namespace {

std::uint64_t parse_octal(const std::uint8_t* p, std::size_t n) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < n && p[i]; ++i) {
    if (p[i] == ' ') continue;
    if (p[i] < '0' || p[i] > '7') throw DataError("corrupt tar header (bad octal field)");
    v = v * 8 + (p[i] - '0');
  }
  return v;
}

std::string field(const std::uint8_t* p, std::size_t n) {
  std::size_t len = 0;
  while (len < n && p[len]) ++len;
  return std::string(reinterpret_cast<const char*>(p), len);
}

}  // namespace

std::vector<TarEntry> read_tar(std::span<const std::uint8_t> bytes) {
  std::vector<TarEntry> out;
  std::size_t off = 0;
  std::string long_name;
  while (off + 512 <= bytes.size()) {
    const std::uint8_t* h = bytes.data() + off;
    if (std::all_of(h, h + 512, [](std::uint8_t b) { return b == 0; })) break;
    std::uint64_t sum = 0;
    for (int i = 0; i < 512; ++i) sum += (i >= 148 && i < 156) ? ' ' : h[i];
    if (sum != parse_octal(h + 148, 8)) throw DataError("corrupt tar header (checksum)");
    const std::uint64_t size = parse_octal(h + 124, 12);
    const char type = static_cast<char>(h[156]);
    off += 512;
    if (off + size > bytes.size()) throw DataError("truncated tar archive");
    std::span<const std::uint8_t> data = bytes.subspan(off, size);
    off += (size + 511) / 512 * 512;
    if (type == 'L') {
      long_name = field(data.data(), data.size());
      continue;
    }
    if (type == 'x') {
      std::string rec(data.begin(), data.end());
      std::size_t pos = 0;
      while (pos < rec.size()) {
        const auto sp = rec.find(' ', pos);
        if (sp == std::string::npos) break;
        const std::size_t len = std::stoul(rec.substr(pos, sp - pos));
        const auto kv = rec.substr(sp + 1, len - (sp - pos) - 2);
        if (kv.rfind("path=", 0) == 0) long_name = kv.substr(5);
        pos += len;
      }
      continue;
    }
    if (type != '0' && type != '\0') {
      long_name.clear();
      continue;
    }
    std::string name = long_name;
    if (name.empty()) {
      name = field(h, 100);
      const std::string prefix = field(h + 345, 155);
      if (std::memcmp(h + 257, "ustar", 5) == 0 && !prefix.empty()) name = prefix + "/" + name;
    }
    long_name.clear();
    out.push_back({name, {data.begin(), data.end()}});
  }
  return out;
}

std::vector<std::uint8_t> write_tar(const std::vector<TarEntry>& entries) {
  std::vector<std::uint8_t> out;
  for (const auto& e : entries) {
    if (e.path.size() >= 100) throw ConfigError("tar path too long: " + e.path);
    std::uint8_t h[512] = {0};
    std::memcpy(h, e.path.data(), e.path.size());
    std::snprintf(reinterpret_cast<char*>(h + 100), 8, "%07o", 0644);
    std::snprintf(reinterpret_cast<char*>(h + 108), 8, "%07o", 0);
    std::snprintf(reinterpret_cast<char*>(h + 116), 8, "%07o", 0);
    std::snprintf(reinterpret_cast<char*>(h + 124), 12, "%011llo",
                  static_cast<unsigned long long>(e.data.size()));
    std::snprintf(reinterpret_cast<char*>(h + 136), 12, "%011o", 0);
    h[156] = '0';
    std::memcpy(h + 257, "ustar", 6);
    std::memcpy(h + 263, "00", 2);
    std::memset(h + 148, ' ', 8);
    unsigned sum = 0;
    for (std::uint8_t b : h) sum += b;
    std::snprintf(reinterpret_cast<char*>(h + 148), 8, "%06o", sum);
    out.insert(out.end(), h, h + 512);
    out.insert(out.end(), e.data.begin(), e.data.end());
    out.resize((out.size() + 511) / 512 * 512, 0);
  }
  out.resize(out.size() + 1024, 0);
  return out;
}

namespace {

Example decode_png(std::span<const std::uint8_t> bytes, const std::string& name) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()))
    throw DataError("cannot decode PNG " + name + ": " + img.message);
  const bool gray = (img.format & PNG_FORMAT_FLAG_COLOR) == 0;
  img.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<std::uint8_t> px(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, px.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw DataError("cannot decode PNG " + name + ": " + msg);
  }
  Example e;
  e.height = static_cast<int>(img.height);
  e.width = static_cast<int>(img.width);
  e.channels = gray ? 1 : 3;
  e.input.resize(px.size());
  std::transform(px.begin(), px.end(), e.input.begin(), [](std::uint8_t v) { return v / 255.0f; });
  return e;
}

Example decode_pnm(std::span<const std::uint8_t> bytes, const std::string& name) {
  std::size_t pos = 2;
  auto bad = [&name](const std::string& why) { return DataError("cannot decode " + name + ": " + why); };
  auto next_int = [&]() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    long v = 0;
    bool any = false;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos++] - '0');
      any = true;
    }
    if (!any) throw bad("malformed header");
    return v;
  };
  const char kind = static_cast<char>(bytes[1]);
  const int channels = (kind == '3' || kind == '6') ? 3 : 1;
  const long w = next_int(), h = next_int(), maxv = next_int();
  if (w <= 0 || h <= 0 || maxv <= 0 || maxv > 65535) throw bad("bad dimensions");
  Example e;
  e.height = static_cast<int>(h);
  e.width = static_cast<int>(w);
  e.channels = channels;
  const std::size_t n = static_cast<std::size_t>(w * h * channels);
  e.input.resize(n);
  if (kind == '5' || kind == '6') {
    ++pos;
    const std::size_t bpp = maxv > 255 ? 2 : 1;
    if (pos + n * bpp > bytes.size()) throw bad("truncated pixel data");
    for (std::size_t i = 0; i < n; ++i) {
      const unsigned v = bpp == 1 ? bytes[pos + i]
                                  : (unsigned(bytes[pos + 2 * i]) << 8) | bytes[pos + 2 * i + 1];
      e.input[i] = static_cast<float>(v) / static_cast<float>(maxv);
    }
  } else {
    for (std::size_t i = 0; i < n; ++i)
      e.input[i] = static_cast<float>(next_int()) / static_cast<float>(maxv);
  }
  return e;
}

}  // namespace

Example decode_image(std::span<const std::uint8_t> bytes, const std::string& name) {
  static constexpr std::uint8_t kPng[] = {0x89, 'P', 'N', 'G'};
  if (bytes.size() >= 4 && std::equal(kPng, kPng + 4, bytes.begin())) return decode_png(bytes, name);
  if (bytes.size() >= 2 && bytes[0] == 'P' && std::strchr("2356", bytes[1]))
    return decode_pnm(bytes, name);
  throw DataError("unsupported image format: " + name);
}

std::vector<std::uint8_t> encode_png(const Example& e) {
  if (!e.is_image() || (e.channels != 1 && e.channels != 3))
    throw ConfigError("encode_png needs a 1- or 3-channel image");
  std::vector<std::uint8_t> px(e.input.size());
  std::transform(e.input.begin(), e.input.end(), px.begin(), [](float v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
  });
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(e.width);
  img.height = static_cast<png_uint_32>(e.height);
  img.format = e.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, px.data(), 0, nullptr))
    throw Error(std::string("PNG encoding failed: ") + img.message);
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, px.data(), 0, nullptr))
    throw Error(std::string("PNG encoding failed: ") + img.message);
  out.resize(size);
  return out;
}

// ---------------------------------------------------------------------------
// Extraction recipes

namespace {

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t off) {
  return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) |
         (std::uint32_t(b[off + 2]) << 8) | b[off + 3];
}

std::vector<std::uint8_t> load_source(const std::filesystem::path& dir, const std::string& name) {
  const auto path = dir / name;
  if (!std::filesystem::exists(path)) throw DataError("missing archive file " + path.string());
  return maybe_gunzip(read_file_bytes(path));
}

void read_idx(const std::filesystem::path& dir, const std::string& images_name,
              const std::string& labels_name, int source, RawDataset& raw) {
  const auto images = load_source(dir, images_name);
  const auto labels = load_source(dir, labels_name);
  if (images.size() < 16 || be32(images, 0) != 0x803)
    throw DataError(images_name + " is not an idx3 image file");
  if (labels.size() < 8 || be32(labels, 0) != 0x801)
    throw DataError(labels_name + " is not an idx1 label file");
  const std::size_t n = be32(images, 4), h = be32(images, 8), w = be32(images, 12);
  if (be32(labels, 4) != n) throw DataError(images_name + " and " + labels_name + " disagree on count");
  if (images.size() != 16 + n * h * w || labels.size() != 8 + n)
    throw DataError(images_name + ": size does not match its header");
  for (std::size_t i = 0; i < n; ++i) {
    Example e;
    e.height = static_cast<int>(h);
    e.width = static_cast<int>(w);
    e.channels = 1;
    e.input.resize(h * w);
    const std::uint8_t* p = images.data() + 16 + i * h * w;
    std::transform(p, p + h * w, e.input.begin(), [](std::uint8_t v) { return v / 255.0f; });
    e.label = labels[8 + i];
    raw.examples.push_back(std::move(e));
    raw.source.push_back(source);
  }
}

int source_from_name(const std::string& s) {
  if (s == "train") return RawDataset::kSourceTrain;
  if (s == "val" || s == "valid" || s == "validation") return RawDataset::kSourceVal;
  if (s == "test") return RawDataset::kSourceTest;
  throw DataError("unknown source split directory '" + s + "'");
}

void to_channels(Example& e, int channels) {
  if (e.channels == channels) return;
  const std::size_t n = static_cast<std::size_t>(e.height) * e.width;
  std::vector<float> out(n * channels);
  for (std::size_t i = 0; i < n; ++i) {
    if (channels == 3) {
      out[3 * i] = out[3 * i + 1] = out[3 * i + 2] = e.input[i];
    } else {
      out[i] = (e.input[3 * i] + e.input[3 * i + 1] + e.input[3 * i + 2]) / 3.0f;
    }
  }
  e.input = std::move(out);
  e.channels = channels;
}

std::vector<std::string> split_path(const std::string& p) {
  std::vector<std::string> parts;
  std::stringstream ss(p);
  std::string part;
  while (std::getline(ss, part, '/'))
    if (!part.empty() && part != ".") parts.push_back(part);
  return parts;
}

void assign_class_names(RawDataset& raw, const DatasetDescriptor& d,
                        const std::vector<std::string>& names_in_order) {
  std::map<std::string, int> map = d.label_map;
  if (map.empty()) {
    std::set<std::string> sorted(names_in_order.begin(), names_in_order.end());
    int i = 0;
    for (const auto& n : sorted) map[n] = i++;
  }
  raw.class_names.assign(map.size(), {});
  for (const auto& [n, i] : map) raw.class_names[i] = n;
  for (std::size_t k = 0; k < raw.examples.size(); ++k) {
    auto it = map.find(names_in_order[k]);
    if (it == map.end())
      throw DataError("dataset " + d.id + ": class '" + names_in_order[k] + "' is not in the label map");
    raw.examples[k].label = it->second;
  }
}

RawDataset extract_image_folder(const DatasetDescriptor& d, const std::filesystem::path& dir) {
  const auto& p = d.extraction.params;
  const std::string file = p.value("file", d.sources.front().name);
  const bool split_dirs = p.value("layout", std::string("class")) == "split/class";
  const std::string root = p.value("root", std::string());
  auto entries = read_tar(load_source(dir, file));
  std::stable_sort(entries.begin(), entries.end(),
                   [](const TarEntry& a, const TarEntry& b) { return a.path < b.path; });
  RawDataset raw;
  std::vector<std::string> names;
  std::vector<std::pair<int, std::size_t>> order;
  for (const auto& e : entries) {
    auto parts = split_path(e.path);
    if (!root.empty()) {
      if (parts.empty() || parts.front() != root) continue;
      parts.erase(parts.begin());
    }
    const std::size_t want = split_dirs ? 3 : 2;
    if (parts.size() != want) continue;
    const std::string& leaf = parts.back();
    if (leaf.empty() || leaf[0] == '.') continue;
    raw.examples.push_back(decode_image(e.data, e.path));
    raw.source.push_back(split_dirs ? source_from_name(parts[0]) : RawDataset::kSourceNone);
    names.push_back(parts[parts.size() - 2]);
  }
  if (raw.examples.empty()) throw DataError("dataset " + d.id + ": no images found in " + file);
  int channels = p.value("channels", 0);
  if (channels == 0)
    for (const auto& e : raw.examples) channels = std::max(channels, e.channels);
  if (channels != 1 && channels != 3) throw ConfigError("descriptor " + d.id + ": channels must be 1 or 3");
  for (auto& e : raw.examples) to_channels(e, channels);
  // Source order: train, val, test, then unsplit.
  std::vector<std::size_t> idx(raw.examples.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return raw.source[a] < raw.source[b]; });
  RawDataset sorted;
  std::vector<std::string> sorted_names;
  for (std::size_t i : idx) {
    sorted.examples.push_back(std::move(raw.examples[i]));
    sorted.source.push_back(raw.source[i]);
    sorted_names.push_back(names[i]);
  }
  assign_class_names(sorted, d, sorted_names);
  return sorted;
}

std::vector<std::string> csv_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

RawDataset extract_vectors_csv(const DatasetDescriptor& d, const std::filesystem::path& dir) {
  const auto& p = d.extraction.params;
  const std::string file = p.value("file", d.sources.front().name);
  const std::string label_col = p.value("label_column", std::string("label"));
  const std::string split_col = p.value("split_column", std::string());
  const auto bytes = load_source(dir, file);
  std::stringstream in(std::string(bytes.begin(), bytes.end()));
  std::string line;
  if (!std::getline(in, line)) throw DataError("dataset " + d.id + ": empty CSV " + file);
  const auto header = csv_fields(line);
  int li = -1, si = -1;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == label_col) li = static_cast<int>(i);
    if (!split_col.empty() && header[i] == split_col) si = static_cast<int>(i);
  }
  if (li < 0) throw DataError("dataset " + d.id + ": CSV has no column '" + label_col + "'");
  if (!split_col.empty() && si < 0)
    throw DataError("dataset " + d.id + ": CSV has no column '" + split_col + "'");
  RawDataset raw;
  std::vector<std::string> names;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto f = csv_fields(line);
    if (f.size() != header.size())
      throw DataError(file + ":" + std::to_string(lineno) + ": expected " +
                      std::to_string(header.size()) + " fields");
    Example e;
    for (std::size_t i = 0; i < f.size(); ++i) {
      if (static_cast<int>(i) == li || static_cast<int>(i) == si) continue;
      char* end = nullptr;
      const float v = std::strtof(f[i].c_str(), &end);
      if (f[i].empty() || *end != '\0' || !std::isfinite(v))
        throw DataError(file + ":" + std::to_string(lineno) + ": non-numeric feature '" + f[i] + "'");
      e.input.push_back(v);
    }
    raw.examples.push_back(std::move(e));
    raw.source.push_back(si >= 0 ? source_from_name(f[si]) : RawDataset::kSourceNone);
    names.push_back(f[li]);
  }
  std::vector<std::size_t> idx(raw.examples.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return raw.source[a] < raw.source[b]; });
  RawDataset sorted;
  std::vector<std::string> sorted_names;
  for (std::size_t i : idx) {
    sorted.examples.push_back(std::move(raw.examples[i]));
    sorted.source.push_back(raw.source[i]);
    sorted_names.push_back(names[i]);
  }
  assign_class_names(sorted, d, sorted_names);
  return sorted;
}

}  // namespace

RawDataset extract(const DatasetDescriptor& d, const std::filesystem::path& dir) {
  d.validate();
  const auto& p = d.extraction.params;
  if (d.extraction.id == "idx_gz") {
    RawDataset raw;
    try {
      read_idx(dir, p.at("train_images"), p.at("train_labels"), RawDataset::kSourceTrain, raw);
      if (p.contains("test_images"))
        read_idx(dir, p.at("test_images"), p.at("test_labels"), RawDataset::kSourceTest, raw);
    } catch (const json::exception& ex) {
      throw ConfigError("descriptor " + d.id + ": idx_gz params: " + ex.what());
    }
    int max_label = 0;
    for (const auto& e : raw.examples) max_label = std::max(max_label, e.label);
    if (d.label_map.empty()) {
      for (int i = 0; i <= max_label; ++i) raw.class_names.push_back(std::to_string(i));
    } else {
      raw.class_names.assign(d.label_map.size(), {});
      for (const auto& [n, i] : d.label_map) raw.class_names[i] = n;
      if (max_label >= static_cast<int>(raw.class_names.size()))
        throw DataError("dataset " + d.id + ": label " + std::to_string(max_label) +
                        " exceeds the label map");
    }
    return raw;
  }
  if (d.extraction.id == "image_folder_tar") return extract_image_folder(d, dir);
  return extract_vectors_csv(d, dir);
}

// ---------------------------------------------------------------------------
// Splitting

namespace {

void shuffle(std::vector<std::size_t>& v, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng() % i]);
}

}  // namespace

PreparedSplits split_dataset(const RawDataset& raw, const DatasetDescriptor& d) {
  PreparedSplits out;
  out.raw_count = raw.examples.size();
  std::unordered_set<std::string> seen;
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < raw.examples.size(); ++i)
    if (seen.insert(content_key(raw.examples[i])).second) kept.push_back(i);
  out.duplicates_removed = raw.examples.size() - kept.size();

  const int classes = static_cast<int>(raw.class_names.size());
  std::vector<std::size_t> per_class(classes, 0);
  for (std::size_t i : kept) {
    const int l = raw.examples[i].label;
    if (l < 0 || l >= classes) throw DataError("dataset " + d.id + ": label out of range");
    ++per_class[l];
  }
  for (int c = 0; c < classes; ++c)
    if (per_class[c] == 0)
      throw DataError("dataset " + d.id + ": class '" + raw.class_names[c] +
                      "' is empty after duplicate removal");

  std::vector<std::size_t> train, val, test;
  if (d.split.mode == SplitRecipe::Mode::kFractions) {
    std::vector<std::size_t> all = kept;
    shuffle(all, d.split.seed);
    const auto n = all.size();
    const auto ntr = static_cast<std::size_t>(std::llround(d.split.train * n));
    const auto nva = static_cast<std::size_t>(std::llround(d.split.val * n));
    train.assign(all.begin(), all.begin() + std::min(ntr, n));
    val.assign(all.begin() + std::min(ntr, n), all.begin() + std::min(ntr + nva, n));
    test.assign(all.begin() + std::min(ntr + nva, n), all.end());
  } else {
    bool has_val = false;
    for (std::size_t i : kept) {
      switch (raw.source[i]) {
        case RawDataset::kSourceTrain: train.push_back(i); break;
        case RawDataset::kSourceVal: val.push_back(i); has_val = true; break;
        case RawDataset::kSourceTest: test.push_back(i); break;
        default:
          throw DataError("dataset " + d.id + ": source split mode needs split-labelled examples");
      }
    }
    if (!has_val) {
      shuffle(train, d.split.seed);
      const auto nva = static_cast<std::size_t>(std::llround(d.split.val_fraction * train.size()));
      val.assign(train.end() - nva, train.end());
      train.resize(train.size() - nva);
    }
  }
  for (auto* part : {&train, &val, &test}) {
    std::sort(part->begin(), part->end());
    if (part->empty()) throw DataError("dataset " + d.id + ": a prepared split is empty");
  }
  for (std::size_t i : train) out.splits.train.push_back(raw.examples[i]);
  for (std::size_t i : val) out.splits.val.push_back(raw.examples[i]);
  for (std::size_t i : test) out.splits.test.push_back(raw.examples[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Prepare

std::filesystem::path prepared_dir(const std::filesystem::path& cache_dir) {
  return cache_dir / "prepared";
}

Task prepare(const DatasetDescriptor& d, const std::filesystem::path& cache_dir) {
  const auto archive_dir = cache_dir / "archives" / d.id;
  for (const auto& s : d.sources)
    if (!checksum_matches(archive_dir / s.name, s.checksum))
      throw DataError("dataset " + d.id + ": " + s.name + " is not fetched or fails its checksum");
  const RawDataset raw = extract(d, archive_dir);
  PreparedSplits prepared = split_dataset(raw, d);

  TaskInfo info;
  info.id = d.id;
  info.name = d.name;
  info.year = d.year;
  info.domain = d.domain;
  info.kind = d.kind;
  info.num_classes = static_cast<int>(raw.class_names.size());
  double h = 0, w = 0;
  std::size_t n = 0;
  for (const Split* s : {&prepared.splits.train, &prepared.splits.val, &prepared.splits.test})
    for (const auto& e : *s) {
      h += e.height;
      w += e.width;
      ++n;
    }
  info.avg_resolution = {static_cast<int>(std::lround(h / n)), static_cast<int>(std::lround(w / n))};
  auto splits = std::make_shared<TaskSplits>(std::move(prepared.splits));
  Task task(info, splits);

  const auto dir = prepared_dir(cache_dir) / d.id;
  json files = json::object(), checksums = json::object();
  const std::pair<const char*, const Split*> parts[] = {
      {"train", &task.train()}, {"val", &task.val()}, {"test", &task.test()}};
  for (const auto& [role, split] : parts) {
    const auto bytes = encode_split(*split);
    write_file_atomic(dir / (std::string(role) + ".rec"), bytes);
    files[role] = d.id + "/" + role + ".rec";
    checksums[role] = sha256_hex(bytes);
  }
  json sources = json::object();
  for (const auto& s : d.sources) sources[s.name] = s.checksum;
  const json sidecar = {
      {"record", "prepared_task"},
      {"version", 1},
      {"id", d.id},
      {"name", d.name},
      {"year", d.year},
      {"domain", d.domain},
      {"kind", to_string(d.kind)},
      {"num_classes", info.num_classes},
      {"class_names", raw.class_names},
      {"sizes", {{"train", task.train().size()}, {"val", task.val().size()}, {"test", task.test().size()}}},
      {"avg_resolution", {info.avg_resolution.height, info.avg_resolution.width}},
      {"raw_count", prepared.raw_count},
      {"duplicates_removed", prepared.duplicates_removed},
      {"files", files},
      {"checksums", checksums},
      {"sources", sources},
      {"descriptor", to_json(d)}};
  write_file_atomic(dir / "task.json", sidecar.dump(2) + "\n");
  return task;
}

ManifestRow read_prepared_row(const std::filesystem::path& cache_dir, const std::string& id) {
  const auto path = prepared_dir(cache_dir) / id / "task.json";
  std::ifstream in(path);
  if (!in) throw DataError("dataset " + id + " is not prepared (" + path.string() + " missing)");
  try {
    json j;
    in >> j;
    ManifestRow row;
    row.info.id = j.at("id");
    row.info.name = j.at("name");
    row.info.year = j.at("year");
    row.info.domain = j.at("domain");
    row.info.kind = task_kind_from_string(j.at("kind"));
    row.info.num_classes = j.at("num_classes");
    row.info.avg_resolution = {j.at("avg_resolution")[0], j.at("avg_resolution")[1]};
    row.info.sizes = {j.at("sizes").at("train"), j.at("sizes").at("val"), j.at("sizes").at("test")};
    row.files = j.at("files").get<std::map<std::string, std::string>>();
    row.checksums = j.at("checksums").get<std::map<std::string, std::string>>();
    return row;
  } catch (const json::exception& ex) {
    throw DataError("malformed sidecar " + path.string() + ": " + ex.what());
  }
}

}  // namespace taskstream
