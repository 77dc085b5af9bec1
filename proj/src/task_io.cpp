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

#include "taskstream/task_io.hpp"

#include <openssl/evp.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>

namespace taskstream {
namespace {

constexpr char kMagic[4] = {'T', 'S', 'R', 'C'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  template <typename T>
  void put(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    std::uint8_t buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    // Little-endian hosts only; checked in CMake.
    bytes_.insert(bytes_.end(), buf, buf + sizeof(T));
  }
  void put_bytes(const void* data, std::size_t n) {
    auto p = static_cast<const std::uint8_t*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw DataError("truncated example container");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> encode_example(const Example& e) {
  Writer w;
  const bool image = e.is_image();
  w.put<std::uint8_t>(image ? 1 : 0);
  w.put<std::uint16_t>(static_cast<std::uint16_t>(e.height));
  w.put<std::uint16_t>(static_cast<std::uint16_t>(e.width));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(e.channels));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(e.input.size()));
  if (e.labels.empty()) {
    w.put<std::uint8_t>(0);
    w.put<std::int32_t>(e.label);
  } else {
    w.put<std::uint8_t>(1);
    w.put<std::uint16_t>(static_cast<std::uint16_t>(e.labels.size()));
    w.put_bytes(e.labels.data(), e.labels.size());
  }
  if (image) {
    for (float v : e.input) {
      const float c = std::clamp(v, 0.0f, 1.0f);
      w.put<std::uint8_t>(static_cast<std::uint8_t>(std::lround(c * 255.0f)));
    }
  } else {
    w.put_bytes(e.input.data(), e.input.size() * sizeof(float));
  }
  return std::move(w.bytes());
}

Example decode_example(std::span<const std::uint8_t> payload) {
  Reader r(payload);
  Example e;
  const auto encoding = r.get<std::uint8_t>();
  e.height = r.get<std::uint16_t>();
  e.width = r.get<std::uint16_t>();
  e.channels = r.get<std::uint8_t>();
  const auto count = r.get<std::uint32_t>();
  const auto label_kind = r.get<std::uint8_t>();
  if (label_kind == 0) {
    e.label = r.get<std::int32_t>();
  } else if (label_kind == 1) {
    const auto n = r.get<std::uint16_t>();
    auto raw = r.take(n);
    e.labels.assign(raw.begin(), raw.end());
  } else {
    throw DataError("unknown label kind in example container");
  }
  e.input.resize(count);
  if (encoding == 1) {
    if (static_cast<std::size_t>(e.height) * e.width * e.channels != count)
      throw DataError("image shape does not match value count");
    auto raw = r.take(count);
    for (std::uint32_t i = 0; i < count; ++i) e.input[i] = raw[i] / 255.0f;
  } else if (encoding == 0) {
    auto raw = r.take(count * sizeof(float));
    std::memcpy(e.input.data(), raw.data(), raw.size());
  } else {
    throw DataError("unknown input encoding in example container");
  }
  if (!r.done()) throw DataError("trailing bytes in example record");
  return e;
}

}  // namespace

std::string digest_hex(const std::string& algorithm, std::span<const std::uint8_t> bytes) {
  const EVP_MD* md = EVP_get_digestbyname(algorithm.c_str());
  if (!md) throw ConfigError("unknown digest algorithm '" + algorithm + "'");
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(),
                                                               EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), md, nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
    throw Error(algorithm + " digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) { return digest_hex("sha256", bytes); }

std::string sha256_file(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return sha256_hex(bytes);
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>());
}

void write_file_atomic(const std::filesystem::path& path,
                       std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  static std::atomic<unsigned> counter{0};
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter++);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw Error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, std::span<const std::uint8_t>(
                              reinterpret_cast<const std::uint8_t*>(text.data()),
                              text.size()));
}

std::vector<std::uint8_t> encode_split(const Split& split) {
  Writer w;
  w.put_bytes(kMagic, 4);
  w.put<std::uint32_t>(kVersion);
  w.put<std::uint64_t>(split.size());
  for (const auto& e : split) {
    const auto payload = encode_example(e);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(payload.size()));
    w.put_bytes(payload.data(), payload.size());
  }
  return std::move(w.bytes());
}

Split decode_split(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  auto magic = r.take(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0)
    throw DataError("not an example container (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion)
    throw DataError("unsupported example container version " + std::to_string(version));
  const auto count = r.get<std::uint64_t>();
  Split split;
  split.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = r.get<std::uint32_t>();
    split.push_back(decode_example(r.take(len)));
  }
  if (!r.done()) throw DataError("trailing bytes in example container");
  return split;
}

void write_split(const std::filesystem::path& path, const Split& split) {
  write_file_atomic(path, encode_split(split));
}

Split read_split(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return decode_split(bytes);
}

std::vector<std::uint8_t> encode_blobs(const std::vector<Blob>& blobs) {
  std::vector<std::uint8_t> out = {'T', 'S', 'B', 'L'};
  auto put = [&out](const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), b, b + n);
  };
  const std::uint32_t version = 1;
  const auto count = static_cast<std::uint32_t>(blobs.size());
  put(&version, 4);
  put(&count, 4);
  for (const auto& [name, bytes] : blobs) {
    const auto n = static_cast<std::uint32_t>(name.size());
    const auto size = static_cast<std::uint64_t>(bytes.size());
    put(&n, 4);
    put(name.data(), name.size());
    put(&size, 8);
    put(bytes.data(), bytes.size());
  }
  return out;
}

std::vector<Blob> decode_blobs(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  auto take = [&](void* dst, std::size_t n) {
    if (pos + n > bytes.size()) throw DataError("truncated blob container");
    std::memcpy(dst, bytes.data() + pos, n);
    pos += n;
  };
  char magic[4];
  take(magic, 4);
  if (std::memcmp(magic, "TSBL", 4) != 0) throw DataError("not a blob container (bad magic)");
  std::uint32_t version = 0, count = 0;
  take(&version, 4);
  if (version != 1) throw DataError("unsupported blob container version " + std::to_string(version));
  take(&count, 4);
  std::vector<Blob> blobs;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint32_t n = 0;
    take(&n, 4);
    std::string name(n, '\0');
    take(name.data(), n);
    std::uint64_t size = 0;
    take(&size, 8);
    if (size > bytes.size() - pos) throw DataError("truncated blob container");
    std::vector<std::uint8_t> data(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                                   bytes.begin() + static_cast<std::ptrdiff_t>(pos + size));
    pos += size;
    blobs.emplace_back(std::move(name), std::move(data));
  }
  if (pos != bytes.size()) throw DataError("trailing bytes in blob container");
  return blobs;
}

}  // namespace taskstream
