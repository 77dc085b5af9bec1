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

#ifndef TASKSTREAM_TASK_IO_HPP_
#define TASKSTREAM_TASK_IO_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "taskstream/stream.hpp"

namespace taskstream {

// Hex SHA-256 digests.
// Hex digest with an OpenSSL algorithm name such as "sha256" or "md5".
std::string digest_hex(const std::string& algorithm, std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_file(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path,
                       std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, const std::string& text);

// Length-prefixed example container:
//   "TSRC" u32 version u64 count { u32 length, payload }*
// Payload: u8 encoding (0 f32 vector, 1 u8 image), u16 height, u16 width,
// u8 channels, u32 value count, u8 label kind, label, values.
std::vector<std::uint8_t> encode_split(const Split& split);
Split decode_split(std::span<const std::uint8_t> bytes);

void write_split(const std::filesystem::path& path, const Split& split);
Split read_split(const std::filesystem::path& path);

// Named byte blobs: "TSBL" u32 version u32 count { u32 name length, name,
// u64 size, bytes }*. Order is preserved.
using Blob = std::pair<std::string, std::vector<std::uint8_t>>;
std::vector<std::uint8_t> encode_blobs(const std::vector<Blob>& blobs);
std::vector<Blob> decode_blobs(std::span<const std::uint8_t> bytes);

}  // namespace taskstream

#endif  // TASKSTREAM_TASK_IO_HPP_
