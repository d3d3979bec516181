// Copyright 2026 The histore Authors.
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

// File, digest and encoding helpers shared by every stage.

#ifndef HISTORE_UTIL_H_
#define HISTORE_UTIL_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace histore {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::string read_file(const std::filesystem::path &path);

// Writes to a sibling temporary file and renames it over `path`, so readers
// never observe a partially written artifact.
void write_file_atomic(const std::filesystem::path &path, std::string_view data);

std::vector<json> read_jsonl(const std::filesystem::path &path);
std::vector<json> parse_jsonl(std::string_view text);
std::string to_jsonl(std::span<const json> records);
std::string to_jsonl(std::span<const ordered_json> records);

json read_json(const std::filesystem::path &path);

std::string sha256_hex(std::string_view data);
std::string file_sha256(const std::filesystem::path &path);

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

// Stable 64-bit FNV-1a, used to derive per-item seeds.
uint64_t fnv1a64(std::string_view data, uint64_t seed = 0xcbf29ce484222325ULL);

// Whitespace in the ASCII sense; multibyte UTF-8 sequences are never spaces
// here, which is adequate for the corpora this tool targets.
inline bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
         c == '\v';
}

// Letters, digits and every byte of a multibyte UTF-8 sequence.
inline bool is_word_byte(char c) {
  auto u = static_cast<unsigned char>(c);
  return u >= 0x80 || (u >= '0' && u <= '9') || (u >= 'a' && u <= 'z') ||
         (u >= 'A' && u <= 'Z');
}

std::string_view trim(std::string_view s);
std::vector<std::string_view> split_whitespace(std::string_view s);
std::vector<std::string> split(std::string_view s, char delim);

// Shortest decimal representation that round-trips a double exactly.
std::string format_double(double value);

// Current wall clock as an ISO-8601 UTC string.
std::string utc_timestamp();

}  // namespace histore

#endif  // HISTORE_UTIL_H_
