// Copyright 2026 The SemID Lab Authors. All Rights Reserved.
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

#pragma once

// Text-format helpers shared by every file the lab writes.
//
// Every output file starts with one header line:
//   # semid-lab <kind> v<version> config_hash=<16 hex> seed=<decimal>
// Lines starting with '#' are comments elsewhere in the file.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace semid::io {

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);
std::uint64_t parse_hex64(std::string_view s);

// Shortest decimal text that parses back to the identical double.
std::string format_double(double v);
double parse_double(std::string_view s);
std::uint64_t parse_u64(std::string_view s);
std::int64_t parse_i64(std::string_view s);

std::vector<std::string_view> split(std::string_view s, char sep);

struct FileHeader {
  std::string kind;
  int version = 1;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;

  std::string to_line() const;
  static FileHeader parse(std::string_view line);
};

// Reads the header of `path` and checks its kind.
FileHeader read_header(const std::filesystem::path& path, std::string_view expected_kind);

// Throws FormatError unless the header carries `expected_hash`.
void require_hash(const FileHeader& header, std::uint64_t expected_hash,
                  const std::filesystem::path& path);

}  // namespace semid::io
