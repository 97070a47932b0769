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

#include "semid/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

#include "semid/errors.hpp"

namespace semid::io {

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  auto [p, ec] = std::to_chars(buf, buf + 16, v, 16);
  std::string s(buf, p);
  return std::string(16 - s.size(), '0') + s;
}

std::uint64_t parse_hex64(std::string_view s) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v, 16);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw FormatError("bad hex value '" + std::string(s) + "'");
  }
  return v;
}

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

double parse_double(std::string_view s) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw FormatError("bad number '" + std::string(s) + "'");
  }
  return v;
}

std::uint64_t parse_u64(std::string_view s) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw FormatError("bad unsigned integer '" + std::string(s) + "'");
  }
  return v;
}

std::int64_t parse_i64(std::string_view s) {
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw FormatError("bad integer '" + std::string(s) + "'");
  }
  return v;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string FileHeader::to_line() const {
  return "# semid-lab " + kind + " v" + std::to_string(version) +
         " config_hash=" + hex64(config_hash) + " seed=" + std::to_string(seed);
}

FileHeader FileHeader::parse(std::string_view line) {
  auto parts = split(line, ' ');
  if (parts.size() != 6 || parts[0] != "#" || parts[1] != "semid-lab" || parts[3].empty() ||
      parts[3][0] != 'v' || !parts[4].starts_with("config_hash=") ||
      !parts[5].starts_with("seed=")) {
    throw FormatError("missing or malformed semid-lab header: '" + std::string(line) + "'");
  }
  FileHeader h;
  h.kind = std::string(parts[2]);
  h.version = static_cast<int>(parse_i64(parts[3].substr(1)));
  h.config_hash = parse_hex64(parts[4].substr(12));
  h.seed = parse_u64(parts[5].substr(5));
  return h;
}

FileHeader read_header(const std::filesystem::path& path, std::string_view expected_kind) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open " + path.string());
  std::string line;
  std::getline(is, line);
  auto h = FileHeader::parse(line);
  if (h.kind != expected_kind) {
    throw FormatError(path.string() + ": expected a " + std::string(expected_kind) +
                      " file, found " + h.kind);
  }
  return h;
}

void require_hash(const FileHeader& header, std::uint64_t expected_hash,
                  const std::filesystem::path& path) {
  if (header.config_hash != expected_hash) {
    throw FormatError("config-hash mismatch: " + path.string() + " has " +
                      hex64(header.config_hash) + ", this stage expects " +
                      hex64(expected_hash));
  }
}

}  // namespace semid::io
