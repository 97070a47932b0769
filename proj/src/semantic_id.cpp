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

#include "semid/semantic_id.hpp"

#include <algorithm>
#include <fstream>

#include "semid/errors.hpp"

namespace semid {

std::string SemanticId::to_string() const {
  std::string s;
  for (std::size_t i = 0; i < codes.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(codes[i]);
  }
  return s;
}

SemanticId SemanticId::parse(std::string_view text) {
  SemanticId id;
  for (auto part : io::split(text, ',')) {
    id.codes.push_back(static_cast<std::uint32_t>(io::parse_u64(part)));
  }
  return id;
}

bool SemanticId::shares_prefix(const SemanticId& other, std::size_t depth) const {
  if (depth > codes.size() || depth > other.codes.size()) return false;
  return std::equal(codes.begin(), codes.begin() + static_cast<std::ptrdiff_t>(depth),
                    other.codes.begin());
}

SemanticIdTable::SemanticIdTable(std::size_t levels, std::uint32_t codebook_size)
    : levels_(levels), codebook_size_(codebook_size) {
  if (levels == 0 || codebook_size < 2) throw ConfigError("semid table: need L >= 1 and K >= 2");
}

void SemanticIdTable::set(std::uint64_t raw_id, SemanticId id) {
  if (id.levels() != levels_) {
    throw DimensionError("semid table: id has " + std::to_string(id.levels()) + " codes, table " +
                         std::to_string(levels_));
  }
  for (auto c : id.codes) {
    if (c >= codebook_size_) throw IndexError("semid table: code " + std::to_string(c) + " >= K");
  }
  entries_[raw_id] = std::move(id);
}

const SemanticId* SemanticIdTable::find(std::uint64_t raw_id) const {
  auto it = entries_.find(raw_id);
  return it == entries_.end() ? nullptr : &it->second;
}

void SemanticIdTable::save(const std::filesystem::path& path, const io::FileHeader& header) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw FormatError("cannot write " + path.string());
  os << header.to_line() << '\n';
  os << "# levels=" << levels_ << " codebook_size=" << codebook_size_ << '\n';
  std::vector<std::uint64_t> ids;
  ids.reserve(entries_.size());
  for (const auto& [k, v] : entries_) ids.push_back(k);
  std::sort(ids.begin(), ids.end());
  for (auto id : ids) os << id << '\t' << entries_.at(id).to_string() << '\n';
  if (!os) throw FormatError("write failed for " + path.string());
}

SemanticIdTable SemanticIdTable::load(const std::filesystem::path& path, io::FileHeader* header) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open " + path.string());
  std::string line;
  std::getline(is, line);
  auto h = io::FileHeader::parse(line);
  if (h.kind != "semid-table") throw FormatError(path.string() + " is not a semid-table file");
  if (header) *header = h;
  std::getline(is, line);
  auto parts = io::split(line, ' ');
  if (parts.size() != 3 || !parts[1].starts_with("levels=") ||
      !parts[2].starts_with("codebook_size=")) {
    throw FormatError(path.string() + ": missing levels/codebook_size line");
  }
  SemanticIdTable table(io::parse_u64(parts[1].substr(7)),
                        static_cast<std::uint32_t>(io::parse_u64(parts[2].substr(14))));
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto cols = io::split(line, '\t');
    if (cols.size() != 2) throw FormatError(path.string() + ": expected two columns");
    table.set(io::parse_u64(cols[0]), SemanticId::parse(cols[1]));
  }
  return table;
}

}  // namespace semid
