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

#include "semid/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace semid {
namespace {
std::atomic<LogLevel> g_level{LogLevel::Info};
std::mutex g_mu;
}  // namespace

void set_log_level(LogLevel level) { g_level = level; }
LogLevel log_level() { return g_level; }

void log(LogLevel level, std::string_view message) {
  if (level < g_level.load()) return;
  static constexpr const char* kTags[] = {"D", "I", "W", "E"};
  std::lock_guard lock(g_mu);
  std::cerr << '[' << kTags[static_cast<int>(level)] << "] " << message << '\n';
}

}  // namespace semid
