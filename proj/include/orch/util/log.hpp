/* Copyright 2026 The Orch Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#ifndef ORCH_UTIL_LOG_HPP_
#define ORCH_UTIL_LOG_HPP_

#include <iostream>
#include <mutex>
#include <sstream>
#include <string>

namespace orch {
namespace logdetail {

inline std::mutex& log_mutex() {
  static std::mutex m;
  return m;
}

inline bool& quiet_flag() {
  static bool quiet = false;
  return quiet;
}

}  // namespace logdetail

// Diagnostics go to stderr; stdout is reserved for status streams and traces.
inline void log_line(const char* level, const std::string& component, const std::string& msg) {
  if (logdetail::quiet_flag()) return;
  std::lock_guard<std::mutex> lock(logdetail::log_mutex());
  std::cerr << "[" << level << "] " << component << ": " << msg << "\n";
}

inline void log_info(const std::string& component, const std::string& msg) {
  log_line("info", component, msg);
}

inline void log_warn(const std::string& component, const std::string& msg) {
  log_line("warn", component, msg);
}

inline void log_error(const std::string& component, const std::string& msg) {
  log_line("error", component, msg);
}

inline void set_log_quiet(bool quiet) { logdetail::quiet_flag() = quiet; }

}  // namespace orch

#endif  // ORCH_UTIL_LOG_HPP_
