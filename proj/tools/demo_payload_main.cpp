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

// Demo payload exercising the rendezvous contract end to end:
//   ps roles bind their own cluster-spec endpoint and echo one line per
//   connection; worker roles connect to ps/0, send a ping, check the echo,
//   and exit 0. Roles come from ORCH_TASK_TYPE; endpoints from
//   ORCH_CLUSTER_SPEC.
//
// Fault-injection flags for recovery demos:
//   --fail-task <group/index>  target task for the flags below
//   --fail-attempt <n>         exit 1 when ORCH_ATTEMPT == n
//   --fail-marker <path>       exit 1 once, creating <path> as the marker

#include <unistd.h>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>

#include "orch/core/cluster_spec.hpp"
#include "orch/util/net.hpp"

using orch::ClusterSpec;
using orch::Endpoint;
using orch::TaskId;

namespace {

int serve_echo(const Endpoint& me) {
  auto listener = orch::net::tcp_listen("127.0.0.1", me.port);
  if (!listener) {
    std::cerr << "payload: cannot bind " << me.str() << ": " << listener.error() << "\n";
    return 1;
  }
  std::cout << "payload: ps serving on " << me.str() << std::endl;
  for (;;) {
    auto conn = orch::net::accept_conn(listener.value());
    if (!conn) return 0;  // torn down
    orch::net::LineReader reader(conn.value().fd());
    auto line = reader.read_line();
    if (line) orch::net::send_all(conn.value().fd(), *line);
  }
}

int ping_ps(const Endpoint& target, const std::string& self) {
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(8);
  while (std::chrono::steady_clock::now() < deadline) {
    auto conn = orch::net::tcp_connect(target.host, target.port);
    if (conn) {
      const std::string ping = "ping " + self + "\n";
      if (!orch::net::send_all(conn.value().fd(), ping)) return 4;
      orch::net::LineReader reader(conn.value().fd());
      auto echo = reader.read_line();
      if (!echo || *echo != ping) {
        std::cerr << "payload: bad echo\n";
        return 3;
      }
      std::cout << "payload: " << self << " got echo from " << target.str() << std::endl;
      return 0;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  }
  std::cerr << "payload: ps unreachable at " << target.str() << "\n";
  return 4;
}

}  // namespace

int main(int argc, char** argv) {
  const char* spec_env = std::getenv("ORCH_CLUSTER_SPEC");
  const char* type_env = std::getenv("ORCH_TASK_TYPE");
  const char* index_env = std::getenv("ORCH_TASK_INDEX");
  const char* attempt_env = std::getenv("ORCH_ATTEMPT");
  if (!spec_env || !type_env || !index_env || !attempt_env) {
    std::cerr << "payload: missing ORCH_* environment\n";
    return 2;
  }
  const TaskId self{type_env, std::atoi(index_env)};
  const int attempt = std::atoi(attempt_env);

  std::string fail_task, fail_marker;
  int fail_attempt = -1;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    auto next = [&]() -> std::string { return i + 1 < argc ? argv[++i] : ""; };
    if (arg == "--fail-task") fail_task = next();
    else if (arg == "--fail-attempt") fail_attempt = std::atoi(next().c_str());
    else if (arg == "--fail-marker") fail_marker = next();
  }

  if (fail_task == self.str()) {
    if (fail_attempt > 0 && attempt == fail_attempt) {
      std::cerr << "payload: scripted failure on attempt " << attempt << "\n";
      return 1;
    }
    if (!fail_marker.empty() && !std::ifstream(fail_marker).good()) {
      std::ofstream marker(fail_marker);
      marker << self.str() << " failed attempt " << attempt << "\n";
      std::cerr << "payload: scripted one-shot failure (marker " << fail_marker << ")\n";
      return 1;
    }
  }

  auto parsed = orch::parse_cluster_spec(spec_env);
  if (!parsed) {
    std::cerr << "payload: bad ORCH_CLUSTER_SPEC: " << parsed.error() << "\n";
    return 2;
  }
  const ClusterSpec& spec = parsed.value();

  if (self.group == "ps") {
    auto mine = spec.endpoint_of(self);
    if (!mine) {
      std::cerr << "payload: no endpoint for " << self.str() << "\n";
      return 2;
    }
    auto ep = Endpoint::parse(*mine);
    if (!ep) return 2;
    return serve_echo(*ep);
  }

  // Worker-style roles: rendezvous with ps/0 when a ps group exists.
  auto ps0 = spec.endpoint_of({"ps", 0});
  if (!ps0) {
    std::cout << "payload: " << self.str() << " has no ps to contact, done" << std::endl;
    return 0;
  }
  auto target = Endpoint::parse(*ps0);
  if (!target) return 2;
  return ping_ps(*target, self.str());
}
