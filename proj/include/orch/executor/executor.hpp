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
#ifndef ORCH_EXECUTOR_EXECUTOR_HPP_
#define ORCH_EXECUTOR_EXECUTOR_HPP_

#include <signal.h>
#include <sys/prctl.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "orch/backend/types.hpp"
#include "orch/core/cluster_spec.hpp"
#include "orch/util/log.hpp"
#include "orch/util/net.hpp"
#include "orch/util/queue.hpp"
#include "orch/wire/message.hpp"

namespace orch {
namespace exec {

// Executor process exit codes, distinguishable without parsing logs:
// the child's own code after a normal EXIT report, 143 after TEARDOWN,
// 2 on protocol failure (master unreachable, connection lost).
constexpr int kExitTeardown = 143;
constexpr int kExitProtocolFailure = 2;
constexpr int kExitSpawnFailure = 127;

inline std::string encode_command(const std::vector<std::string>& command) {
  return nlohmann::json(command).dump();
}

inline Result<std::vector<std::string>, std::string> decode_command(const std::string& text) {
  nlohmann::json arr = nlohmann::json::parse(text, nullptr, false);
  if (arr.is_discarded() || !arr.is_array()) return std::string("ORCH_CMD is not a JSON array");
  std::vector<std::string> out;
  for (const auto& item : arr) {
    if (!item.is_string()) return std::string("ORCH_CMD entries must be strings");
    out.push_back(item.get<std::string>());
  }
  return out;
}

inline std::string encode_env_map(const std::map<std::string, std::string>& env) {
  return nlohmann::json(env).dump();
}

// Reads the bootstrap contract from the environment set by the backend.
inline Result<Bootstrap, std::string> bootstrap_from_env() {
  const char* addr = std::getenv("ORCH_MASTER_ADDR");
  const char* type = std::getenv("ORCH_TASK_TYPE");
  const char* index = std::getenv("ORCH_TASK_INDEX");
  const char* attempt = std::getenv("ORCH_ATTEMPT");
  const char* hb = std::getenv("ORCH_HEARTBEAT_MS");
  const char* cmd = std::getenv("ORCH_CMD");
  for (const auto& [value, name] :
       {std::pair{addr, "ORCH_MASTER_ADDR"}, {type, "ORCH_TASK_TYPE"},
        {index, "ORCH_TASK_INDEX"}, {attempt, "ORCH_ATTEMPT"}, {hb, "ORCH_HEARTBEAT_MS"},
        {cmd, "ORCH_CMD"}})
    if (!value) return std::string("missing env var: ") + name;

  Bootstrap boot;
  boot.master_addr = addr;
  auto task = TaskId::parse(std::string(type) + "/" + index);
  if (!task) return std::string("bad ORCH_TASK_TYPE/ORCH_TASK_INDEX");
  boot.task = *task;
  boot.attempt = std::atoi(attempt);
  if (boot.attempt < 1) return std::string("bad ORCH_ATTEMPT");
  boot.heartbeat_interval_ms = std::atoll(hb);
  if (boot.heartbeat_interval_ms < 1) return std::string("bad ORCH_HEARTBEAT_MS");
  if (const char* ui = std::getenv("ORCH_IS_UI_TASK")) boot.is_ui_task = std::string(ui) == "1";
  auto command = decode_command(cmd);
  if (!command) return command.error();
  boot.command = command.value();
  if (const char* extra = std::getenv("ORCH_EXTRA_ENV")) {
    nlohmann::json obj = nlohmann::json::parse(extra, nullptr, false);
    if (obj.is_discarded() || !obj.is_object())
      return std::string("ORCH_EXTRA_ENV is not a JSON object");
    for (const auto& [k, v] : obj.items()) {
      if (!v.is_string()) return std::string("ORCH_EXTRA_ENV values must be strings");
      boot.extra_env[k] = v.get<std::string>();
    }
  }
  return boot;
}

inline const std::vector<std::string>& reserved_env_keys() {
  static const std::vector<std::string> keys = {"ORCH_CLUSTER_SPEC", "ORCH_TASK_TYPE",
                                                "ORCH_TASK_INDEX", "ORCH_ATTEMPT"};
  return keys;
}

// The complete environment handed to the spawned child: inherited
// environment, plus extra_env, plus the reserved variables. Reserved keys
// always win; colliding extra_env entries are dropped and logged.
inline std::map<std::string, std::string> build_child_env(
    const ClusterSpec& spec, const Bootstrap& boot,
    const std::map<std::string, std::string>& inherited) {
  std::map<std::string, std::string> env = inherited;
  for (const auto& [key, value] : boot.extra_env) {
    bool reserved = false;
    for (const auto& r : reserved_env_keys()) reserved = reserved || key == r;
    if (reserved) {
      log_warn("executor", "extra_env entry " + key + " collides with a reserved key, dropped");
      continue;
    }
    env[key] = value;
  }
  env["ORCH_CLUSTER_SPEC"] = canonical_spec_encoding(spec);
  env["ORCH_TASK_TYPE"] = boot.task.group;
  env["ORCH_TASK_INDEX"] = std::to_string(boot.task.index);
  env["ORCH_ATTEMPT"] = std::to_string(boot.attempt);
  return env;
}

inline std::map<std::string, std::string> environment_snapshot() {
  std::map<std::string, std::string> env;
  for (char** e = environ; *e; ++e) {
    const std::string entry(*e);
    const auto eq = entry.find('=');
    if (eq != std::string::npos) env[entry.substr(0, eq)] = entry.substr(eq + 1);
  }
  return env;
}

namespace execdetail {

struct Event {
  enum class Kind { HeartbeatDue, SpecReceived, TeardownReceived, ChildExited, ConnLost };
  Kind kind;
  Message msg;
  int exit_code = 0;
};

// fork + execvpe with the child in its own process group. The child dies
// with the executor (PDEATHSIG), covering hard kills of the executor.
// Everything the child touches is built before fork(): the process is
// multithreaded, so only async-signal-safe calls are allowed after it.
inline pid_t spawn(const std::vector<std::string>& command,
                   const std::map<std::string, std::string>& env) {
  std::vector<std::string> env_strings;
  env_strings.reserve(env.size());
  for (const auto& [k, v] : env) env_strings.push_back(k + "=" + v);
  std::vector<char*> argv;
  for (const auto& arg : command) argv.push_back(const_cast<char*>(arg.c_str()));
  argv.push_back(nullptr);
  std::vector<char*> envp;
  for (const auto& e : env_strings) envp.push_back(const_cast<char*>(e.c_str()));
  envp.push_back(nullptr);

  const pid_t pid = ::fork();
  if (pid != 0) return pid;  // parent (or fork failure, -1)

  ::setpgid(0, 0);
  ::prctl(PR_SET_PDEATHSIG, SIGKILL);
  ::execvpe(argv[0], argv.data(), envp.data());
  ::_exit(kExitSpawnFailure);
}

inline int exit_code_from_status(int status) {
  if (WIFEXITED(status)) return WEXITSTATUS(status);
  if (WIFSIGNALED(status)) return 128 + WTERMSIG(status);
  return kExitProtocolFailure;
}

}  // namespace execdetail

// The executor lifecycle, in order: allocate port(s), connect, REGISTER,
// await SPEC of this attempt, spawn the child with the rendezvous
// environment, heartbeat until the child exits, report EXIT, terminate.
// TEARDOWN at any point: signal the child politely, wait out the grace,
// force-kill, exit without sending EXIT.
//
// Three concurrent duties (connection reading, heartbeat timing, child
// waiting) only enqueue events; the single loop below owns all state.
class Executor {
 public:
  explicit Executor(Bootstrap boot) : boot_(std::move(boot)) {}

  int run() {
    using execdetail::Event;

    auto data_port = net::allocate_port();
    if (!data_port) {
      log_error("executor", "port allocation failed: " + data_port.error());
      return kExitProtocolFailure;
    }
    net::PortReservation port = std::move(data_port.value());
    net::PortReservation ui_port;
    if (boot_.is_ui_task) {
      auto ui = net::allocate_port();
      if (!ui) {
        log_error("executor", "ui port allocation failed: " + ui.error());
        return kExitProtocolFailure;
      }
      ui_port = std::move(ui.value());
    }

    auto ep = Endpoint::parse(boot_.master_addr);
    if (!ep) {
      log_error("executor", "bad master address: " + boot_.master_addr);
      return kExitProtocolFailure;
    }
    net::Socket conn = connect_with_backoff(ep->host, ep->port);
    if (!conn.valid()) return kExitProtocolFailure;

    const char* advertise = std::getenv("ORCH_ADVERTISE_HOST");
    const std::string host = advertise ? advertise : "127.0.0.1";
    Message reg = Message::make_register(
        boot_.attempt, boot_.task, host, port.port(),
        boot_.is_ui_task ? std::optional<int>(ui_port.port()) : std::nullopt);
    if (!net::send_all(conn.fd(), encode(reg))) return kExitProtocolFailure;

    std::thread reader([this, fd = conn.fd()] { read_frames(fd); });
    std::thread heartbeats([this] { heartbeat_clock(); });

    int final_code = kExitProtocolFailure;
    bool done = false;
    while (!done) {
      Event ev = events_.pop();
      switch (ev.kind) {
        case Event::Kind::HeartbeatDue: {
          const ChildState state =
              child_pid_ > 0 ? ChildState::Running
                             : (child_exited_ ? ChildState::Exited : ChildState::NotStarted);
          net::send_all(conn.fd(), encode(Message::make_heartbeat(boot_.attempt, boot_.task,
                                                                  state)));
          break;
        }
        case Event::Kind::SpecReceived: {
          if (ev.msg.attempt != boot_.attempt) break;  // wrong attempt: keep waiting
          if (spawned_) break;
          spawned_ = true;
          auto parsed = parse_cluster_spec(std::get<SpecPayload>(ev.msg.payload).cluster_spec);
          if (!parsed) {
            log_error("executor", "bad cluster spec: " + parsed.error());
            net::send_all(conn.fd(), encode(Message::make_exit(boot_.attempt, boot_.task,
                                                               kExitSpawnFailure)));
            final_code = kExitSpawnFailure;
            done = true;
            break;
          }
          const auto env = build_child_env(parsed.value(), boot_, environment_snapshot());
          // Hand the ports over to the child.
          port.release();
          ui_port.release();
          const pid_t pid = execdetail::spawn(boot_.command, env);
          if (pid < 0) {
            net::send_all(conn.fd(), encode(Message::make_exit(boot_.attempt, boot_.task,
                                                               kExitSpawnFailure)));
            final_code = kExitSpawnFailure;
            done = true;
            break;
          }
          child_pid_ = pid;
          waiter_ = std::thread([this, pid] {
            int status = 0;
            while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
            }
            events_.push(Event{Event::Kind::ChildExited, Message{},
                               execdetail::exit_code_from_status(status)});
          });
          break;
        }
        case Event::Kind::ChildExited: {
          child_pid_ = -1;
          child_exited_ = true;
          net::send_all(conn.fd(),
                        encode(Message::make_exit(boot_.attempt, boot_.task, ev.exit_code)));
          final_code = ev.exit_code;
          done = true;
          break;
        }
        case Event::Kind::TeardownReceived: {
          const auto grace_ms = std::get<TeardownPayload>(ev.msg.payload).grace_ms;
          terminate_child(grace_ms);
          final_code = kExitTeardown;
          done = true;
          break;
        }
        case Event::Kind::ConnLost: {
          // The master is gone; the payload must not outlive supervision.
          terminate_child(0);
          final_code = kExitProtocolFailure;
          done = true;
          break;
        }
      }
    }

    stop_.store(true);
    hb_cv_.notify_all();
    conn.close();
    if (reader.joinable()) reader.join();
    if (heartbeats.joinable()) heartbeats.join();
    if (waiter_.joinable()) waiter_.join();
    return final_code;
  }

 private:
  net::Socket connect_with_backoff(const std::string& host, int port) {
    std::int64_t delay_ms = 200;
    for (int attempt = 0; attempt < 5; ++attempt) {
      auto conn = net::tcp_connect(host, port);
      if (conn) return std::move(conn.value());
      log_warn("executor", "connect to master failed: " + conn.error());
      std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
      delay_ms *= 2;
    }
    log_error("executor", "master unreachable after 5 tries");
    return net::Socket();
  }

  void read_frames(int fd) {
    using execdetail::Event;
    net::LineReader reader(fd);
    for (;;) {
      auto line = reader.read_line();
      if (!line) break;
      auto msg = decode(*line);
      if (!msg) {
        log_warn("executor", std::string("undecodable frame: ") + to_string(msg.error().kind));
        continue;
      }
      switch (msg.value().type()) {
        case MessageType::Spec:
          events_.push(Event{Event::Kind::SpecReceived, std::move(msg.value()), 0});
          break;
        case MessageType::Teardown:
          events_.push(Event{Event::Kind::TeardownReceived, std::move(msg.value()), 0});
          break;
        default:
          log_warn("executor", "unexpected inbound message");
          break;
      }
    }
    if (!stop_.load()) events_.push(Event{Event::Kind::ConnLost, Message{}, 0});
  }

  void heartbeat_clock() {
    using execdetail::Event;
    std::unique_lock<std::mutex> lock(hb_mu_);
    auto next = std::chrono::steady_clock::now();
    for (;;) {
      next += std::chrono::milliseconds(boot_.heartbeat_interval_ms);
      if (hb_cv_.wait_until(lock, next, [this] { return stop_.load(); })) return;
      events_.push(Event{Event::Kind::HeartbeatDue, Message{}, 0});
    }
  }

  // Polite then forceful: SIGTERM the child's process group, give it
  // grace_ms, then SIGKILL. The waiter thread is the only reaper.
  void terminate_child(std::int64_t grace_ms) {
    using execdetail::Event;
    if (child_pid_ <= 0) return;
    const pid_t pid = child_pid_;
    ::kill(-pid, SIGTERM);
    const auto deadline =
        std::chrono::steady_clock::now() + std::chrono::milliseconds(grace_ms);
    for (;;) {
      auto ev = events_.pop_for(std::chrono::milliseconds(20));
      if (ev && ev->kind == Event::Kind::ChildExited) {
        child_pid_ = -1;
        return;
      }
      if (std::chrono::steady_clock::now() >= deadline) break;
    }
    ::kill(-pid, SIGKILL);
    for (;;) {
      Event ev = events_.pop();
      if (ev.kind == Event::Kind::ChildExited) break;
    }
    child_pid_ = -1;
  }

  Bootstrap boot_;
  BlockingQueue<execdetail::Event> events_;
  std::thread waiter_;
  std::atomic<bool> stop_{false};
  std::mutex hb_mu_;
  std::condition_variable hb_cv_;
  pid_t child_pid_ = -1;
  bool child_exited_ = false;
  bool spawned_ = false;
};

inline int run(Bootstrap boot) { return Executor(std::move(boot)).run(); }

}  // namespace exec
}  // namespace orch

#endif  // ORCH_EXECUTOR_EXECUTOR_HPP_
