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
#ifndef ORCH_BACKEND_LOCAL_HPP_
#define ORCH_BACKEND_LOCAL_HPP_

#include <fcntl.h>
#include <signal.h>
#include <sys/stat.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "orch/backend/types.hpp"
#include "orch/executor/executor.hpp"
#include "orch/master/master.hpp"
#include "orch/util/log.hpp"
#include "orch/util/net.hpp"
#include "orch/util/queue.hpp"

namespace orch {
namespace local {

// The master's serialized event loop for wall-clock backends: everything
// that touches the master is a closure drained by one thread.
class MasterLoop {
 public:
  void post(std::function<void()> fn) { queue_.push(std::move(fn)); }

  // Drains closures until done() holds or the deadline passes. Returns
  // false on deadline.
  bool run(const std::function<bool()>& done, std::chrono::milliseconds deadline) {
    const auto until = std::chrono::steady_clock::now() + deadline;
    while (!done()) {
      if (std::chrono::steady_clock::now() >= until) return false;
      auto fn = queue_.pop_for(std::chrono::milliseconds(50));
      if (fn) (*fn)();
    }
    return true;
  }

 private:
  BlockingQueue<std::function<void()>> queue_;
};

// Accepts executor connections, decodes frames into the master loop, and
// routes outbound messages by (attempt, task). Executors dial in; the
// master never dials out.
class MasterServer {
 public:
  explicit MasterServer(MasterLoop& loop) : loop_(loop) {}

  ~MasterServer() { shutdown(); }

  // Returns the bound address, or nullopt (logged) on failure.
  std::optional<std::string> listen() {
    auto sock = net::tcp_listen("127.0.0.1", 0);
    if (!sock) {
      log_error("master-server", sock.error());
      return std::nullopt;
    }
    listener_ = std::move(sock.value());
    const int port = net::local_port(listener_);
    if (port <= 0) {
      log_error("master-server", "getsockname failed");
      return std::nullopt;
    }
    accept_thread_ = std::thread([this] { accept_loop(); });
    return "127.0.0.1:" + std::to_string(port);
  }

  void set_master(Master* master) { master_ = master; }

  bool send(const TaskId& task, const Message& msg) {
    std::shared_ptr<Conn> conn;
    {
      std::lock_guard<std::mutex> lock(mu_);
      auto it = routes_.find(route_key(msg.attempt, task));
      if (it == routes_.end()) return false;
      conn = it->second;
    }
    std::lock_guard<std::mutex> lock(conn->write_mu);
    return net::send_all(conn->sock.fd(), encode(msg));
  }

  void shutdown() {
    if (stopping_.exchange(true)) return;
    listener_.close();
    std::vector<std::shared_ptr<Conn>> conns;
    {
      std::lock_guard<std::mutex> lock(mu_);
      conns = conns_;
    }
    for (auto& c : conns) c->sock.close();
    if (accept_thread_.joinable()) accept_thread_.join();
    for (auto& c : conns)
      if (c->reader.joinable()) c->reader.join();
  }

 private:
  struct Conn {
    net::Socket sock;
    std::mutex write_mu;
    std::thread reader;
  };

  static std::string route_key(int attempt, const TaskId& task) {
    return std::to_string(attempt) + "|" + task.str();
  }

  void accept_loop() {
    for (;;) {
      auto conn = net::accept_conn(listener_);
      if (!conn) break;  // listener closed
      auto c = std::make_shared<Conn>();
      c->sock = std::move(conn.value());
      {
        std::lock_guard<std::mutex> lock(mu_);
        if (stopping_.load()) return;
        conns_.push_back(c);
      }
      c->reader = std::thread([this, c] { read_loop(c); });
    }
  }

  void read_loop(const std::shared_ptr<Conn>& conn) {
    net::LineReader reader(conn->sock.fd());
    for (;;) {
      auto line = reader.read_line();
      if (!line) break;
      auto decoded = decode(*line);
      if (!decoded) {
        log_warn("master-server",
                 std::string("undecodable frame: ") + to_string(decoded.error().kind));
        continue;
      }
      Message msg = std::move(decoded.value());
      if (msg.type() == MessageType::Register && msg.task) {
        // Bind the route before the master processes the registration, so
        // the broadcast triggered by the last REGISTER can reach everyone.
        std::lock_guard<std::mutex> lock(mu_);
        routes_[route_key(msg.attempt, *msg.task)] = conn;
      }
      if (master_) loop_.post([m = master_, msg = std::move(msg)] { m->on_message(msg); });
    }
  }

  MasterLoop& loop_;
  Master* master_ = nullptr;
  net::Socket listener_;
  std::thread accept_thread_;
  std::mutex mu_;
  std::vector<std::shared_ptr<Conn>> conns_;
  std::map<std::string, std::shared_ptr<Conn>> routes_;
  std::atomic<bool> stopping_{false};
};

struct LocalBackendConfig {
  std::string workdir = "orch-work";
  int slots = 16;
  std::string executor_bin;     // defaults to <self>/orch-executor
  std::string app_dir;          // child working directory when non-empty
  std::string advertise_host = "127.0.0.1";
};

inline std::string default_executor_bin() {
  if (const char* env = std::getenv("ORCH_EXECUTOR_BIN")) return env;
  char buf[4096];
  const ssize_t n = ::readlink("/proc/self/exe", buf, sizeof(buf) - 1);
  if (n > 0) {
    buf[n] = '\0';
    return (std::filesystem::path(buf).parent_path() / "orch-executor").string();
  }
  return "orch-executor";
}

// Runs each granted container as a real executor process on localhost.
// Memory/vcores/gpus are recorded but only slot count gates admission;
// per-task logs land at <workdir>/logs/<attempt>/<group>-<index>.log.
class LocalBackend : public MasterBackend {
 public:
  LocalBackend(LocalBackendConfig config, MasterLoop& loop, MasterServer& server)
      : config_(std::move(config)), loop_(loop), server_(server) {
    if (config_.executor_bin.empty()) config_.executor_bin = default_executor_bin();
  }

  ~LocalBackend() { shutdown(); }

  void set_master(Master* master) { master_ = master; }

  int live_executors() const {
    std::lock_guard<std::mutex> lock(mu_);
    int n = 0;
    for (const auto& [_, alloc] : allocations_)
      if (!alloc.released && alloc.pid > 0) ++n;
    return n;
  }

  // --- MasterBackend ------------------------------------------------------

  void request_containers(const std::vector<ContainerRequest>& requests) override {
    std::lock_guard<std::mutex> lock(mu_);
    for (const auto& r : requests) pending_.push_back(r);
    grant_while_possible();
  }

  void cancel_pending_requests() override {
    std::lock_guard<std::mutex> lock(mu_);
    pending_.clear();
  }

  void launch(const ContainerHandle& container, const Bootstrap& boot) override {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = allocations_.find(container.id);
    if (it == allocations_.end() || it->second.released) {
      log_warn("local", "launch on released container " + container.id);
      return;
    }
    const pid_t pid = spawn_executor(container, boot);
    if (pid < 0) {
      log_error("local", "failed to spawn executor for " + boot.task.str());
      return;
    }
    it->second.pid = pid;
  }

  void release(const ContainerHandle& container) override {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = allocations_.find(container.id);
    if (it == allocations_.end() || it->second.released) return;  // idempotent
    it->second.released = true;
    reap(it->second);
    used_slots_ -= 1;
    grant_while_possible();
  }

  bool send(const TaskId& task, const Message& msg) override { return server_.send(task, msg); }

  void start_timer(std::int64_t delay_ms, std::uint64_t token) override {
    std::lock_guard<std::mutex> lock(timers_mu_);
    if (stopping_) return;
    timers_.emplace_back([this, delay_ms, token] {
      std::unique_lock<std::mutex> lock(timers_mu_);
      if (timers_cv_.wait_for(lock, std::chrono::milliseconds(delay_ms),
                              [this] { return stopping_; }))
        return;
      lock.unlock();
      loop_.post([m = master_, token] { m->on_timer(token); });
    });
  }

  void shutdown() {
    std::vector<std::thread> timers;
    {
      std::lock_guard<std::mutex> lock(timers_mu_);
      if (stopping_) return;
      stopping_ = true;
      timers = std::move(timers_);
    }
    timers_cv_.notify_all();
    for (auto& t : timers)
      if (t.joinable()) t.join();
    std::lock_guard<std::mutex> lock(mu_);
    for (auto& [_, alloc] : allocations_)
      if (!alloc.released) reap(alloc);
  }

 private:
  struct Allocation {
    ContainerRequest request;
    pid_t pid = -1;
    bool released = false;
  };

  std::string log_link(const ContainerRequest& r) const {
    return config_.workdir + "/logs/" + std::to_string(r.attempt) + "/" + r.task.group + "-" +
           std::to_string(r.task.index) + ".log";
  }

  void grant_while_possible() {
    while (used_slots_ < config_.slots && !pending_.empty()) {
      const ContainerRequest req = pending_.front();
      pending_.pop_front();
      used_slots_ += 1;
      ContainerHandle handle;
      handle.id = "c" + std::to_string(next_container_id_++);
      handle.host = config_.advertise_host;
      handle.granted = req.resources;
      handle.log_link = log_link(req);
      allocations_[handle.id] = Allocation{req, -1, false};
      loop_.post([m = master_, handle, task = req.task] { m->on_allocated(handle, task); });
    }
  }

  pid_t spawn_executor(const ContainerHandle& container, const Bootstrap& boot) {
    std::error_code ec;
    std::filesystem::create_directories(
        std::filesystem::path(container.log_link).parent_path(), ec);
    const int log_fd = ::open(container.log_link.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (log_fd < 0) return -1;

    auto env = exec::environment_snapshot();
    env["ORCH_MASTER_ADDR"] = boot.master_addr;
    env["ORCH_TASK_TYPE"] = boot.task.group;
    env["ORCH_TASK_INDEX"] = std::to_string(boot.task.index);
    env["ORCH_ATTEMPT"] = std::to_string(boot.attempt);
    env["ORCH_HEARTBEAT_MS"] = std::to_string(boot.heartbeat_interval_ms);
    env["ORCH_IS_UI_TASK"] = boot.is_ui_task ? "1" : "0";
    env["ORCH_CMD"] = exec::encode_command(boot.command);
    env["ORCH_EXTRA_ENV"] = exec::encode_env_map(boot.extra_env);
    env["ORCH_ADVERTISE_HOST"] = config_.advertise_host;

    std::vector<std::string> env_strings;
    env_strings.reserve(env.size());
    for (const auto& [k, v] : env) env_strings.push_back(k + "=" + v);
    std::vector<char*> envp;
    for (const auto& e : env_strings) envp.push_back(const_cast<char*>(e.c_str()));
    envp.push_back(nullptr);
    const std::string bin = config_.executor_bin;
    std::vector<char*> argv = {const_cast<char*>(bin.c_str()), nullptr};
    const std::string cwd = config_.app_dir;

    const pid_t pid = ::fork();
    if (pid == 0) {
      ::setpgid(0, 0);
      ::dup2(log_fd, STDOUT_FILENO);
      ::dup2(log_fd, STDERR_FILENO);
      ::close(log_fd);
      if (!cwd.empty() && ::chdir(cwd.c_str()) != 0) ::_exit(exec::kExitProtocolFailure);
      ::execve(argv[0], argv.data(), envp.data());
      ::_exit(exec::kExitProtocolFailure);
    }
    ::close(log_fd);
    return pid;
  }

  // Force-kills whatever is still running in the container and reaps it.
  // The executor's child carries PDEATHSIG and follows it down.
  void reap(Allocation& alloc) {
    if (alloc.pid <= 0) return;
    ::kill(-alloc.pid, SIGKILL);
    int status = 0;
    while (::waitpid(alloc.pid, &status, 0) < 0 && errno == EINTR) {
    }
    alloc.pid = -1;
  }

  LocalBackendConfig config_;
  MasterLoop& loop_;
  MasterServer& server_;
  Master* master_ = nullptr;

  mutable std::mutex mu_;
  std::deque<ContainerRequest> pending_;
  std::map<std::string, Allocation> allocations_;
  int used_slots_ = 0;
  std::uint64_t next_container_id_ = 1;

  std::mutex timers_mu_;
  std::condition_variable timers_cv_;
  std::vector<std::thread> timers_;
  bool stopping_ = false;
};

}  // namespace local
}  // namespace orch

#endif  // ORCH_BACKEND_LOCAL_HPP_
