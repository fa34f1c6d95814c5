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
#ifndef ORCH_BACKEND_SIM_HPP_
#define ORCH_BACKEND_SIM_HPP_

#include <cassert>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <string>
#include <tuple>
#include <vector>

#include "orch/backend/types.hpp"
#include "orch/master/master.hpp"
#include "orch/trace/trace.hpp"
#include "orch/util/log.hpp"

namespace orch {
namespace sim {

struct SimHostConfig {
  std::string name;
  ResourceRequest capacity;

  bool operator==(const SimHostConfig&) const = default;
};

struct SimClusterConfig {
  std::vector<SimHostConfig> hosts;
  std::int64_t allocation_delay_ms = 1000;
  std::int64_t tick_interval_ms = 100;
  std::uint64_t seed = 0;

  bool operator==(const SimClusterConfig&) const = default;
};

// Same-time events fire in fixed category order, then insertion order.
enum class EventCategory { Allocation = 0, Fault = 1, Child = 2, Tick = 3 };

inline const char* to_string(EventCategory c) {
  switch (c) {
    case EventCategory::Allocation: return "allocation";
    case EventCategory::Fault: return "fault";
    case EventCategory::Child: return "child-event";
    case EventCategory::Tick: return "tick";
  }
  return "?";
}

// Single-threaded virtual clock and event queue. The only way time moves.
class SimWorld {
 public:
  struct FiredEvent {
    std::int64_t t;
    EventCategory category;
    std::string label;
  };

  std::int64_t now() const { return now_; }

  void at(std::int64_t t, EventCategory category, std::string label,
          std::function<void()> fn) {
    assert(t >= now_);
    queue_.push(Event{t, static_cast<int>(category), next_seq_++, std::move(label), std::move(fn)});
  }

  void after(std::int64_t delay, EventCategory category, std::string label,
             std::function<void()> fn) {
    at(now_ + delay, category, std::move(label), std::move(fn));
  }

  bool empty() const { return queue_.empty(); }

  std::int64_t next_time() const {
    assert(!queue_.empty());
    return queue_.top().t;
  }

  FiredEvent fire_next() {
    assert(!queue_.empty());
    Event ev = std::move(const_cast<Event&>(queue_.top()));
    queue_.pop();
    now_ = ev.t;
    ev.fn();
    return FiredEvent{ev.t, static_cast<EventCategory>(ev.category), ev.label};
  }

  // Advances virtual time to `until`, firing everything due. Deterministic:
  // (time, category, insertion order).
  std::vector<FiredEvent> step_until(std::int64_t until) {
    assert(until >= now_);
    std::vector<FiredEvent> fired;
    while (!queue_.empty() && queue_.top().t <= until) fired.push_back(fire_next());
    now_ = until;
    return fired;
  }

 private:
  struct Event {
    std::int64_t t;
    int category;
    std::uint64_t seq;
    std::string label;
    std::function<void()> fn;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      return std::tie(a.t, a.category, a.seq) > std::tie(b.t, b.category, b.seq);
    }
  };

  std::int64_t now_ = 0;
  std::uint64_t next_seq_ = 0;
  std::priority_queue<Event, std::vector<Event>, Later> queue_;
};

// Deterministic scheduler + in-process executor state machines. Allocation
// policy is plain FIFO first-fit across hosts in declaration order; the
// point is exercising the master, not modeling a real scheduler.
class SimBackend : public MasterBackend {
 public:
  SimBackend(SimClusterConfig config, SimWorld& world, TraceSink& trace)
      : config_(std::move(config)), world_(world), trace_(trace) {
    for (const auto& h : config_.hosts) {
      hosts_.push_back(Host{h.name, h.capacity, ResourceRequest{0, 0, 0}, 4000});
      emit(1, "cluster", "host",
           {{"host", h.name},
            {"memory_mb", h.capacity.memory_mb},
            {"vcores", h.capacity.vcores},
            {"gpus", h.capacity.gpus}});
    }
  }

  void set_master(Master* master) { master_ = master; }

  // --- MasterBackend ------------------------------------------------------

  void request_containers(const std::vector<ContainerRequest>& requests) override {
    for (const auto& req : requests) {
      if (!feasible(req.resources)) {
        world_.at(world_.now(), EventCategory::Allocation, "reject " + req.task.str(),
                  [this, req] {
                    master_->on_allocation_rejected(req.task, "infeasible: no host can fit " +
                                                                  req.task.str());
                  });
        continue;
      }
      pending_.push_back(req);
    }
    try_allocate();
  }

  void cancel_pending_requests() override { pending_.clear(); }

  void launch(const ContainerHandle& container, const Bootstrap& boot) override {
    auto it = allocations_.find(container.id);
    if (it == allocations_.end() || it->second.released) {
      log_warn("sim", "launch on released container " + container.id);
      return;
    }
    Host& host = hosts_[it->second.host_index];

    const std::uint64_t id = next_executor_id_++;
    Executor exec;
    exec.id = id;
    exec.task = boot.task;
    exec.attempt = boot.attempt;
    exec.host = host.name;
    exec.port = host.next_port++;
    if (boot.is_ui_task) exec.ui_port = host.next_port++;
    exec.heartbeat_interval_ms = boot.heartbeat_interval_ms;
    exec.container_id = container.id;
    executors_[id] = exec;
    it->second.executor_id = id;

    world_.at(world_.now(), EventCategory::Child, "exec_start " + boot.task.str(),
              [this, id] { executor_start(id); });
  }

  void release(const ContainerHandle& container) override {
    auto it = allocations_.find(container.id);
    if (it == allocations_.end()) {
      log_warn("sim", "release of unknown container " + container.id);
      return;
    }
    Allocation& alloc = it->second;
    if (alloc.released) return;  // idempotent
    alloc.released = true;
    Host& host = hosts_[alloc.host_index];
    host.used.memory_mb -= alloc.resources.memory_mb;
    host.used.vcores -= alloc.resources.vcores;
    host.used.gpus -= alloc.resources.gpus;
    emit(alloc.attempt, alloc.task.str(), "alloc_release",
         {{"host", host.name},
          {"container", container.id},
          {"memory_mb", alloc.resources.memory_mb},
          {"vcores", alloc.resources.vcores},
          {"gpus", alloc.resources.gpus}});
    if (alloc.executor_id) {
      auto eit = executors_.find(*alloc.executor_id);
      if (eit != executors_.end() && eit->second.alive) stop_executor(eit->second, "released");
    }
    try_allocate();
  }

  bool send(const TaskId& task, const Message& msg) override {
    Executor* exec = live_executor(task, msg.attempt);
    if (!exec) return false;
    const std::uint64_t id = exec->id;
    world_.at(world_.now(), EventCategory::Child,
              std::string(to_string(msg.type())) + " to " + task.str(),
              [this, id, msg] { executor_receive(id, msg); });
    return true;
  }

  void start_timer(std::int64_t delay_ms, std::uint64_t token) override {
    world_.after(delay_ms, EventCategory::Tick, "master_timer",
                 [this, token] { master_->on_timer(token); });
  }

  // --- fault hooks (applied by the harness at scripted virtual times) ------

  // Simulated container death. Takes effect now when the task's executor is
  // live (has registered); otherwise at the moment the task's child next
  // starts. Each armed kill claims exactly one executor.
  void arm_kill(const TaskId& task) {
    Executor* exec = live_executor(task);
    if (exec && exec->registered) {
      apply_kill(*exec);
      return;
    }
    pending_kills_[task] += 1;
  }

  // Suppresses delivery of heartbeats sent in (from, from + duration]; the
  // heartbeat at exactly `from` still lands. Models network silence, not
  // process death.
  void add_drop_window(const TaskId& task, std::int64_t from, std::int64_t duration_ms) {
    drop_windows_[task].push_back({from, from + duration_ms});
  }

  // Extra grant latency consumed by the task's next allocation.
  void add_allocation_delay(const TaskId& task, std::int64_t extra_ms) {
    extra_delays_[task].push_back(extra_ms);
  }

  // Scripted child behavior, consumed per spawn in FIFO order; the last
  // entry repeats for further spawns. Tasks with no script run forever.
  void push_child_script(const TaskId& task, int exit_code, std::int64_t after_ms) {
    child_scripts_[task].push_back({exit_code, after_ms});
  }

  int live_executor_count() const {
    int n = 0;
    for (const auto& [_, e] : executors_)
      if (e.alive) ++n;
    return n;
  }

  ResourceRequest host_used(std::size_t i) const { return hosts_[i].used; }

 private:
  struct Host {
    std::string name;
    ResourceRequest capacity;
    ResourceRequest used;
    int next_port;
  };

  struct Allocation {
    TaskId task;
    int attempt = 1;
    std::size_t host_index = 0;
    ResourceRequest resources;
    bool released = false;
    std::optional<std::uint64_t> executor_id;
  };

  struct ChildScript {
    int exit_code;
    std::int64_t after_ms;
  };

  struct Executor {
    std::uint64_t id = 0;
    TaskId task;
    int attempt = 1;
    std::string host;
    int port = 0;
    std::optional<int> ui_port;
    std::int64_t heartbeat_interval_ms = 1000;
    std::string container_id;
    bool alive = true;
    bool registered = false;
    bool child_spawned = false;
    bool child_running = false;
  };

  void emit(int attempt, const std::string& subject, const std::string& event,
            nlohmann::json detail) {
    trace_.append(TraceRecord{world_.now(), attempt, subject, event, std::move(detail)});
  }

  bool feasible(const ResourceRequest& res) const {
    for (const auto& h : hosts_)
      if (h.capacity.covers(res)) return true;
    return false;
  }

  void try_allocate() {
    for (auto it = pending_.begin(); it != pending_.end();) {
      bool granted = false;
      for (std::size_t hi = 0; hi < hosts_.size(); ++hi) {
        Host& host = hosts_[hi];
        ResourceRequest would{host.used.memory_mb + it->resources.memory_mb,
                              host.used.vcores + it->resources.vcores,
                              host.used.gpus + it->resources.gpus};
        if (!host.capacity.covers(would)) continue;
        host.used = would;
        grant(*it, hi);
        granted = true;
        break;
      }
      it = granted ? pending_.erase(it) : std::next(it);
    }
  }

  void grant(const ContainerRequest& req, std::size_t host_index) {
    Host& host = hosts_[host_index];
    ContainerHandle handle;
    handle.id = "c" + std::to_string(next_container_id_++);
    handle.host = host.name;
    handle.granted = req.resources;
    handle.log_link = "sim://logs/" + std::to_string(req.attempt) + "/" + req.task.group + "-" +
                      std::to_string(req.task.index);
    allocations_[handle.id] = Allocation{req.task, req.attempt, host_index, req.resources, false,
                                         std::nullopt};
    emit(req.attempt, req.task.str(), "alloc_grant",
         {{"host", host.name},
          {"container", handle.id},
          {"memory_mb", req.resources.memory_mb},
          {"vcores", req.resources.vcores},
          {"gpus", req.resources.gpus}});
    std::int64_t delay = config_.allocation_delay_ms + consume_extra_delay(req.task);
    const TaskId task = req.task;
    world_.after(delay, EventCategory::Allocation, "allocated " + task.str(),
                 [this, handle, task] { master_->on_allocated(handle, task); });
  }

  std::int64_t consume_extra_delay(const TaskId& task) {
    auto it = extra_delays_.find(task);
    if (it == extra_delays_.end() || it->second.empty()) return 0;
    std::int64_t extra = it->second.front();
    it->second.pop_front();
    return extra;
  }

  Executor* live_executor(const TaskId& task, std::optional<int> attempt = std::nullopt) {
    for (auto& [_, e] : executors_)
      if (e.alive && e.task == task && (!attempt || e.attempt == *attempt)) return &e;
    return nullptr;
  }

  void executor_start(std::uint64_t id) {
    Executor& exec = executors_[id];
    if (!exec.alive) return;
    exec.registered = true;
    Message reg = Message::make_register(exec.attempt, exec.task, exec.host, exec.port,
                                         exec.ui_port);
    master_->on_message(reg);
    schedule_heartbeat(id, exec.heartbeat_interval_ms);
  }

  void schedule_heartbeat(std::uint64_t id, std::int64_t delay) {
    world_.after(delay, EventCategory::Child, "heartbeat",
                 [this, id] { executor_heartbeat(id); });
  }

  void executor_heartbeat(std::uint64_t id) {
    auto it = executors_.find(id);
    if (it == executors_.end() || !it->second.alive) return;
    Executor& exec = it->second;
    if (drop_active(exec.task, world_.now())) {
      emit(exec.attempt, exec.task.str(), "hb_dropped", {{"t_sent", world_.now()}});
    } else {
      const ChildState state =
          exec.child_running ? ChildState::Running : ChildState::NotStarted;
      master_->on_message(Message::make_heartbeat(exec.attempt, exec.task, state));
    }
    schedule_heartbeat(id, exec.heartbeat_interval_ms);
  }

  bool drop_active(const TaskId& task, std::int64_t t) const {
    auto it = drop_windows_.find(task);
    if (it == drop_windows_.end()) return false;
    for (const auto& [from, to] : it->second)
      if (t > from && t <= to) return true;
    return false;
  }

  void executor_receive(std::uint64_t id, const Message& msg) {
    auto it = executors_.find(id);
    if (it == executors_.end() || !it->second.alive) return;
    Executor& exec = it->second;
    switch (msg.type()) {
      case MessageType::Spec:
        if (msg.attempt != exec.attempt || exec.child_spawned) return;
        spawn_child(exec);
        break;
      case MessageType::Teardown:
        emit(exec.attempt, exec.task.str(), "teardown_delivered",
             {{"grace_ms", std::get<TeardownPayload>(msg.payload).grace_ms}});
        stop_executor(exec, "teardown");
        break;
      default:
        break;
    }
  }

  void spawn_child(Executor& exec) {
    exec.child_spawned = true;
    exec.child_running = true;
    emit(exec.attempt, exec.task.str(), "child_spawn", {{"host", exec.host}});

    auto kit = pending_kills_.find(exec.task);
    if (kit != pending_kills_.end() && kit->second > 0) {
      kit->second -= 1;
      apply_kill(exec);
      return;
    }

    auto sit = child_scripts_.find(exec.task);
    if (sit == child_scripts_.end() || sit->second.empty()) return;  // runs forever
    ChildScript script = sit->second.front();
    if (sit->second.size() > 1) sit->second.pop_front();
    const std::uint64_t id = exec.id;
    world_.after(script.after_ms, EventCategory::Child, "child_exit " + exec.task.str(),
                 [this, id, script] {
                   auto it = executors_.find(id);
                   if (it == executors_.end() || !it->second.alive || !it->second.child_running)
                     return;
                   Executor& e = it->second;
                   e.child_running = false;
                   emit(e.attempt, e.task.str(), "child_exit", {{"code", script.exit_code}});
                   // Register the final status, then terminate.
                   Message exit = Message::make_exit(e.attempt, e.task, script.exit_code);
                   e.alive = false;
                   master_->on_message(exit);
                 });
  }

  void apply_kill(Executor& exec) {
    emit(exec.attempt, exec.task.str(), "fault_kill", {{"host", exec.host}});
    exec.alive = false;
    exec.child_running = false;
  }

  void stop_executor(Executor& exec, const std::string& reason) {
    if (reason != "teardown")
      emit(exec.attempt, exec.task.str(), "executor_stopped", {{"reason", reason}});
    exec.alive = false;
    exec.child_running = false;
  }

  SimClusterConfig config_;
  SimWorld& world_;
  TraceSink& trace_;
  Master* master_ = nullptr;

  std::vector<Host> hosts_;
  std::deque<ContainerRequest> pending_;  // FIFO arrival order
  std::map<std::string, Allocation> allocations_;
  std::map<std::uint64_t, Executor> executors_;
  std::map<TaskId, int> pending_kills_;
  std::map<TaskId, std::vector<std::pair<std::int64_t, std::int64_t>>> drop_windows_;
  std::map<TaskId, std::deque<std::int64_t>> extra_delays_;
  std::map<TaskId, std::deque<ChildScript>> child_scripts_;

  std::uint64_t next_container_id_ = 1;
  std::uint64_t next_executor_id_ = 1;
};

}  // namespace sim
}  // namespace orch

#endif  // ORCH_BACKEND_SIM_HPP_
