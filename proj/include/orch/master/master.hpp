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
#ifndef ORCH_MASTER_MASTER_HPP_
#define ORCH_MASTER_MASTER_HPP_

#include <algorithm>
#include <cassert>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "orch/backend/types.hpp"
#include "orch/core/cluster_spec.hpp"
#include "orch/core/types.hpp"
#include "orch/trace/trace.hpp"
#include "orch/util/log.hpp"
#include "orch/wire/message.hpp"

namespace orch {

struct TaskRecord {
  TaskId task;
  TaskStatus status = TaskStatus::Requested;
  std::optional<ContainerHandle> container;
  std::optional<std::string> endpoint;
  std::optional<int> ui_port;
  std::optional<std::int64_t> last_heartbeat_at;
  std::optional<int> exit_code;
};

struct TaskStatusEntry {
  TaskId task;
  TaskStatus status;
  std::optional<std::string> endpoint;
};

struct JobStatusSnapshot {
  JobState state = JobState::Submitted;
  int attempt = 1;
  std::vector<TaskStatusEntry> tasks;
  std::optional<std::string> ui_url;
  std::map<std::string, std::string> log_links;  // keyed by TaskId::str()
  std::vector<std::string> diagnostics;          // most recent failure reasons
};

struct MasterConfig {
  std::string master_addr = "sim:0";
  std::int64_t grace_ms = 2000;  // TEARDOWN -> forcible container release
};

// The job master: a single serialized state machine that negotiates
// containers, runs the registration -> spec -> broadcast rendezvous,
// monitors liveness, and drives full-gang recovery.
//
// Concurrency contract: every method below must be invoked from one logical
// event loop. Backends and transports deliver events by enqueuing calls;
// nothing here is internally synchronized.
class Master {
 public:
  Master(ValidatedJobSpec spec, MasterBackend& backend, TraceSink& trace,
         std::function<std::int64_t()> now_fn, MasterConfig config = {})
      : spec_(std::move(spec)),
        backend_(backend),
        trace_(trace),
        now_(std::move(now_fn)),
        config_(config) {
    for (const auto& g : spec_->groups)
      for (int i = 0; i < g.instances; ++i)
        tasks_.push_back(TaskRecord{TaskId{g.name, i}});
    for (const auto& g : spec_->groups)
      if (g.tracked) {
        ui_task_ = TaskId{g.name, 0};
        break;
      }
  }

  Master(const Master&) = delete;
  Master& operator=(const Master&) = delete;

  // SUBMITTED -> ALLOCATING; one container request per task instance,
  // carrying that group's resources (heterogeneous across groups).
  void start() {
    trace_job_state();  // SUBMITTED
    set_job_state(JobState::Allocating);
    issue_requests();
  }

  void on_allocated(const ContainerHandle& container, const TaskId& task) {
    if (is_terminal(state_) || state_ == JobState::Recovering) {
      // Grant raced a teardown; hand it straight back.
      backend_.release(container);
      trace(task.str(), "released", {{"container", container.id}, {"reason", "stale_grant"}});
      return;
    }
    TaskRecord* rec = find(task);
    if (!rec) {
      log_warn("master", "allocation for unknown task " + task.str() + ", releasing");
      backend_.release(container);
      trace(task.str(), "released", {{"container", container.id}, {"reason", "unknown_task"}});
      return;
    }
    if (rec->status != TaskStatus::Requested) {
      // Schedulers may over-deliver after recovery races; duplicates are
      // released, never treated as failures.
      backend_.release(container);
      trace(task.str(), "duplicate_allocation", {{"container", container.id}});
      return;
    }
    apply_task_event(*rec, TaskEvent::Allocated);
    rec->container = container;
    log_links_[task.str()] = container.log_link;
    trace(task.str(), "allocated",
          {{"container", container.id}, {"host", container.host}, {"log_link", container.log_link}});

    Bootstrap boot;
    boot.master_addr = config_.master_addr;
    boot.task = task;
    boot.attempt = attempt_;
    boot.heartbeat_interval_ms = spec_->heartbeat_interval_ms;
    boot.command = spec_->command;
    boot.extra_env = spec_->extra_env;
    boot.is_ui_task = ui_task_ && task == *ui_task_;
    backend_.launch(container, boot);
    trace(task.str(), "launch", {{"container", container.id}});

    if (state_ == JobState::Allocating && count_at_least(TaskStatus::Allocated) == total_instances())
      set_job_state(JobState::AwaitingRegistration);
  }

  void on_allocation_rejected(const TaskId& task, const std::string& reason) {
    trace(task.str(), "container_rejected", {{"reason", reason}});
    if (is_terminal(state_)) return;
    diagnostics_.push_back("scheduler rejected " + task.str() + ": " + reason);
    fail_job();
  }

  void on_message(const Message& msg) {
    if (is_terminal(state_)) return;
    const std::string subject = msg.task ? msg.task->str() : "job";
    if (msg.attempt != attempt_) {
      // Late frames from torn-down executors are expected after a gang
      // restart, never an error.
      trace(subject, "stale_dropped",
            {{"type", to_string(msg.type())}, {"msg_attempt", msg.attempt}});
      return;
    }
    switch (msg.type()) {
      case MessageType::Register:
        on_register(msg);
        break;
      case MessageType::Heartbeat:
        on_heartbeat(msg);
        break;
      case MessageType::Exit:
        on_exit(msg);
        break;
      case MessageType::Spec:
      case MessageType::Teardown:
        log_warn("master", std::string("unexpected inbound ") + to_string(msg.type()));
        break;
    }
  }

  // Liveness sweep. A task silent longer than interval * miss_limit
  // (strict inequality) is LOST; any LOST task triggers recovery once.
  std::vector<TaskId> tick(std::int64_t now) {
    std::vector<TaskId> lost;
    if (is_terminal(state_) || state_ == JobState::Recovering) return lost;
    const std::int64_t threshold = spec_->heartbeat_interval_ms * spec_->heartbeat_miss_limit;
    for (auto& rec : tasks_) {
      if (rec.status != TaskStatus::Registered && rec.status != TaskStatus::Running) continue;
      if (!rec.last_heartbeat_at) continue;
      const std::int64_t silent = now - *rec.last_heartbeat_at;
      if (silent > threshold) {
        apply_task_event(rec, TaskEvent::HeartbeatLost, {{"silent_ms", silent}});
        rec.endpoint.reset();  // meaningless once the task is silent
        diagnostics_.push_back("task " + rec.task.str() + " lost: no heartbeat for " +
                               std::to_string(silent) + " ms (attempt " +
                               std::to_string(attempt_) + ")");
        lost.push_back(rec.task);
      }
    }
    if (!lost.empty()) trigger_recovery("heartbeat timeout: " + lost.front().str());
    return lost;
  }

  void on_timer(std::uint64_t token) {
    auto it = timers_.find(token);
    if (it == timers_.end()) return;
    const TimerPurpose purpose = it->second;
    timers_.erase(it);
    switch (purpose) {
      case TimerPurpose::RecoveryGrace:
        if (state_ == JobState::Recovering) relaunch_gang();
        break;
      case TimerPurpose::Cleanup:
        release_all("cleanup");
        break;
    }
  }

  JobStatusSnapshot status() const {
    JobStatusSnapshot snap;
    snap.state = state_;
    snap.attempt = attempt_;
    for (const auto& rec : tasks_)
      snap.tasks.push_back({rec.task, rec.status, rec.endpoint});
    snap.ui_url = ui_url_;
    snap.log_links = log_links_;
    const std::size_t keep = 10;
    const std::size_t from = diagnostics_.size() > keep ? diagnostics_.size() - keep : 0;
    snap.diagnostics.assign(diagnostics_.begin() + from, diagnostics_.end());
    return snap;
  }

  JobState job_state() const { return state_; }
  int attempt() const { return attempt_; }
  bool terminal() const { return is_terminal(state_); }

  // True once the job is terminal and every container has been handed back.
  bool drained() const { return is_terminal(state_) && held_containers() == 0; }

  const JobSpec& spec() const { return spec_.get(); }

  // endpoints[group][i] = endpoint of task (group, i); independent of
  // registration arrival order.
  static ClusterSpec build_cluster_spec(const std::vector<TaskRecord>& records) {
    ClusterSpec spec;
    for (const auto& rec : records) {
      assert(rec.endpoint.has_value());
      spec.set(rec.task, *rec.endpoint);
    }
    return spec;
  }

 private:
  enum class TimerPurpose { RecoveryGrace, Cleanup };

  TaskRecord* find(const TaskId& task) {
    for (auto& rec : tasks_)
      if (rec.task == task) return &rec;
    return nullptr;
  }

  int total_instances() const { return static_cast<int>(tasks_.size()); }

  int count_at_least(TaskStatus floor) const {
    int n = 0;
    for (const auto& rec : tasks_)
      if (rec.status >= floor && rec.status <= TaskStatus::Running) ++n;
    return n;
  }

  int held_containers() const {
    int n = 0;
    for (const auto& rec : tasks_)
      if (rec.container) ++n;
    return n;
  }

  void trace(const std::string& subject, const std::string& event,
             nlohmann::json detail = nlohmann::json::object()) {
    trace_.append(TraceRecord{now_(), attempt_, subject, event, std::move(detail)});
  }

  void trace_job_state(nlohmann::json extra = nlohmann::json::object()) {
    extra["state"] = to_string(state_);
    trace("job", "job_state", std::move(extra));
  }

  void set_job_state(JobState next) {
    assert(job_edge_legal(state_, next));
    state_ = next;
    if (next == JobState::Failed) {
      nlohmann::json detail;
      detail["diagnostics"] = diagnostics_;
      trace_job_state(std::move(detail));
    } else {
      trace_job_state();
    }
  }

  static bool job_edge_legal(JobState from, JobState to) {
    using JS = JobState;
    switch (to) {
      case JS::Allocating: return from == JS::Submitted || from == JS::Recovering;
      case JS::AwaitingRegistration: return from == JS::Allocating;
      case JS::Running: return from == JS::AwaitingRegistration;
      case JS::Recovering:
        return from == JS::Allocating || from == JS::AwaitingRegistration || from == JS::Running;
      case JS::Succeeded: return from == JS::Running;
      // Unrecoverable scheduler rejection fails the job straight from the
      // allocation phase; exhausted recoveries fail from RECOVERING.
      case JS::Failed: return from != JS::Succeeded && from != JS::Failed;
      case JS::Submitted: return false;
    }
    return false;
  }

  void apply_task_event(TaskRecord& rec, TaskEvent event,
                        nlohmann::json detail = nlohmann::json::object()) {
    auto next = transition(rec.status, event);
    assert(next.ok());
    detail["from"] = to_string(rec.status);
    detail["to"] = to_string(next.value());
    rec.status = next.value();
    trace(rec.task.str(), "task_state", std::move(detail));
  }

  void issue_requests() {
    std::vector<ContainerRequest> requests;
    for (const auto& g : spec_->groups)
      for (int i = 0; i < g.instances; ++i) {
        ContainerRequest req{TaskId{g.name, i}, g.resources, attempt_, spec_->scheduler_config};
        nlohmann::json detail{{"memory_mb", g.resources.memory_mb},
                              {"vcores", g.resources.vcores},
                              {"gpus", g.resources.gpus}};
        // Queue/node-label settings ride along opaquely but stay visible.
        if (!spec_->scheduler_config.empty()) detail["scheduler_config"] = spec_->scheduler_config;
        trace(req.task.str(), "container_requested", std::move(detail));
        requests.push_back(std::move(req));
      }
    backend_.request_containers(requests);
  }

  void on_register(const Message& msg) {
    const auto& p = std::get<RegisterPayload>(msg.payload);
    TaskRecord* rec = find(*msg.task);
    if (!rec || rec->status != TaskStatus::Allocated) {
      // Protocol violation; treated as a task failure.
      trace(msg.task->str(), "protocol_violation",
            {{"reason", std::string("REGISTER while ") +
                            (rec ? to_string(rec->status) : "UNKNOWN")}});
      diagnostics_.push_back("protocol violation: unexpected REGISTER from " + msg.task->str());
      trigger_recovery("unexpected REGISTER from " + msg.task->str());
      return;
    }
    apply_task_event(*rec, TaskEvent::Registered);
    rec->endpoint = p.host + ":" + std::to_string(p.port);
    rec->last_heartbeat_at = now_();
    nlohmann::json detail{{"endpoint", *rec->endpoint}, {"msg_attempt", msg.attempt}};
    if (p.ui_port) detail["ui_port"] = *p.ui_port;
    trace(msg.task->str(), "register_received", std::move(detail));

    if (p.ui_port && ui_task_ && *msg.task == *ui_task_) {
      rec->ui_port = p.ui_port;
      ui_url_ = "http://" + p.host + ":" + std::to_string(*p.ui_port);
      trace("job", "ui_url", {{"url", *ui_url_}});
    }

    // A violation elsewhere can have opened recovery with every record
    // still REGISTERED; the gang is coming down, so no broadcast then.
    const bool all_registered =
        std::all_of(tasks_.begin(), tasks_.end(), [](const TaskRecord& r) {
          return r.status == TaskStatus::Registered;
        });
    if (all_registered && !broadcast_done_ && state_ != JobState::Recovering) broadcast_spec();
  }

  void broadcast_spec() {
    const std::string encoded = canonical_spec_encoding(build_cluster_spec(tasks_));
    for (const auto& rec : tasks_) {
      backend_.send(rec.task, Message::make_spec(attempt_, encoded));
      trace(rec.task.str(), "spec_sent", {{"bytes", encoded.size()}});
    }
    broadcast_done_ = true;
    set_job_state(JobState::Running);
  }

  void on_heartbeat(const Message& msg) {
    const auto& p = std::get<HeartbeatPayload>(msg.payload);
    TaskRecord* rec = find(*msg.task);
    if (!rec || (rec->status != TaskStatus::Registered && rec->status != TaskStatus::Running)) {
      log_warn("master", "heartbeat from " + msg.task->str() + " ignored");
      return;
    }
    rec->last_heartbeat_at = now_();
    trace(msg.task->str(), "heartbeat_received",
          {{"child_state", to_string(p.child_state)}, {"msg_attempt", msg.attempt}});
    if (rec->status == TaskStatus::Registered && p.child_state == ChildState::Running)
      apply_task_event(*rec, TaskEvent::ChildStarted);
  }

  void on_exit(const Message& msg) {
    const auto& p = std::get<ExitPayload>(msg.payload);
    TaskRecord* rec = find(*msg.task);
    if (!rec) {
      log_warn("master", "exit for unknown task " + msg.task->str() + ", dropped");
      return;
    }
    if (rec->status != TaskStatus::Registered && rec->status != TaskStatus::Running) {
      log_warn("master", "late exit from " + msg.task->str() + " ignored");
      return;
    }
    trace(msg.task->str(), "exit_received", {{"code", p.code}, {"msg_attempt", msg.attempt}});
    // A child can finish before its first RUNNING heartbeat arrives.
    if (rec->status == TaskStatus::Registered) apply_task_event(*rec, TaskEvent::ChildStarted);
    rec->exit_code = p.code;
    if (p.code == 0) {
      apply_task_event(*rec, TaskEvent::ExitedZero);
      if (rec->container) {
        backend_.release(*rec->container);
        trace(rec->task.str(), "released", {{"container", rec->container->id}});
        rec->container.reset();
      }
      check_completion();
    } else {
      apply_task_event(*rec, TaskEvent::ExitedNonzero);
      diagnostics_.push_back("task " + rec->task.str() + " exited with code " +
                             std::to_string(p.code) + " (attempt " + std::to_string(attempt_) +
                             ")");
      trigger_recovery("task " + rec->task.str() + " exited with code " + std::to_string(p.code));
    }
  }

  // Job success = every task of every tracked group exited 0; untracked
  // groups are then torn down.
  void check_completion() {
    if (state_ != JobState::Running) return;
    for (const auto& rec : tasks_) {
      const TaskGroupSpec* g = spec_->find_group(rec.task.group);
      if (g && g->tracked && rec.status != TaskStatus::Succeeded) return;
    }
    set_job_state(JobState::Succeeded);
    teardown_live();
    schedule_timer(TimerPurpose::Cleanup);
  }

  void trigger_recovery(const std::string& reason) {
    if (recovery_pending_ || is_terminal(state_) || state_ == JobState::Recovering) return;
    recovery_pending_ = true;
    set_job_state(JobState::Recovering);
    if (attempt_ >= spec_->max_attempts) {
      trace("job", "recovery_exhausted", {{"reason", reason}, {"attempt", attempt_}});
      fail_job();
      return;
    }
    trace("job", "recovery", {{"reason", reason}, {"from_attempt", attempt_}});
    teardown_live();
    schedule_timer(TimerPurpose::RecoveryGrace);
  }

  // Full gang, never partial: release everything, reset every record, and
  // re-request one container per instance under the next attempt.
  void relaunch_gang() {
    release_all("recovery");
    backend_.cancel_pending_requests();
    attempt_ += 1;
    for (auto& rec : tasks_) {
      rec.status = TaskStatus::Requested;
      rec.endpoint.reset();
      rec.ui_port.reset();
      rec.last_heartbeat_at.reset();
      rec.exit_code.reset();
      rec.container.reset();
    }
    broadcast_done_ = false;
    recovery_pending_ = false;
    ui_url_.reset();
    set_job_state(JobState::Allocating);
    issue_requests();
  }

  void fail_job() {
    set_job_state(JobState::Failed);
    teardown_live();
    schedule_timer(TimerPurpose::Cleanup);
  }

  void teardown_live() {
    for (const auto& rec : tasks_) {
      if (rec.status != TaskStatus::Registered && rec.status != TaskStatus::Running) continue;
      backend_.send(rec.task, Message::make_teardown(attempt_, config_.grace_ms));
      trace(rec.task.str(), "teardown_sent", {{"grace_ms", config_.grace_ms}});
    }
  }

  void release_all(const std::string& reason) {
    for (auto& rec : tasks_) {
      if (!rec.container) continue;
      backend_.release(*rec.container);
      trace(rec.task.str(), "released", {{"container", rec.container->id}, {"reason", reason}});
      rec.container.reset();
    }
  }

  void schedule_timer(TimerPurpose purpose) {
    const std::uint64_t token = next_timer_token_++;
    timers_[token] = purpose;
    backend_.start_timer(config_.grace_ms, token);
  }

  ValidatedJobSpec spec_;
  MasterBackend& backend_;
  TraceSink& trace_;
  std::function<std::int64_t()> now_;
  MasterConfig config_;

  std::vector<TaskRecord> tasks_;
  JobState state_ = JobState::Submitted;
  int attempt_ = 1;
  bool broadcast_done_ = false;
  bool recovery_pending_ = false;
  std::optional<TaskId> ui_task_;
  std::optional<std::string> ui_url_;
  std::map<std::string, std::string> log_links_;
  std::vector<std::string> diagnostics_;
  std::map<std::uint64_t, TimerPurpose> timers_;
  std::uint64_t next_timer_token_ = 1;
};

}  // namespace orch

#endif  // ORCH_MASTER_MASTER_HPP_
