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
#ifndef ORCH_CORE_TYPES_HPP_
#define ORCH_CORE_TYPES_HPP_

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "orch/util/result.hpp"

namespace orch {

// ---------------------------------------------------------------------------
// Resource and job description
// ---------------------------------------------------------------------------

struct ResourceRequest {
  std::int64_t memory_mb = 0;  // MiB
  int vcores = 0;
  int gpus = 0;

  bool operator==(const ResourceRequest&) const = default;

  // True when every dimension of `other` fits inside this request.
  bool covers(const ResourceRequest& other) const {
    return memory_mb >= other.memory_mb && vcores >= other.vcores && gpus >= other.gpus;
  }
};

struct TaskGroupSpec {
  std::string name;
  int instances = 0;
  ResourceRequest resources;
  // Completion of a tracked group counts toward job success; untracked
  // groups (parameter servers) are torn down once tracked groups finish.
  bool tracked = true;

  bool operator==(const TaskGroupSpec&) const = default;
};

struct JobSpec {
  std::string job_name = "job";
  std::vector<TaskGroupSpec> groups;
  std::vector<std::string> command;
  std::map<std::string, std::string> extra_env;
  std::optional<std::string> archive_path;
  int max_attempts = 3;
  std::int64_t heartbeat_interval_ms = 1000;
  int heartbeat_miss_limit = 3;
  std::map<std::string, std::string> scheduler_config;  // opaque passthrough

  bool operator==(const JobSpec&) const = default;

  int total_instances() const {
    int n = 0;
    for (const auto& g : groups) n += g.instances;
    return n;
  }

  const TaskGroupSpec* find_group(const std::string& name) const {
    for (const auto& g : groups)
      if (g.name == name) return &g;
    return nullptr;
  }
};

// Canonical task identity. The cluster spec is indexed by (group, index);
// scheduler container ids are a backend detail mapped onto this.
struct TaskId {
  std::string group;
  int index = 0;

  auto operator<=>(const TaskId&) const = default;

  std::string str() const { return group + "/" + std::to_string(index); }

  static std::optional<TaskId> parse(const std::string& s) {
    auto slash = s.rfind('/');
    if (slash == std::string::npos || slash == 0 || slash + 1 >= s.size()) return std::nullopt;
    TaskId id;
    id.group = s.substr(0, slash);
    const std::string idx = s.substr(slash + 1);
    for (char c : idx)
      if (c < '0' || c > '9') return std::nullopt;
    if (idx.size() > 9) return std::nullopt;
    id.index = std::stoi(idx);
    return id;
  }
};

// ---------------------------------------------------------------------------
// Lifecycle state machines
// ---------------------------------------------------------------------------

enum class TaskStatus {
  Requested,
  Allocated,
  Registered,
  Running,
  Succeeded,
  Failed,
  Lost,
};

enum class TaskEvent {
  Allocated,
  Registered,
  ChildStarted,
  ExitedZero,
  ExitedNonzero,
  HeartbeatLost,
};

enum class JobState {
  Submitted,
  Allocating,
  AwaitingRegistration,
  Running,
  Recovering,
  Succeeded,
  Failed,
};

inline const char* to_string(TaskStatus s) {
  switch (s) {
    case TaskStatus::Requested: return "REQUESTED";
    case TaskStatus::Allocated: return "ALLOCATED";
    case TaskStatus::Registered: return "REGISTERED";
    case TaskStatus::Running: return "RUNNING";
    case TaskStatus::Succeeded: return "SUCCEEDED";
    case TaskStatus::Failed: return "FAILED";
    case TaskStatus::Lost: return "LOST";
  }
  return "?";
}

inline const char* to_string(TaskEvent e) {
  switch (e) {
    case TaskEvent::Allocated: return "allocated";
    case TaskEvent::Registered: return "registered";
    case TaskEvent::ChildStarted: return "child_started";
    case TaskEvent::ExitedZero: return "exited_zero";
    case TaskEvent::ExitedNonzero: return "exited_nonzero";
    case TaskEvent::HeartbeatLost: return "heartbeat_lost";
  }
  return "?";
}

inline const char* to_string(JobState s) {
  switch (s) {
    case JobState::Submitted: return "SUBMITTED";
    case JobState::Allocating: return "ALLOCATING";
    case JobState::AwaitingRegistration: return "AWAITING_REGISTRATION";
    case JobState::Running: return "RUNNING";
    case JobState::Recovering: return "RECOVERING";
    case JobState::Succeeded: return "SUCCEEDED";
    case JobState::Failed: return "FAILED";
  }
  return "?";
}

inline bool is_terminal(TaskStatus s) {
  return s == TaskStatus::Succeeded || s == TaskStatus::Failed || s == TaskStatus::Lost;
}

inline bool is_terminal(JobState s) { return s == JobState::Succeeded || s == JobState::Failed; }

struct IllegalTransition {
  TaskStatus from;
  TaskEvent event;

  bool operator==(const IllegalTransition&) const = default;
};

// Pure successor function over the task lifecycle. Total over the event
// alphabet; every pair outside the table is an error.
inline Result<TaskStatus, IllegalTransition> transition(TaskStatus current, TaskEvent event) {
  switch (current) {
    case TaskStatus::Requested:
      if (event == TaskEvent::Allocated) return TaskStatus::Allocated;
      break;
    case TaskStatus::Allocated:
      if (event == TaskEvent::Registered) return TaskStatus::Registered;
      if (event == TaskEvent::HeartbeatLost) return TaskStatus::Lost;
      break;
    case TaskStatus::Registered:
      if (event == TaskEvent::ChildStarted) return TaskStatus::Running;
      if (event == TaskEvent::HeartbeatLost) return TaskStatus::Lost;
      break;
    case TaskStatus::Running:
      if (event == TaskEvent::ExitedZero) return TaskStatus::Succeeded;
      if (event == TaskEvent::ExitedNonzero) return TaskStatus::Failed;
      if (event == TaskEvent::HeartbeatLost) return TaskStatus::Lost;
      break;
    case TaskStatus::Succeeded:
    case TaskStatus::Failed:
    case TaskStatus::Lost:
      break;  // terminal within an attempt
  }
  return IllegalTransition{current, event};
}

// ---------------------------------------------------------------------------
// Job spec validation
// ---------------------------------------------------------------------------

struct ValidationError {
  std::string field;
  std::string message;

  bool operator==(const ValidationError&) const = default;
};

class ValidatedJobSpec;

Result<ValidatedJobSpec, std::vector<ValidationError>> validate_job_spec(JobSpec spec);

// A JobSpec that has passed validate_job_spec. Obtainable only through it.
class ValidatedJobSpec {
 public:
  const JobSpec& get() const { return spec_; }
  const JobSpec* operator->() const { return &spec_; }

 private:
  friend Result<ValidatedJobSpec, std::vector<ValidationError>> validate_job_spec(JobSpec);
  explicit ValidatedJobSpec(JobSpec spec) : spec_(std::move(spec)) {}
  JobSpec spec_;
};

inline bool valid_group_name(const std::string& name) {
  if (name.empty()) return false;
  if (name[0] < 'a' || name[0] > 'z') return false;
  for (char c : name) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
    if (!ok) return false;
  }
  return true;
}

// Reports every violation found, each naming the offending field.
inline Result<ValidatedJobSpec, std::vector<ValidationError>> validate_job_spec(JobSpec spec) {
  std::vector<ValidationError> errors;

  if (spec.groups.empty()) errors.push_back({"groups", "job has no task groups"});

  std::map<std::string, int> seen;
  bool any_tracked = false;
  for (const auto& g : spec.groups) {
    const std::string field = "groups." + g.name;
    if (!valid_group_name(g.name))
      errors.push_back({field + ".name", "malformed group name: " + g.name});
    if (++seen[g.name] == 2) errors.push_back({field, "duplicate group name: " + g.name});
    if (g.instances < 1)
      errors.push_back({field + ".instances", "zero instances in group " + g.name});
    if (g.resources.memory_mb < 1)
      errors.push_back({field + ".memory", "memory_mb must be >= 1 in group " + g.name});
    if (g.resources.vcores < 1)
      errors.push_back({field + ".vcores", "vcores must be >= 1 in group " + g.name});
    if (g.resources.gpus < 0)
      errors.push_back({field + ".gpus", "gpus must be >= 0 in group " + g.name});
    any_tracked = any_tracked || g.tracked;
  }
  if (!spec.groups.empty() && !any_tracked) errors.push_back({"groups", "no tracked group"});

  if (spec.max_attempts < 1) errors.push_back({"max_attempts", "max_attempts must be >= 1"});
  if (spec.heartbeat_interval_ms < 1)
    errors.push_back({"heartbeat_interval_ms", "heartbeat interval must be >= 1 ms"});
  if (spec.heartbeat_miss_limit < 1)
    errors.push_back({"heartbeat_miss_limit", "heartbeat miss limit must be >= 1"});

  if (!errors.empty()) return errors;
  return ValidatedJobSpec(std::move(spec));
}

}  // namespace orch

#endif  // ORCH_CORE_TYPES_HPP_
