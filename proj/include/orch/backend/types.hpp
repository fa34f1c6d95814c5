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
#ifndef ORCH_BACKEND_TYPES_HPP_
#define ORCH_BACKEND_TYPES_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "orch/core/types.hpp"
#include "orch/wire/message.hpp"

namespace orch {

struct ContainerRequest {
  TaskId task;
  ResourceRequest resources;
  int attempt = 1;
  std::map<std::string, std::string> scheduler_config;  // queue, node label, ...
};

struct ContainerHandle {
  std::string id;  // opaque, unique per grant
  std::string host;
  ResourceRequest granted;  // >= requested in every dimension
  std::string log_link;

  bool operator==(const ContainerHandle&) const = default;
};

// Everything an executor needs at launch, delivered via environment
// variables (ORCH_MASTER_ADDR, ORCH_TASK_TYPE, ORCH_TASK_INDEX,
// ORCH_ATTEMPT, ORCH_HEARTBEAT_MS, ORCH_IS_UI_TASK, ORCH_CMD,
// ORCH_EXTRA_ENV).
struct Bootstrap {
  std::string master_addr;  // "host:port"
  TaskId task;
  int attempt = 1;
  std::int64_t heartbeat_interval_ms = 1000;
  std::vector<std::string> command;
  std::map<std::string, std::string> extra_env;
  bool is_ui_task = false;
};

// The master's view of a scheduler backend. Command methods only; the
// backend answers by feeding events back through the master's serialized
// event loop (on_allocated, on_allocation_rejected, on_message, on_timer).
class MasterBackend {
 public:
  virtual ~MasterBackend() = default;

  // One request per task instance per attempt; allocations arrive later.
  virtual void request_containers(const std::vector<ContainerRequest>& requests) = 0;

  // Drop queued requests that have not been granted yet (gang recovery
  // re-requests from scratch; in-flight grants become duplicates and are
  // released by the master).
  virtual void cancel_pending_requests() = 0;

  virtual void launch(const ContainerHandle& container, const Bootstrap& boot) = 0;

  virtual void release(const ContainerHandle& container) = 0;

  // Route a message to the executor of `task` in `msg.attempt`. Returns
  // false when there is no live route; senders treat that as best-effort.
  virtual bool send(const TaskId& task, const Message& msg) = 0;

  // One-shot timer; fires master.on_timer(token) after delay_ms.
  virtual void start_timer(std::int64_t delay_ms, std::uint64_t token) = 0;
};

}  // namespace orch

#endif  // ORCH_BACKEND_TYPES_HPP_
