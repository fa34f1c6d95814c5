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
#ifndef ORCH_HARNESS_SCENARIO_HPP_
#define ORCH_HARNESS_SCENARIO_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "orch/backend/sim.hpp"
#include "orch/core/types.hpp"
#include "orch/util/result.hpp"

namespace orch {
namespace harness {

// Scripted fault-injection actions, applied at virtual times:
//   kill_task        — simulated container death; effective immediately when
//                      the executor is live, otherwise at the task's next
//                      child spawn; each entry claims one executor.
//   drop_heartbeats  — suppress delivery of heartbeats sent in
//                      (at, at + duration_ms]; models network silence.
//   delay_allocation — add extra_ms to the task's next container grant.
//   child_exit       — scripted child behavior (exit `code` at spawn +
//                      after_ms); entries apply per spawn in order, the last
//                      entry repeating.
enum class ActionKind { KillTask, DropHeartbeats, DelayAllocation, ChildExit };

inline const char* to_string(ActionKind k) {
  switch (k) {
    case ActionKind::KillTask: return "kill_task";
    case ActionKind::DropHeartbeats: return "drop_heartbeats";
    case ActionKind::DelayAllocation: return "delay_allocation";
    case ActionKind::ChildExit: return "child_exit";
  }
  return "?";
}

struct ScenarioAction {
  std::int64_t at = 0;
  ActionKind kind = ActionKind::ChildExit;
  TaskId task;
  std::int64_t duration_ms = 0;  // drop_heartbeats
  std::int64_t extra_ms = 0;     // delay_allocation
  int exit_code = 0;             // child_exit
  std::int64_t after_ms = 0;     // child_exit
};

struct ScenarioScript {
  sim::SimClusterConfig cluster;
  JobSpec job;
  std::vector<ScenarioAction> actions;  // engine sorts; listed order breaks ties
  std::int64_t horizon_ms = 1000000;
};

// ---------------------------------------------------------------------------
// Textual scenario document (JSON)
// ---------------------------------------------------------------------------

inline std::string scenario_to_json(const ScenarioScript& s) {
  nlohmann::json doc = nlohmann::json::object();
  nlohmann::json hosts = nlohmann::json::array();
  for (const auto& h : s.cluster.hosts)
    hosts.push_back({{"name", h.name},
                     {"memory_mb", h.capacity.memory_mb},
                     {"vcores", h.capacity.vcores},
                     {"gpus", h.capacity.gpus}});
  doc["cluster"] = {{"hosts", hosts},
                    {"allocation_delay_ms", s.cluster.allocation_delay_ms},
                    {"tick_interval_ms", s.cluster.tick_interval_ms},
                    {"seed", s.cluster.seed}};
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : s.job.groups)
    groups.push_back({{"name", g.name},
                      {"instances", g.instances},
                      {"memory_mb", g.resources.memory_mb},
                      {"vcores", g.resources.vcores},
                      {"gpus", g.resources.gpus},
                      {"tracked", g.tracked}});
  doc["job"] = {{"name", s.job.job_name},
                {"groups", groups},
                {"command", s.job.command},
                {"max_attempts", s.job.max_attempts},
                {"heartbeat_interval_ms", s.job.heartbeat_interval_ms},
                {"heartbeat_miss_limit", s.job.heartbeat_miss_limit},
                {"scheduler_config", s.job.scheduler_config}};
  doc["horizon_ms"] = s.horizon_ms;
  nlohmann::json actions = nlohmann::json::array();
  for (const auto& a : s.actions) {
    nlohmann::json obj = {{"at", a.at}, {"kind", to_string(a.kind)}, {"task", a.task.str()}};
    switch (a.kind) {
      case ActionKind::KillTask: break;
      case ActionKind::DropHeartbeats: obj["duration_ms"] = a.duration_ms; break;
      case ActionKind::DelayAllocation: obj["extra_ms"] = a.extra_ms; break;
      case ActionKind::ChildExit:
        obj["code"] = a.exit_code;
        obj["after_ms"] = a.after_ms;
        break;
    }
    actions.push_back(std::move(obj));
  }
  doc["actions"] = std::move(actions);
  return doc.dump(2) + "\n";
}

namespace scenariodetail {

inline Result<std::int64_t, std::string> get_int(const nlohmann::json& obj, const char* name,
                                                 std::int64_t fallback, bool required = false) {
  auto it = obj.find(name);
  if (it == obj.end()) {
    if (required) return std::string("missing field: ") + name;
    return fallback;
  }
  if (!it->is_number_integer()) return std::string("field is not an integer: ") + name;
  return it->get<std::int64_t>();
}

}  // namespace scenariodetail

inline Result<ScenarioScript, std::string> parse_scenario(const std::string& text) {
  using scenariodetail::get_int;

  nlohmann::json doc = nlohmann::json::parse(text, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) return std::string("scenario is not a JSON object");

  ScenarioScript s;
  if (!doc.contains("cluster") || !doc["cluster"].is_object())
    return std::string("missing cluster object");
  const auto& cluster = doc["cluster"];
  if (!cluster.contains("hosts") || !cluster["hosts"].is_array() || cluster["hosts"].empty())
    return std::string("cluster.hosts must be a non-empty array");
  for (const auto& h : cluster["hosts"]) {
    sim::SimHostConfig host;
    if (!h.contains("name") || !h["name"].is_string()) return std::string("host missing name");
    host.name = h["name"].get<std::string>();
    auto mem = get_int(h, "memory_mb", 0, true);
    if (!mem) return mem.error();
    auto vcores = get_int(h, "vcores", 0, true);
    if (!vcores) return vcores.error();
    auto gpus = get_int(h, "gpus", 0);
    if (!gpus) return gpus.error();
    host.capacity = ResourceRequest{mem.value(), static_cast<int>(vcores.value()),
                                    static_cast<int>(gpus.value())};
    if (host.capacity.memory_mb < 1 || host.capacity.vcores < 1 || host.capacity.gpus < 0)
      return "host " + host.name + ": capacities must be positive";
    s.cluster.hosts.push_back(std::move(host));
  }
  auto alloc_delay = get_int(cluster, "allocation_delay_ms", 1000);
  if (!alloc_delay) return alloc_delay.error();
  if (alloc_delay.value() < 0) return std::string("allocation_delay_ms must be >= 0");
  s.cluster.allocation_delay_ms = alloc_delay.value();
  auto tick = get_int(cluster, "tick_interval_ms", 100);
  if (!tick) return tick.error();
  if (tick.value() < 1) return std::string("tick_interval_ms must be >= 1");
  s.cluster.tick_interval_ms = tick.value();
  auto seed = get_int(cluster, "seed", 0);
  if (!seed) return seed.error();
  s.cluster.seed = static_cast<std::uint64_t>(seed.value());

  if (!doc.contains("job") || !doc["job"].is_object()) return std::string("missing job object");
  const auto& job = doc["job"];
  if (job.contains("name") && job["name"].is_string())
    s.job.job_name = job["name"].get<std::string>();
  if (!job.contains("groups") || !job["groups"].is_array())
    return std::string("job.groups must be an array");
  for (const auto& g : job["groups"]) {
    TaskGroupSpec group;
    if (!g.contains("name") || !g["name"].is_string()) return std::string("group missing name");
    group.name = g["name"].get<std::string>();
    auto instances = get_int(g, "instances", 0, true);
    if (!instances) return instances.error();
    group.instances = static_cast<int>(instances.value());
    auto mem = get_int(g, "memory_mb", 1024);
    if (!mem) return mem.error();
    auto vcores = get_int(g, "vcores", 1);
    if (!vcores) return vcores.error();
    auto gpus = get_int(g, "gpus", 0);
    if (!gpus) return gpus.error();
    group.resources = ResourceRequest{mem.value(), static_cast<int>(vcores.value()),
                                      static_cast<int>(gpus.value())};
    if (g.contains("tracked")) {
      if (!g["tracked"].is_boolean()) return "group " + group.name + ": tracked must be boolean";
      group.tracked = g["tracked"].get<bool>();
    } else {
      group.tracked = group.name != "ps";
    }
    s.job.groups.push_back(std::move(group));
  }
  if (job.contains("command")) {
    if (!job["command"].is_array()) return std::string("job.command must be an array");
    for (const auto& c : job["command"]) {
      if (!c.is_string()) return std::string("job.command entries must be strings");
      s.job.command.push_back(c.get<std::string>());
    }
  }
  auto max_attempts = get_int(job, "max_attempts", 3);
  if (!max_attempts) return max_attempts.error();
  s.job.max_attempts = static_cast<int>(max_attempts.value());
  auto hb = get_int(job, "heartbeat_interval_ms", 1000);
  if (!hb) return hb.error();
  s.job.heartbeat_interval_ms = hb.value();
  auto miss = get_int(job, "heartbeat_miss_limit", 3);
  if (!miss) return miss.error();
  s.job.heartbeat_miss_limit = static_cast<int>(miss.value());
  if (job.contains("scheduler_config")) {
    if (!job["scheduler_config"].is_object())
      return std::string("job.scheduler_config must be an object");
    for (const auto& [k, v] : job["scheduler_config"].items()) {
      if (!v.is_string()) return std::string("scheduler_config values must be strings");
      s.job.scheduler_config[k] = v.get<std::string>();
    }
  }

  auto horizon = get_int(doc, "horizon_ms", 1000000);
  if (!horizon) return horizon.error();
  if (horizon.value() < 1) return std::string("horizon_ms must be >= 1");
  s.horizon_ms = horizon.value();

  if (doc.contains("actions")) {
    if (!doc["actions"].is_array()) return std::string("actions must be an array");
    for (const auto& a : doc["actions"]) {
      ScenarioAction action;
      auto at = get_int(a, "at", 0, true);
      if (!at) return at.error();
      if (at.value() < 0) return std::string("action time must be >= 0");
      action.at = at.value();
      if (!a.contains("kind") || !a["kind"].is_string())
        return std::string("action missing kind");
      const std::string kind = a["kind"].get<std::string>();
      if (!a.contains("task") || !a["task"].is_string())
        return std::string("action missing task");
      auto task = TaskId::parse(a["task"].get<std::string>());
      if (!task) return "bad action task id: " + a["task"].get<std::string>();
      action.task = *task;
      if (kind == "kill_task") {
        action.kind = ActionKind::KillTask;
      } else if (kind == "drop_heartbeats") {
        action.kind = ActionKind::DropHeartbeats;
        auto d = get_int(a, "duration_ms", 0, true);
        if (!d) return d.error();
        action.duration_ms = d.value();
      } else if (kind == "delay_allocation") {
        action.kind = ActionKind::DelayAllocation;
        auto e = get_int(a, "extra_ms", 0, true);
        if (!e) return e.error();
        action.extra_ms = e.value();
      } else if (kind == "child_exit") {
        action.kind = ActionKind::ChildExit;
        auto code = get_int(a, "code", 0, true);
        if (!code) return code.error();
        action.exit_code = static_cast<int>(code.value());
        auto after = get_int(a, "after_ms", 0, true);
        if (!after) return after.error();
        action.after_ms = after.value();
      } else {
        return "unknown action kind: " + kind;
      }
      s.actions.push_back(std::move(action));
    }
  }
  return s;
}

}  // namespace harness
}  // namespace orch

#endif  // ORCH_HARNESS_SCENARIO_HPP_
