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
#ifndef ORCH_HARNESS_CHECKER_HPP_
#define ORCH_HARNESS_CHECKER_HPP_

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "orch/core/types.hpp"
#include "orch/trace/trace.hpp"

namespace orch {
namespace harness {

struct Violation {
  std::string invariant;
  std::size_t record_index;
  std::string detail;
};

// Evaluates every trace-checkable protocol invariant:
//   gang-start        — no SPEC before every task of the attempt REGISTERED,
//                       and no child spawn before its executor's SPEC.
//   single-broadcast  — exactly one SPEC per executor per attempt.
//   stale-silence     — accepted messages always carry the current attempt.
//   full-gang         — every re-request covers the full instance count.
//   monotone-attempts — message attempts never decrease, never exceed
//                       max_attempts.
//   capacity          — per-host grants never exceed capacity; credits match
//                       debits.
// Violations are data, not errors; a correct run yields an empty list.
inline std::vector<Violation> check_invariants(const Trace& trace) {
  std::vector<Violation> out;

  // Task universe and per-attempt request counts come from the trace itself.
  std::set<std::string> all_tasks;
  std::map<int, std::map<std::string, int>> requests;       // attempt -> task -> count
  std::map<int, std::set<std::string>> registered;          // attempt -> tasks registered
  std::map<int, std::map<std::string, int>> specs;          // attempt -> task -> count
  std::map<int, std::size_t> first_spec_index;
  std::map<int, std::set<std::string>> spawned;             // attempt -> tasks spawned
  std::int64_t max_attempts = 0;

  for (std::size_t i = 0; i < trace.size(); ++i) {
    const TraceRecord& r = trace[i];
    if (r.event == "container_requested") {
      all_tasks.insert(r.subject);
      requests[r.attempt][r.subject] += 1;
    }
  }
  const int total_instances = static_cast<int>(all_tasks.size());

  std::int64_t running_attempt = 0;
  std::map<std::string, ResourceRequest> capacity;
  std::map<std::string, ResourceRequest> used;

  for (std::size_t i = 0; i < trace.size(); ++i) {
    const TraceRecord& r = trace[i];

    if (r.event == "run_config" && r.detail.contains("max_attempts"))
      max_attempts = r.detail["max_attempts"].get<std::int64_t>();

    // --- stale-silence and monotone-attempts over message records ---------
    const bool received = r.event == "register_received" || r.event == "heartbeat_received" ||
                          r.event == "exit_received";
    const bool sent = r.event == "spec_sent" || r.event == "teardown_sent";
    if (received) {
      const std::int64_t msg_attempt =
          r.detail.contains("msg_attempt") ? r.detail["msg_attempt"].get<std::int64_t>() : -1;
      if (msg_attempt != r.attempt)
        out.push_back({"stale-silence", i,
                       r.subject + ": accepted message with attempt " +
                           std::to_string(msg_attempt) + " while on " +
                           std::to_string(r.attempt)});
    }
    if (received || sent) {
      if (r.attempt < running_attempt)
        out.push_back({"monotone-attempts", i,
                       "attempt " + std::to_string(r.attempt) + " after " +
                           std::to_string(running_attempt)});
      running_attempt = std::max<std::int64_t>(running_attempt, r.attempt);
      if (max_attempts > 0 && r.attempt > max_attempts)
        out.push_back({"monotone-attempts", i,
                       "attempt " + std::to_string(r.attempt) + " exceeds max_attempts"});
    }

    if (r.event == "register_received") registered[r.attempt].insert(r.subject);

    // --- gang-start + single-broadcast -------------------------------------
    if (r.event == "spec_sent") {
      auto& per_task = specs[r.attempt];
      per_task[r.subject] += 1;
      if (per_task[r.subject] > 1)
        out.push_back({"single-broadcast", i,
                       r.subject + ": SPEC sent twice in attempt " + std::to_string(r.attempt)});
      if (!first_spec_index.count(r.attempt)) {
        first_spec_index[r.attempt] = i;
        const auto& regs = registered[r.attempt];
        if (static_cast<int>(regs.size()) < total_instances)
          out.push_back({"gang-start", i,
                         "SPEC broadcast with " + std::to_string(regs.size()) + "/" +
                             std::to_string(total_instances) + " tasks registered (attempt " +
                             std::to_string(r.attempt) + ")"});
      }
    }

    if (r.event == "child_spawn") {
      spawned[r.attempt].insert(r.subject);
      auto sit = specs.find(r.attempt);
      if (sit == specs.end() || !sit->second.count(r.subject))
        out.push_back({"gang-start", i,
                       r.subject + ": child spawned before SPEC of attempt " +
                           std::to_string(r.attempt)});
    }

    // --- capacity conservation ---------------------------------------------
    if (r.event == "host") {
      const std::string host = r.detail["host"].get<std::string>();
      capacity[host] = ResourceRequest{r.detail["memory_mb"].get<std::int64_t>(),
                                       r.detail["vcores"].get<int>(),
                                       r.detail["gpus"].get<int>()};
      used[host] = ResourceRequest{0, 0, 0};
    }
    if (r.event == "alloc_grant" || r.event == "alloc_release") {
      const std::string host = r.detail["host"].get<std::string>();
      if (!capacity.count(host)) {
        out.push_back({"capacity", i, "grant on undeclared host " + host});
        continue;
      }
      const ResourceRequest res{r.detail["memory_mb"].get<std::int64_t>(),
                                r.detail["vcores"].get<int>(), r.detail["gpus"].get<int>()};
      ResourceRequest& u = used[host];
      if (r.event == "alloc_grant") {
        u.memory_mb += res.memory_mb;
        u.vcores += res.vcores;
        u.gpus += res.gpus;
        if (!capacity[host].covers(u))
          out.push_back({"capacity", i, "host " + host + " over capacity"});
      } else {
        u.memory_mb -= res.memory_mb;
        u.vcores -= res.vcores;
        u.gpus -= res.gpus;
        if (u.memory_mb < 0 || u.vcores < 0 || u.gpus < 0)
          out.push_back({"capacity", i, "host " + host + " credited below zero"});
      }
    }
  }

  // --- per-attempt completeness checks -------------------------------------
  for (const auto& [attempt, per_task] : specs) {
    if (static_cast<int>(per_task.size()) != total_instances) {
      out.push_back({"single-broadcast", first_spec_index[attempt],
                     "attempt " + std::to_string(attempt) + ": broadcast reached " +
                         std::to_string(per_task.size()) + "/" +
                         std::to_string(total_instances) + " executors"});
    }
  }
  for (const auto& [attempt, per_task] : requests) {
    if (attempt == 1) continue;  // re-requests only
    int count = 0;
    for (const auto& [_, n] : per_task) count += n;
    if (count != total_instances)
      out.push_back({"full-gang", 0,
                     "attempt " + std::to_string(attempt) + ": " + std::to_string(count) +
                         " fresh requests for " + std::to_string(total_instances) + " instances"});
  }

  return out;
}

// Trace-detectable fault classes, used to gate generator coverage.
enum class FaultClass { PreBroadcast, PostBroadcast, MultiFaultSameAttempt, AttemptsExhausted };

inline std::set<FaultClass> classify_trace(const Trace& trace) {
  std::set<FaultClass> classes;
  std::map<int, std::size_t> first_spec_index;
  for (std::size_t i = 0; i < trace.size(); ++i)
    if (trace[i].event == "spec_sent" && !first_spec_index.count(trace[i].attempt))
      first_spec_index[trace[i].attempt] = i;

  std::map<int, std::set<std::string>> faults_per_attempt;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const TraceRecord& r = trace[i];
    const bool is_fault = r.event == "fault_kill" || r.event == "hb_dropped";
    if (!is_fault) continue;
    faults_per_attempt[r.attempt].insert(r.event + ":" + r.subject);
    auto it = first_spec_index.find(r.attempt);
    if (it == first_spec_index.end() || i < it->second)
      classes.insert(FaultClass::PreBroadcast);
    else
      classes.insert(FaultClass::PostBroadcast);
  }
  for (const auto& [_, faults] : faults_per_attempt)
    if (faults.size() >= 2) classes.insert(FaultClass::MultiFaultSameAttempt);
  for (const auto& r : trace)
    if (r.event == "recovery_exhausted") classes.insert(FaultClass::AttemptsExhausted);
  return classes;
}

}  // namespace harness
}  // namespace orch

#endif  // ORCH_HARNESS_CHECKER_HPP_
