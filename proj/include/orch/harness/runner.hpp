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
#ifndef ORCH_HARNESS_RUNNER_HPP_
#define ORCH_HARNESS_RUNNER_HPP_

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "orch/backend/sim.hpp"
#include "orch/harness/scenario.hpp"
#include "orch/master/master.hpp"
#include "orch/trace/trace.hpp"
#include "orch/util/result.hpp"

namespace orch {
namespace harness {

enum class RunOutcome { Completed, HorizonExceeded };

struct RunResult {
  Trace trace;
  RunOutcome outcome = RunOutcome::Completed;
  JobState final_state = JobState::Submitted;
  int final_attempt = 1;
};

// Drives master + simulated backend to job termination or the time horizon.
// Faults are injected at the backend layer only; the master is exercised
// purely through its public event surface. Fixed (scenario, seed) replays
// to a byte-identical trace.
inline Result<RunResult, std::string> run_scenario(const ScenarioScript& script,
                                                   std::uint64_t seed,
                                                   TraceSink* live_sink = nullptr) {
  auto validated = validate_job_spec(script.job);
  if (!validated) {
    std::string msg = "invalid job spec:";
    for (const auto& e : validated.error()) msg += " [" + e.field + "] " + e.message + ";";
    return msg;
  }
  for (const auto& a : script.actions) {
    const TaskGroupSpec* g = script.job.find_group(a.task.group);
    if (!g) return "action references unknown group: " + a.task.group;
    if (a.task.index < 0 || a.task.index >= g->instances)
      return "action references out-of-range task: " + a.task.str();
  }
  if (script.cluster.hosts.empty()) return std::string("cluster has no hosts");

  TraceCollector collector;
  TeeSink sink;
  sink.add(&collector);
  if (live_sink) sink.add(live_sink);

  sim::SimWorld world;
  sim::SimBackend backend(script.cluster, world, sink);
  MasterConfig config;
  config.master_addr = "sim:0";
  Master master(std::move(validated.value()), backend, sink, [&world] { return world.now(); },
                config);
  backend.set_master(&master);

  sink.append(TraceRecord{0, 1, "run", "run_config",
                          {{"seed", seed},
                           {"horizon_ms", script.horizon_ms},
                           {"max_attempts", script.job.max_attempts},
                           {"total_instances", script.job.total_instances()}}});

  for (const auto& a : script.actions) {
    const ScenarioAction action = a;
    world.at(action.at, sim::EventCategory::Fault,
             std::string(to_string(action.kind)) + " " + action.task.str(),
             [&backend, action] {
               switch (action.kind) {
                 case ActionKind::KillTask:
                   backend.arm_kill(action.task);
                   break;
                 case ActionKind::DropHeartbeats:
                   backend.add_drop_window(action.task, action.at, action.duration_ms);
                   break;
                 case ActionKind::DelayAllocation:
                   backend.add_allocation_delay(action.task, action.extra_ms);
                   break;
                 case ActionKind::ChildExit:
                   backend.push_child_script(action.task, action.exit_code, action.after_ms);
                   break;
               }
             });
  }

  // Master liveness sweeps ride a self-perpetuating tick chain that stops at
  // job termination so the queue can drain. The chain closure outlives every
  // scheduled event: the loop below drains the world before returning.
  std::function<void()> tick_chain;
  const std::int64_t cadence = script.cluster.tick_interval_ms;
  tick_chain = [&world, &master, &tick_chain, cadence] {
    if (master.terminal()) return;
    master.tick(world.now());
    if (!master.terminal())
      world.after(cadence, sim::EventCategory::Tick, "tick", [&tick_chain] { tick_chain(); });
  };
  world.after(cadence, sim::EventCategory::Tick, "tick", [&tick_chain] { tick_chain(); });

  // Start after same-time fault arming so t=0 actions (delays, child
  // scripts) are in force before the first container request.
  world.at(0, sim::EventCategory::Child, "master_start", [&master] { master.start(); });
  while (!world.empty() && world.next_time() <= script.horizon_ms) world.fire_next();

  RunResult result;
  result.outcome = master.terminal() ? RunOutcome::Completed : RunOutcome::HorizonExceeded;
  if (result.outcome == RunOutcome::HorizonExceeded)
    sink.append(TraceRecord{script.horizon_ms, master.attempt(), "run", "horizon_exceeded",
                            nlohmann::json::object()});
  result.final_state = master.job_state();
  result.final_attempt = master.attempt();
  result.trace = collector.take();
  return result;
}

// ---------------------------------------------------------------------------
// Random scenario generation
// ---------------------------------------------------------------------------

struct ScenarioBounds {
  int min_groups = 1;
  int max_groups = 3;
  int max_instances = 4;
  std::vector<std::int64_t> memory_choices = {512, 1024, 2048, 4096};
  int max_vcores = 4;
  int max_gpus = 2;
  int max_hosts = 4;
  ResourceRequest host_capacity = {65536, 64, 8};
  int max_attempts_max = 3;
  bool kills = true;
  bool drops = true;
  bool delays = true;
  int max_faults = 3;
  double exhaust_probability = 0.15;
  std::int64_t allocation_delay_ms = 1000;
  std::int64_t tick_interval_ms = 100;
  std::int64_t child_exit_min_ms = 300;
  std::int64_t child_exit_max_ms = 4000;
  std::int64_t fault_time_max_ms = 6000;
};

// Deterministically generates `count` scenarios; a pure function of
// (bounds, seed).
inline Result<std::vector<ScenarioScript>, std::string> random_scenarios(
    const ScenarioBounds& bounds, int count, std::uint64_t seed) {
  if (count < 0) return std::string("count must be >= 0");
  if (bounds.min_groups < 1 || bounds.max_groups < bounds.min_groups ||
      bounds.max_instances < 1 || bounds.max_hosts < 1)
    return std::string("bad bounds");

  // Worst case must fit the largest cluster the bounds allow.
  const ResourceRequest max_task{bounds.memory_choices.empty()
                                     ? 1024
                                     : *std::max_element(bounds.memory_choices.begin(),
                                                         bounds.memory_choices.end()),
                                 bounds.max_vcores, bounds.max_gpus};
  if (!bounds.host_capacity.covers(max_task))
    return std::string("infeasible-bounds: a single task can exceed host capacity");
  const int worst_tasks = bounds.max_groups * bounds.max_instances;
  const std::int64_t cap_mem = bounds.host_capacity.memory_mb * bounds.max_hosts;
  const std::int64_t cap_vcores =
      static_cast<std::int64_t>(bounds.host_capacity.vcores) * bounds.max_hosts;
  const std::int64_t cap_gpus =
      static_cast<std::int64_t>(bounds.host_capacity.gpus) * bounds.max_hosts;
  if (max_task.memory_mb * worst_tasks > cap_mem ||
      static_cast<std::int64_t>(max_task.vcores) * worst_tasks > cap_vcores ||
      static_cast<std::int64_t>(max_task.gpus) * worst_tasks > cap_gpus)
    return std::string("infeasible-bounds: job shape cannot fit the cluster");

  std::mt19937_64 rng(seed);
  auto rand_int = [&rng](std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng);
  };
  auto rand_real = [&rng] { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); };

  std::vector<ScenarioScript> scripts;
  scripts.reserve(count);
  for (int si = 0; si < count; ++si) {
    ScenarioScript s;
    s.job.job_name = "rand" + std::to_string(si);
    const int groups = static_cast<int>(rand_int(bounds.min_groups, bounds.max_groups));
    for (int gi = 0; gi < groups; ++gi) {
      TaskGroupSpec g;
      if (gi == 0) g.name = "worker";
      else if (gi == 1) g.name = "ps";
      else g.name = "aux" + std::to_string(gi);
      g.instances = static_cast<int>(rand_int(1, bounds.max_instances));
      g.resources.memory_mb =
          bounds.memory_choices[rand_int(0, bounds.memory_choices.size() - 1)];
      g.resources.vcores = static_cast<int>(rand_int(1, bounds.max_vcores));
      g.resources.gpus = static_cast<int>(rand_int(0, bounds.max_gpus));
      g.tracked = g.name != "ps";
      s.job.groups.push_back(std::move(g));
    }
    s.job.max_attempts = static_cast<int>(rand_int(1, bounds.max_attempts_max));
    s.job.command = {"sim-payload"};

    // Joint feasibility must hold under the sim's exact policy (first-fit in
    // request order): total capacity is not enough, fragmentation can strand
    // a request forever. Size the cluster by replaying the placement, and
    // shed instances if even max_hosts cannot pack the roll.
    auto packs_within = [&](const JobSpec& job, int hosts) {
      std::vector<ResourceRequest> used(hosts, ResourceRequest{0, 0, 0});
      for (const auto& g : job.groups)
        for (int i = 0; i < g.instances; ++i) {
          bool placed = false;
          for (auto& u : used) {
            ResourceRequest would{u.memory_mb + g.resources.memory_mb,
                                  u.vcores + g.resources.vcores, u.gpus + g.resources.gpus};
            if (bounds.host_capacity.covers(would)) {
              u = would;
              placed = true;
              break;
            }
          }
          if (!placed) return false;
        }
      return true;
    };
    while (!packs_within(s.job, bounds.max_hosts)) {
      auto largest = std::max_element(
          s.job.groups.begin(), s.job.groups.end(),
          [](const TaskGroupSpec& a, const TaskGroupSpec& b) { return a.instances < b.instances; });
      if (largest->instances > 1) largest->instances -= 1;
      else if (s.job.groups.size() > 1) s.job.groups.pop_back();
      else break;  // a single task always fits per the precheck
    }
    int min_hosts = bounds.max_hosts;
    for (int h = 1; h <= bounds.max_hosts; ++h)
      if (packs_within(s.job, h)) {
        min_hosts = h;
        break;
      }
    const int hosts =
        std::max(static_cast<int>(rand_int(1, bounds.max_hosts)), min_hosts);
    for (int hi = 0; hi < hosts; ++hi)
      s.cluster.hosts.push_back({"h" + std::to_string(hi), bounds.host_capacity});
    s.cluster.allocation_delay_ms = bounds.allocation_delay_ms;
    s.cluster.tick_interval_ms = bounds.tick_interval_ms;
    s.cluster.seed = seed + si;

    // Every task eventually exits 0 so every scenario terminates.
    for (const auto& g : s.job.groups)
      for (int i = 0; i < g.instances; ++i)
        s.actions.push_back({0, ActionKind::ChildExit, TaskId{g.name, i}, 0, 0, 0,
                             rand_int(bounds.child_exit_min_ms, bounds.child_exit_max_ms)});

    auto random_task = [&]() {
      const auto& g = s.job.groups[rand_int(0, s.job.groups.size() - 1)];
      return TaskId{g.name, static_cast<int>(rand_int(0, g.instances - 1))};
    };

    const bool faults_enabled = bounds.kills || bounds.drops || bounds.delays;
    if (bounds.kills && rand_real() < bounds.exhaust_probability) {
      // Kill the same task once per attempt until attempts run out.
      const TaskId victim = random_task();
      const std::int64_t t0 = rand_int(1500, std::max<std::int64_t>(1500, bounds.fault_time_max_ms));
      for (int k = 0; k < s.job.max_attempts; ++k)
        s.actions.push_back({t0 + k, ActionKind::KillTask, victim, 0, 0, 0, 0});
    } else if (faults_enabled) {
      const int faults = static_cast<int>(rand_int(0, bounds.max_faults));
      for (int f = 0; f < faults; ++f) {
        std::vector<ActionKind> kinds;
        if (bounds.kills) kinds.push_back(ActionKind::KillTask);
        if (bounds.drops) kinds.push_back(ActionKind::DropHeartbeats);
        if (bounds.delays) kinds.push_back(ActionKind::DelayAllocation);
        const ActionKind kind = kinds[rand_int(0, kinds.size() - 1)];
        ScenarioAction a;
        a.task = random_task();
        a.at = rand_int(0, bounds.fault_time_max_ms);
        a.kind = kind;
        if (kind == ActionKind::DropHeartbeats) a.duration_ms = rand_int(3500, 9000);
        if (kind == ActionKind::DelayAllocation) a.extra_ms = rand_int(500, 3000);
        s.actions.push_back(std::move(a));
      }
    }

    scripts.push_back(std::move(s));
  }
  return scripts;
}

}  // namespace harness
}  // namespace orch

#endif  // ORCH_HARNESS_RUNNER_HPP_
