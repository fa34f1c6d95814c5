#include <catch2/catch_amalgamated.hpp>

#include "orch/backend/sim.hpp"
#include "orch/harness/checker.hpp"
#include "orch/harness/runner.hpp"
#include "orch/harness/scenario.hpp"

using namespace orch;
using namespace orch::harness;

namespace {

ScenarioScript capacity_script(int workers, std::int64_t per_task_mb, std::int64_t host_mb,
                               std::int64_t exit_after = 500) {
  ScenarioScript s;
  s.cluster.hosts = {{"h0", {host_mb, 64, 8}}};
  s.cluster.allocation_delay_ms = 1000;
  s.job.job_name = "cap";
  s.job.groups = {{"worker", workers, {per_task_mb, 1, 0}, true}};
  s.job.command = {"payload"};
  for (int i = 0; i < workers; ++i)
    s.actions.push_back({0, ActionKind::ChildExit, {"worker", i}, 0, 0, 0, exit_after});
  return s;
}

std::vector<TraceRecord> records_of(const Trace& trace, const std::string& event) {
  std::vector<TraceRecord> out;
  for (const auto& r : trace)
    if (r.event == event) out.push_back(r);
  return out;
}

}  // namespace

TEST_CASE("sim world fires same-time events in category order, then insertion order") {
  sim::SimWorld world;
  std::vector<std::string> order;
  world.at(10, sim::EventCategory::Tick, "tick", [&] { order.push_back("tick"); });
  world.at(10, sim::EventCategory::Fault, "fault", [&] { order.push_back("fault"); });
  world.at(10, sim::EventCategory::Child, "child-b", [&] { order.push_back("child-b"); });
  world.at(10, sim::EventCategory::Allocation, "alloc", [&] { order.push_back("alloc"); });
  world.at(10, sim::EventCategory::Child, "child-c", [&] { order.push_back("child-c"); });
  world.at(5, sim::EventCategory::Tick, "early", [&] { order.push_back("early"); });

  auto fired = world.step_until(10);
  REQUIRE(order.size() == 6);
  CHECK(order == std::vector<std::string>{"early", "alloc", "fault", "child-b", "child-c", "tick"});
  CHECK(fired.size() == 6);
  CHECK(world.now() == 10);
}

TEST_CASE("stepping with no workload yields only tick events at the cadence") {
  sim::SimWorld world;
  const std::int64_t cadence = 250;
  std::function<void()> chain;
  chain = [&world, &chain, cadence] {
    world.after(cadence, sim::EventCategory::Tick, "tick", [&chain] { chain(); });
  };
  world.after(cadence, sim::EventCategory::Tick, "tick", [&chain] { chain(); });

  auto fired = world.step_until(1000);
  REQUIRE(fired.size() == 4);
  for (std::size_t i = 0; i < fired.size(); ++i) {
    CHECK(fired[i].label == "tick");
    CHECK(fired[i].category == sim::EventCategory::Tick);
    CHECK(fired[i].t == static_cast<std::int64_t>(cadence * (i + 1)));
  }
  CHECK(world.now() == 1000);
}

TEST_CASE("two same-size requests fit one host and allocate at the configured delay") {
  auto result = run_scenario(capacity_script(2, 4096, 8192), 7);
  REQUIRE(result.ok());
  const auto& trace = result.value().trace;

  auto grants = records_of(trace, "alloc_grant");
  REQUIRE(grants.size() == 2);
  CHECK(grants[0].t == 0);  // capacity decision is immediate
  auto allocated = records_of(trace, "allocated");
  REQUIRE(allocated.size() == 2);
  CHECK(allocated[0].t == 1000);  // delivery at allocation_delay
  CHECK(allocated[1].t == 1000);
  CHECK(result.value().final_state == JobState::Succeeded);
}

TEST_CASE("a third request waits for a release before it is granted") {
  TraceCollector collector;
  sim::SimWorld world;
  sim::SimClusterConfig config;
  config.hosts = {{"h0", {8192, 64, 0}}};
  config.allocation_delay_ms = 100;
  sim::SimBackend backend(config, world, collector);

  JobSpec job;
  job.groups = {{"worker", 3, {4096, 1, 0}, true}};
  Master master(validate_job_spec(job).value(), backend, collector, [&] { return world.now(); });
  backend.set_master(&master);

  backend.request_containers({{{"worker", 0}, {4096, 1, 0}, 1, {}},
                              {{"worker", 1}, {4096, 1, 0}, 1, {}},
                              {{"worker", 2}, {4096, 1, 0}, 1, {}}});
  CHECK(backend.host_used(0).memory_mb == 8192);  // only two fit
  world.step_until(500);

  auto grants = records_of(collector.trace(), "alloc_grant");
  REQUIRE(grants.size() == 2);
  CHECK(grants[0].subject == "worker/0");
  CHECK(grants[1].subject == "worker/1");

  // Container ids are deterministic; hand the first one back.
  backend.release(ContainerHandle{"c1", "h0", {4096, 1, 0}, ""});
  grants = records_of(collector.trace(), "alloc_grant");
  REQUIRE(grants.size() == 3);
  CHECK(grants[2].subject == "worker/2");
  CHECK(backend.host_used(0).memory_mb == 8192);
}

TEST_CASE("requests for identical resources are granted in arrival order") {
  auto result = run_scenario(capacity_script(2, 4096, 8192), 3);
  REQUIRE(result.ok());
  auto grants = records_of(result.value().trace, "alloc_grant");
  REQUIRE(grants.size() == 2);
  CHECK(grants[0].subject == "worker/0");
  CHECK(grants[1].subject == "worker/1");
}

TEST_CASE("an infeasible request is rejected immediately and fails the job") {
  auto result = run_scenario(capacity_script(1, 16384, 8192), 7);
  REQUIRE(result.ok());
  const auto& trace = result.value().trace;
  CHECK_FALSE(records_of(trace, "container_rejected").empty());
  CHECK(result.value().final_state == JobState::Failed);
}

TEST_CASE("capacity is conserved and credited exactly on release") {
  auto result = run_scenario(capacity_script(2, 4096, 8192), 7);
  REQUIRE(result.ok());
  const auto& trace = result.value().trace;
  auto violations = check_invariants(trace);
  CHECK(violations.empty());
  // Every grant is matched by a release by the end of the run.
  CHECK(records_of(trace, "alloc_grant").size() ==
        records_of(trace, "alloc_release").size());
}

TEST_CASE("double release is an idempotent no-op") {
  TraceCollector collector;
  sim::SimWorld world;
  sim::SimClusterConfig config;
  config.hosts = {{"h0", {8192, 8, 0}}};
  config.allocation_delay_ms = 0;
  sim::SimBackend backend(config, world, collector);

  JobSpec job;
  job.groups = {{"worker", 1, {4096, 1, 0}, true}};
  Master master(validate_job_spec(job).value(), backend, collector, [&] { return world.now(); });
  backend.set_master(&master);

  backend.request_containers({{{"worker", 0}, {4096, 1, 0}, 1, {}}});
  CHECK(backend.host_used(0).memory_mb == 4096);

  ContainerHandle handle{"c1", "h0", {4096, 1, 0}, ""};
  backend.release(handle);
  CHECK(backend.host_used(0).memory_mb == 0);
  backend.release(handle);
  CHECK(backend.host_used(0).memory_mb == 0);  // no double credit
}

TEST_CASE("simulation runs are deterministic: identical traces for identical inputs") {
  ScenarioScript s = capacity_script(3, 1024, 65536, 700);
  s.actions.push_back({2000, ActionKind::KillTask, {"worker", 1}, 0, 0, 0, 0});
  s.actions.push_back({0, ActionKind::ChildExit, {"worker", 1}, 0, 0, 0, 700});
  s.job.max_attempts = 3;

  auto a = run_scenario(s, 99);
  auto b = run_scenario(s, 99);
  REQUIRE(a.ok());
  REQUIRE(b.ok());
  CHECK(trace_to_ndjson(a.value().trace) == trace_to_ndjson(b.value().trace));
  CHECK_FALSE(a.value().trace.empty());
}
