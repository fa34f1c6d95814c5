#include <catch2/catch_amalgamated.hpp>

#include "orch/harness/checker.hpp"
#include "orch/harness/runner.hpp"
#include "orch/harness/scenario.hpp"

using namespace orch;
using namespace orch::harness;

namespace {

// worker x2 tracked + ps x1 untracked on one roomy host.
ScenarioScript basic_script() {
  ScenarioScript s;
  s.cluster.hosts = {{"h0", {65536, 64, 8}}};
  s.job.job_name = "basic";
  s.job.groups = {
      {"worker", 2, {4096, 1, 0}, true},
      {"ps", 1, {2048, 1, 0}, false},
  };
  s.job.command = {"payload"};
  s.job.max_attempts = 2;
  return s;
}

void script_exits(ScenarioScript& s, const TaskId& task, int code, std::int64_t after_ms) {
  s.actions.push_back({0, ActionKind::ChildExit, task, 0, 0, code, after_ms});
}

void script_all_exit_zero(ScenarioScript& s, std::int64_t after_ms) {
  for (const auto& g : s.job.groups)
    for (int i = 0; i < g.instances; ++i) script_exits(s, {g.name, i}, 0, after_ms);
}

int count_records(const Trace& trace, const std::string& event, int attempt = -1) {
  int n = 0;
  for (const auto& r : trace)
    if (r.event == event && (attempt < 0 || r.attempt == attempt)) ++n;
  return n;
}

std::vector<std::size_t> indices_of(const Trace& trace, const std::string& event) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < trace.size(); ++i)
    if (trace[i].event == event) out.push_back(i);
  return out;
}

}  // namespace

TEST_CASE("fault-free scenario completes at attempt 1 with a clean trace") {
  ScenarioScript s = basic_script();
  script_all_exit_zero(s, 500);
  auto result = run_scenario(s, 11);
  REQUIRE(result.ok());
  const RunResult& run = result.value();
  CHECK(run.outcome == RunOutcome::Completed);
  CHECK(run.final_state == JobState::Succeeded);
  CHECK(run.final_attempt == 1);
  CHECK(count_records(run.trace, "register_received") == 3);
  CHECK(count_records(run.trace, "spec_sent") == 3);
  CHECK(check_invariants(run.trace).empty());
}

TEST_CASE("single kill: teardown to survivors, full re-request, second broadcast, success") {
  // Hand-run of the master state machine: kill worker/1 at t=2000 while the
  // gang runs. Registration lands at t=1000 (allocation delay), so the kill
  // is post-broadcast. worker/1 goes silent; at the first tick after
  // 1000+3000 it is LOST; TEARDOWN reaches worker/0 and ps/0; after the
  // 2000 ms grace, 3 fresh requests go out; the gang re-registers, gets a
  // second broadcast at attempt 2 and every child exits 0.
  ScenarioScript s = basic_script();
  for (const auto& g : s.job.groups)
    for (int i = 0; i < g.instances; ++i) {
      script_exits(s, {g.name, i}, 0, 60000);  // attempt 1: run long
      script_exits(s, {g.name, i}, 0, 500);    // attempt 2: finish fast
    }
  s.actions.push_back({2000, ActionKind::KillTask, {"worker", 1}, 0, 0, 0, 0});

  auto result = run_scenario(s, 5);
  REQUIRE(result.ok());
  const RunResult& run = result.value();
  CHECK(run.outcome == RunOutcome::Completed);
  CHECK(run.final_state == JobState::Succeeded);
  CHECK(run.final_attempt == 2);

  // (a) TEARDOWN to both survivors.
  std::set<std::string> torn;
  for (const auto& r : run.trace)
    if (r.event == "teardown_sent" && r.attempt == 1) torn.insert(r.subject);
  CHECK(torn == std::set<std::string>{"worker/0", "ps/0"});

  // (b) fresh requests equal to the total instance count.
  CHECK(count_records(run.trace, "container_requested", 2) == 3);

  // (c) a second broadcast, attempt incremented by exactly one.
  CHECK(count_records(run.trace, "spec_sent", 1) == 3);
  CHECK(count_records(run.trace, "spec_sent", 2) == 3);

  CHECK(check_invariants(run.trace).empty());
}

TEST_CASE("kill before the broadcast still restarts the full gang") {
  ScenarioScript s = basic_script();
  script_all_exit_zero(s, 1000);
  // Delay ps/0's container so the rendezvous is still open at t=1500, then
  // kill the already-registered worker/0.
  s.actions.push_back({0, ActionKind::DelayAllocation, {"ps", 0}, 0, 5000, 0, 0});
  s.actions.push_back({1500, ActionKind::KillTask, {"worker", 0}, 0, 0, 0, 0});

  auto result = run_scenario(s, 5);
  REQUIRE(result.ok());
  const RunResult& run = result.value();
  CHECK(run.final_state == JobState::Succeeded);
  CHECK(run.final_attempt == 2);
  // No broadcast ever happened in attempt 1.
  CHECK(count_records(run.trace, "spec_sent", 1) == 0);
  CHECK(count_records(run.trace, "spec_sent", 2) == 3);
  CHECK(count_records(run.trace, "container_requested", 2) == 3);
  CHECK(check_invariants(run.trace).empty());
}

TEST_CASE("kill at every attempt exhausts attempts and names the task") {
  ScenarioScript s = basic_script();  // max_attempts = 2
  script_all_exit_zero(s, 60000);
  s.actions.push_back({2000, ActionKind::KillTask, {"worker", 1}, 0, 0, 0, 0});
  s.actions.push_back({2000, ActionKind::KillTask, {"worker", 1}, 0, 0, 0, 0});

  auto result = run_scenario(s, 5);
  REQUIRE(result.ok());
  const RunResult& run = result.value();
  CHECK(run.outcome == RunOutcome::Completed);
  CHECK(run.final_state == JobState::Failed);
  CHECK(run.final_attempt == 2);
  // Exactly max_attempts broadcasts.
  CHECK(count_records(run.trace, "spec_sent", 1) == 3);
  CHECK(count_records(run.trace, "spec_sent", 2) == 3);
  CHECK(count_records(run.trace, "spec_sent") == 6);

  // Diagnostics in the terminal record name the killed task.
  bool named = false;
  for (const auto& r : run.trace)
    if (r.event == "job_state" && r.detail["state"] == "FAILED")
      for (const auto& d : r.detail["diagnostics"])
        if (d.get<std::string>().find("worker/1") != std::string::npos) named = true;
  CHECK(named);
  CHECK(check_invariants(run.trace).empty());
}

TEST_CASE("dropped heartbeats mark the task LOST at the first tick past the deadline") {
  // Registration at t=1000; heartbeats at 2000, 3000, ... Dropping from
  // T=3000 leaves 3000 as the last delivered beat; with a 3000 ms budget the
  // first tick strictly after 6000 is 6100 at a 100 ms cadence.
  ScenarioScript s = basic_script();
  script_all_exit_zero(s, 60000);
  s.actions.push_back({3000, ActionKind::DropHeartbeats, {"worker", 1}, 300000, 0, 0, 0});

  auto result = run_scenario(s, 5);
  REQUIRE(result.ok());
  const RunResult& run = result.value();

  std::optional<std::int64_t> lost_at;
  for (const auto& r : run.trace)
    if (r.event == "task_state" && r.subject == "worker/1" && r.detail["to"] == "LOST" &&
        !lost_at)
      lost_at = r.t;
  REQUIRE(lost_at.has_value());
  CHECK(*lost_at == 6100);
  CHECK(count_records(run.trace, "recovery") == 1);
  CHECK(check_invariants(run.trace).empty());

  // Simulated heartbeat cadence is exact: worker/0's delivered beats in
  // attempt 1 sit at precisely interval-sized steps from registration.
  std::vector<std::int64_t> beats;
  for (const auto& r : run.trace)
    if (r.event == "heartbeat_received" && r.subject == "worker/0" && r.attempt == 1)
      beats.push_back(r.t);
  REQUIRE(beats.size() >= 3);
  for (std::size_t i = 0; i < beats.size(); ++i)
    CHECK(beats[i] == 2000 + static_cast<std::int64_t>(i) * 1000);
}

TEST_CASE("horizon exceeded is a distinguished outcome, not a hang") {
  ScenarioScript s = basic_script();
  // No exit scripts: children run forever.
  s.horizon_ms = 20000;
  auto result = run_scenario(s, 5);
  REQUIRE(result.ok());
  CHECK(result.value().outcome == RunOutcome::HorizonExceeded);
  CHECK_FALSE(is_terminal(result.value().final_state));
  CHECK(count_records(result.value().trace, "horizon_exceeded") == 1);
}

TEST_CASE("run_scenario validates action task ids") {
  ScenarioScript s = basic_script();
  s.actions.push_back({0, ActionKind::KillTask, {"gpu", 0}, 0, 0, 0, 0});
  CHECK_FALSE(run_scenario(s, 1).ok());

  ScenarioScript s2 = basic_script();
  s2.actions.push_back({0, ActionKind::KillTask, {"worker", 9}, 0, 0, 0, 0});
  CHECK_FALSE(run_scenario(s2, 1).ok());
}

TEST_CASE("replay stability: identical (scenario, seed) gives identical bytes") {
  ScenarioScript s = basic_script();
  script_all_exit_zero(s, 800);
  s.actions.push_back({2500, ActionKind::KillTask, {"ps", 0}, 0, 0, 0, 0});
  script_exits(s, {"ps", 0}, 0, 800);

  auto a = run_scenario(s, 123);
  auto b = run_scenario(s, 123);
  REQUIRE(a.ok());
  REQUIRE(b.ok());
  CHECK(trace_to_ndjson(a.value().trace) == trace_to_ndjson(b.value().trace));
}

TEST_CASE("checker accepts correct traces and flags forged ones") {
  ScenarioScript s = basic_script();
  script_all_exit_zero(s, 500);
  auto result = run_scenario(s, 2);
  REQUIRE(result.ok());
  Trace good = result.value().trace;
  REQUIRE(check_invariants(good).empty());

  SECTION("SPEC before the final REGISTER is a gang-start violation") {
    Trace forged = good;
    auto regs = indices_of(forged, "register_received");
    auto specs = indices_of(forged, "spec_sent");
    REQUIRE(regs.size() == 3);
    REQUIRE_FALSE(specs.empty());
    // Move the first SPEC record before the last REGISTER.
    TraceRecord spec = forged[specs.front()];
    forged.erase(forged.begin() + specs.front());
    forged.insert(forged.begin() + regs[1], spec);
    auto violations = check_invariants(forged);
    bool found = false;
    for (const auto& v : violations)
      if (v.invariant == "gang-start") found = true;
    CHECK(found);
  }

  SECTION("two SPECs to one executor is a single-broadcast violation") {
    Trace forged = good;
    auto specs = indices_of(forged, "spec_sent");
    REQUIRE_FALSE(specs.empty());
    forged.push_back(forged[specs.front()]);
    auto violations = check_invariants(forged);
    bool found = false;
    for (const auto& v : violations)
      if (v.invariant == "single-broadcast") found = true;
    CHECK(found);
  }

  SECTION("an accepted stale message is a stale-silence violation") {
    Trace forged = good;
    for (auto& r : forged)
      if (r.event == "exit_received") r.detail["msg_attempt"] = 0;
    auto violations = check_invariants(forged);
    bool found = false;
    for (const auto& v : violations)
      if (v.invariant == "stale-silence") found = true;
    CHECK(found);
  }

  SECTION("a partial re-request is a full-gang violation") {
    Trace forged = good;
    TraceRecord req;
    for (const auto& r : forged)
      if (r.event == "container_requested") req = r;
    req.attempt = 2;
    forged.push_back(req);  // one lonely re-request
    auto violations = check_invariants(forged);
    bool found = false;
    for (const auto& v : violations)
      if (v.invariant == "full-gang") found = true;
    CHECK(found);
  }

  SECTION("over-capacity grants are flagged") {
    Trace forged = good;
    TraceRecord grant;
    for (const auto& r : forged)
      if (r.event == "alloc_grant") grant = r;
    grant.detail["memory_mb"] = 1 << 30;
    forged.push_back(grant);
    auto violations = check_invariants(forged);
    bool found = false;
    for (const auto& v : violations)
      if (v.invariant == "capacity") found = true;
    CHECK(found);
  }
}

TEST_CASE("random_scenarios is a pure function of bounds and seed") {
  ScenarioBounds bounds;
  auto a = random_scenarios(bounds, 50, 7);
  auto b = random_scenarios(bounds, 50, 7);
  REQUIRE(a.ok());
  REQUIRE(b.ok());
  REQUIRE(a.value().size() == 50);
  for (std::size_t i = 0; i < a.value().size(); ++i)
    CHECK(scenario_to_json(a.value()[i]) == scenario_to_json(b.value()[i]));
}

TEST_CASE("random_scenarios rejects infeasible bounds") {
  ScenarioBounds bounds;
  bounds.min_groups = bounds.max_groups = 1;
  bounds.max_instances = 10;
  bounds.max_hosts = 1;
  bounds.host_capacity = {4096, 1, 0};
  bounds.memory_choices = {1024};
  bounds.max_vcores = 1;
  bounds.max_gpus = 0;
  CHECK_FALSE(random_scenarios(bounds, 5, 1).ok());
}

TEST_CASE("random_scenarios with count zero is empty") {
  auto result = random_scenarios(ScenarioBounds{}, 0, 1);
  REQUIRE(result.ok());
  CHECK(result.value().empty());
}

TEST_CASE("scenario documents round-trip through the textual format") {
  ScenarioScript s = basic_script();
  s.job.scheduler_config = {{"queue", "dev"}, {"node-label", "gpu"}};
  script_all_exit_zero(s, 500);
  s.actions.push_back({2000, ActionKind::KillTask, {"worker", 1}, 0, 0, 0, 0});
  s.actions.push_back({2500, ActionKind::DropHeartbeats, {"ps", 0}, 4000, 0, 0, 0});
  s.actions.push_back({0, ActionKind::DelayAllocation, {"worker", 0}, 0, 1200, 0, 0});

  auto parsed = parse_scenario(scenario_to_json(s));
  REQUIRE(parsed.ok());
  CHECK(scenario_to_json(parsed.value()) == scenario_to_json(s));

  auto a = run_scenario(s, 4);
  auto b = run_scenario(parsed.value(), 4);
  REQUIRE(a.ok());
  REQUIRE(b.ok());
  CHECK(trace_to_ndjson(a.value().trace) == trace_to_ndjson(b.value().trace));
}

TEST_CASE("parse_scenario rejects malformed documents") {
  CHECK_FALSE(parse_scenario("not json").ok());
  CHECK_FALSE(parse_scenario("{}").ok());
  CHECK_FALSE(parse_scenario(R"({"cluster":{"hosts":[]},"job":{"groups":[]}})").ok());
  CHECK_FALSE(
      parse_scenario(
          R"({"cluster":{"hosts":[{"name":"h0","memory_mb":1,"vcores":1}]},)"
          R"("job":{"groups":[{"name":"w","instances":1}]},)"
          R"("actions":[{"at":0,"kind":"explode","task":"w/0"}]})")
          .ok());
}

TEST_CASE("trace records serialize with canonical key order") {
  TraceRecord r{1500, 2, "worker/0", "task_state", {{"from", "RUNNING"}, {"to", "SUCCEEDED"}}};
  CHECK(trace_record_to_line(r) ==
        "{\"attempt\":2,\"detail\":{\"from\":\"RUNNING\",\"to\":\"SUCCEEDED\"},"
        "\"event\":\"task_state\",\"subject\":\"worker/0\",\"t\":1500}\n");
}

TEST_CASE("the default generator covers every detectable fault class") {
  // Over >= 1000 scenarios at default bounds the corpus must contain every
  // class: fault before broadcast, fault after broadcast, multiple faults in
  // one attempt, attempts exhausted.
  auto scenarios = random_scenarios(ScenarioBounds{}, 1000, 20260811);
  REQUIRE(scenarios.ok());
  std::set<FaultClass> seen;
  for (std::size_t i = 0; i < scenarios.value().size(); ++i) {
    auto result = run_scenario(scenarios.value()[i], i);
    REQUIRE(result.ok());
    REQUIRE(result.value().outcome == RunOutcome::Completed);
    for (auto c : classify_trace(result.value().trace)) seen.insert(c);
    REQUIRE(check_invariants(result.value().trace).empty());
  }
  CHECK(seen.count(FaultClass::PreBroadcast) == 1);
  CHECK(seen.count(FaultClass::PostBroadcast) == 1);
  CHECK(seen.count(FaultClass::MultiFaultSameAttempt) == 1);
  CHECK(seen.count(FaultClass::AttemptsExhausted) == 1);
}
