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
#ifndef ORCH_CLIENT_CLIENT_HPP_
#define ORCH_CLIENT_CLIENT_HPP_

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include "orch/backend/local.hpp"
#include "orch/backend/sim.hpp"
#include "orch/client/config.hpp"
#include "orch/client/package.hpp"
#include "orch/harness/checker.hpp"
#include "orch/harness/runner.hpp"
#include "orch/harness/scenario.hpp"
#include "orch/master/master.hpp"
#include "orch/trace/trace.hpp"

namespace orch {
namespace client {

// CLI exit codes: a pure function of the terminal job state, or 2 for
// client-side errors.
constexpr int kExitSucceeded = 0;
constexpr int kExitFailed = 1;
constexpr int kExitClientError = 2;

// Renders the status stream: one line per state change, `UI:` and `LOG:`
// lines once on first availability. The format is fixed and golden-tested.
class StreamPrinter : public TraceSink {
 public:
  explicit StreamPrinter(std::ostream& out) : out_(out) {}

  void append(const TraceRecord& r) override {
    if (r.event == "job_state") {
      out_ << "t=" << r.t << " job=" << r.detail["state"].get<std::string>()
           << " attempt=" << r.attempt << "\n";
    } else if (r.event == "task_state") {
      out_ << "t=" << r.t << " task=" << r.subject << " "
           << r.detail["from"].get<std::string>() << "->" << r.detail["to"].get<std::string>()
           << "\n";
    } else if (r.event == "allocated") {
      out_ << "LOG: " << r.subject << " " << r.detail["log_link"].get<std::string>() << "\n";
    } else if (r.event == "ui_url") {
      out_ << "UI: " << r.detail["url"].get<std::string>() << "\n";
    }
    out_.flush();
  }

 private:
  std::ostream& out_;
};

inline std::optional<std::string> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

struct SubmitOptions {
  std::string backend = "local";  // "sim" or "local"
  std::vector<std::string> overrides;
  std::vector<std::string> task_params;
  std::string workdir = "orch-work";
  int slots = 16;
  std::string executor_bin;  // tests point this at the build tree
};

inline int exit_code_for(JobState state) {
  return state == JobState::Succeeded ? kExitSucceeded : kExitFailed;
}

// Dry-runs the job against the deterministic simulator: a synthetic roomy
// cluster, every child exiting 0 shortly after spawn.
inline int submit_sim(const ValidatedJobSpec& spec, std::ostream& out) {
  harness::ScenarioScript script;
  for (int i = 0; i < 4; ++i)
    script.cluster.hosts.push_back({"h" + std::to_string(i), {65536, 64, 8}});
  script.job = spec.get();
  for (const auto& g : spec->groups)
    for (int i = 0; i < g.instances; ++i)
      script.actions.push_back(
          {0, harness::ActionKind::ChildExit, TaskId{g.name, i}, 0, 0, 0, 500});

  StreamPrinter printer(out);
  auto result = harness::run_scenario(script, spec->heartbeat_miss_limit, &printer);
  if (!result) {
    log_error("client", result.error());
    return kExitClientError;
  }
  if (result.value().outcome == harness::RunOutcome::HorizonExceeded) {
    log_error("client", "simulated run exceeded the time horizon");
    return kExitFailed;
  }
  return exit_code_for(result.value().final_state);
}

inline int submit_local(const ValidatedJobSpec& spec, const SubmitOptions& opts,
                        std::ostream& out) {
  namespace fs = std::filesystem;

  local::LocalBackendConfig backend_config;
  backend_config.workdir = opts.workdir;
  backend_config.slots = opts.slots;
  backend_config.executor_bin = opts.executor_bin;

  std::error_code ec;
  fs::create_directories(opts.workdir, ec);
  if (ec) {
    log_error("client", "cannot create workdir " + opts.workdir);
    return kExitClientError;
  }

  // The packaged program, when configured, is staged once per job; executors
  // run with the staged tree as their working directory.
  if (spec->archive_path) {
    auto pkg = package(*spec->archive_path);
    if (!pkg) {
      log_error("client", pkg.error());
      return kExitClientError;
    }
    const std::string archive_file = opts.workdir + "/package.tar";
    std::ofstream archive_out(archive_file, std::ios::binary | std::ios::trunc);
    archive_out << pkg.value().archive;
    archive_out.close();
    const std::string app_dir = opts.workdir + "/app";
    auto extracted = extract_archive(pkg.value().archive, app_dir);
    if (!extracted) {
      log_error("client", extracted.error());
      return kExitClientError;
    }
    backend_config.app_dir = app_dir;
  }

  local::MasterLoop loop;
  local::MasterServer server(loop);
  auto addr = server.listen();
  if (!addr) {
    log_error("client", "cannot listen for executors");
    return kExitClientError;
  }

  local::LocalBackend backend(backend_config, loop, server);

  StreamPrinter printer(out);
  TraceCollector collector;
  TeeSink sink;
  sink.add(&collector);
  sink.add(&printer);

  const auto t0 = std::chrono::steady_clock::now();
  auto now_ms = [t0] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::steady_clock::now() - t0)
        .count();
  };

  MasterConfig master_config;
  master_config.master_addr = addr.value();
  Master master(spec, backend, sink, now_ms, master_config);
  server.set_master(&master);
  backend.set_master(&master);

  std::atomic<bool> stop_ticker{false};
  std::thread ticker([&] {
    while (!stop_ticker.load()) {
      std::this_thread::sleep_for(std::chrono::milliseconds(200));
      loop.post([&master, &now_ms] { master.tick(now_ms()); });
    }
  });

  loop.post([&master] { master.start(); });
  const auto budget = std::chrono::milliseconds(
      10 * 60 * 1000);  // watchdog against wedged runs; generous
  const bool drained = loop.run([&master] { return master.drained(); }, budget);

  stop_ticker.store(true);
  ticker.join();
  server.shutdown();
  backend.shutdown();

  if (!drained) {
    log_error("client", "job did not settle before the watchdog deadline");
    return kExitClientError;
  }
  const JobState final_state = master.job_state();
  log_info("client", std::string("job ") + to_string(final_state) + " after " +
                         std::to_string(master.attempt()) + " attempt(s)");
  return exit_code_for(final_state);
}

inline int run_submit(const std::string& conf_path, const SubmitOptions& opts,
                      std::ostream& out) {
  auto document = read_file(conf_path);
  if (!document) {
    log_error("client", "cannot read " + conf_path);
    return kExitClientError;
  }
  auto parsed = parse_config(document.value(), opts.overrides);
  if (!parsed) {
    for (const auto& e : parsed.error())
      log_error("config", e.key.empty() ? e.message : e.key + ": " + e.message);
    return kExitClientError;
  }
  JobSpec spec = parsed.value().get();
  // Model-specific hyperparameters, data paths etc. ride the command line.
  for (const auto& p : opts.task_params) spec.command.push_back(p);
  auto revalidated = validate_job_spec(std::move(spec));
  if (!revalidated) return kExitClientError;

  if (opts.backend == "sim") return submit_sim(revalidated.value(), out);
  if (opts.backend == "local") return submit_local(revalidated.value(), opts, out);
  log_error("client", "unknown backend: " + opts.backend);
  return kExitClientError;
}

inline int run_validate(const std::string& conf_path, std::ostream& out) {
  auto document = read_file(conf_path);
  if (!document) {
    log_error("client", "cannot read " + conf_path);
    return kExitClientError;
  }
  auto parsed = parse_config(document.value());
  if (!parsed) {
    for (const auto& e : parsed.error())
      out << "error: " << (e.key.empty() ? e.message : e.key + ": " + e.message) << "\n";
    return kExitClientError;
  }
  const JobSpec& spec = parsed.value().get();
  out << "ok: job " << spec.job_name << "\n";
  for (const auto& g : spec.groups)
    out << "  group " << g.name << " x" << g.instances << " mem=" << g.resources.memory_mb
        << "MiB vcores=" << g.resources.vcores << " gpus=" << g.resources.gpus
        << (g.tracked ? " tracked" : " untracked") << "\n";
  out << "  max_attempts=" << spec.max_attempts
      << " heartbeat_ms=" << spec.heartbeat_interval_ms
      << " miss_limit=" << spec.heartbeat_miss_limit << "\n";
  return kExitSucceeded;
}

// Replays a scripted scenario; the trace streams to stdout as NDJSON and is
// checked against every protocol invariant.
inline int run_simulate(const std::string& scenario_path, std::uint64_t seed, std::ostream& out) {
  auto document = read_file(scenario_path);
  if (!document) {
    log_error("client", "cannot read " + scenario_path);
    return kExitClientError;
  }
  auto script = harness::parse_scenario(document.value());
  if (!script) {
    log_error("client", script.error());
    return kExitClientError;
  }

  class NdjsonSink : public TraceSink {
   public:
    explicit NdjsonSink(std::ostream& out) : out_(out) {}
    void append(const TraceRecord& r) override { out_ << trace_record_to_line(r); }

   private:
    std::ostream& out_;
  } ndjson(out);

  auto result = harness::run_scenario(script.value(), seed, &ndjson);
  if (!result) {
    log_error("client", result.error());
    return kExitClientError;
  }
  const auto violations = harness::check_invariants(result.value().trace);
  for (const auto& v : violations)
    log_error("invariant", v.invariant + " at record " + std::to_string(v.record_index) + ": " +
                               v.detail);
  log_info("simulate", std::string("outcome=") +
                           (result.value().outcome == harness::RunOutcome::Completed
                                ? "completed"
                                : "horizon-exceeded") +
                           " state=" + to_string(result.value().final_state) +
                           " attempt=" + std::to_string(result.value().final_attempt) +
                           " violations=" + std::to_string(violations.size()));
  if (!violations.empty() || result.value().outcome != harness::RunOutcome::Completed)
    return kExitFailed;
  return kExitSucceeded;
}

}  // namespace client
}  // namespace orch

#endif  // ORCH_CLIENT_CLIENT_HPP_
