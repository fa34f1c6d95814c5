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

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "orch/client/client.hpp"

int main(int argc, char** argv) {
  CLI::App app{"orch: scheduler-agnostic orchestrator for gang-scheduled distributed jobs"};
  app.require_subcommand(1);

  // submit
  auto* submit = app.add_subcommand("submit", "submit a job described by an XML config");
  std::string conf;
  orch::client::SubmitOptions opts;
  submit->add_option("--conf", conf, "job configuration XML")->required();
  submit->add_option("--backend", opts.backend, "sim | local")->required();
  submit->add_option("--set", opts.overrides, "override a property, name=value");
  submit->add_option("--workdir", opts.workdir, "local backend working directory");
  submit->add_option("--slots", opts.slots, "local backend executor slots");
  submit->add_option("--executor-bin", opts.executor_bin, "path to orch-executor");
  submit->add_option("task_params", opts.task_params,
                     "arguments appended to the job command");

  // validate
  auto* validate = app.add_subcommand("validate", "parse and validate an XML config");
  std::string validate_conf;
  validate->add_option("--conf", validate_conf, "job configuration XML")->required();

  // simulate
  auto* simulate = app.add_subcommand("simulate", "replay a scripted fault scenario");
  std::string scenario;
  std::uint64_t seed = 0;
  simulate->add_option("--scenario", scenario, "scenario JSON document")->required();
  simulate->add_option("--seed", seed, "replay seed");

  CLI11_PARSE(app, argc, argv);

  if (submit->parsed()) return orch::client::run_submit(conf, opts, std::cout);
  if (validate->parsed()) return orch::client::run_validate(validate_conf, std::cout);
  if (simulate->parsed()) return orch::client::run_simulate(scenario, seed, std::cout);
  return orch::client::kExitClientError;
}
