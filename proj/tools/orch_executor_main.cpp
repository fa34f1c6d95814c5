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

#include <unistd.h>

#include "orch/executor/executor.hpp"

// Per-task supervisor. The backend launches one of these per container with
// the bootstrap contract in the environment.
int main() {
  ::setpgid(0, 0);  // backends kill the whole container group
  auto boot = orch::exec::bootstrap_from_env();
  if (!boot) {
    orch::log_error("executor", boot.error());
    return orch::exec::kExitProtocolFailure;
  }
  return orch::exec::run(std::move(boot.value()));
}
