// Copyright 2026 The spoton Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// The deterministic staged workload, speaking the supervisor line protocol on
// stdin/stdout (see docs/protocol.md).

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <string>

#include <CLI11.hpp>

#include "spoton/checkpoint.hpp"
#include "spoton/workload.hpp"

int main(int argc, char** argv) {
  CLI::App app{"spoton-workload: deterministic staged toy workload"};
  std::string stages = "K33:200,K55:200,K77:200,K99:200,K127:200";
  uint64_t seed = 42;
  double step_cost = 0;
  double time_scale = 1;
  std::string mode = "transparent";
  std::string scratch = ".";
  std::string resume;
  bool busy = false;
  app.add_option("--stages", stages, "NAME:STEPS list")->capture_default_str();
  app.add_option("--seed", seed, "hash-chain seed")->capture_default_str();
  app.add_option("--step-cost", step_cost, "emulated seconds per step")->capture_default_str();
  app.add_option("--time-scale", time_scale, "emulated seconds per real second")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--mode", mode, "transparent: snapshot on request; application: native "
                                 "checkpoints at stage boundaries only")
      ->check(CLI::IsMember({"transparent", "application"}))
      ->capture_default_str();
  app.add_option("--scratch", scratch, "directory for state files")->capture_default_str();
  app.add_option("--resume", resume, "serialized state to start from");
  app.add_flag("--busy", busy, "spin instead of sleeping");
  CLI11_PARSE(app, argc, argv);

  try {
    spoton::WorkloadDriverOptions options;
    options.spec.stages = spoton::parse_stage_list(stages);
    options.spec.seed = seed;
    options.spec.step_cost = spoton::Duration(step_cost);
    options.spec.busy = busy;
    options.spec.validate();
    options.mode = mode == "application" ? spoton::SafePointMode::kStageBoundary
                                         : spoton::SafePointMode::kAnyStep;
    options.scratch_dir = scratch;
    options.time_scale = time_scale;
    std::filesystem::create_directories(options.scratch_dir);
    spoton::WorkloadState start = spoton::initial_state(options.spec);
    if (!resume.empty()) {
      start = spoton::deserialize(options.spec, spoton::read_file_bytes(resume));
    }
    return spoton::drive_workload(options, start, STDIN_FILENO, stdout);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "spoton-workload: %s\n", e.what());
    return 2;
  }
}
