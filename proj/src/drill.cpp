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


#include "spoton/drill.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <thread>

#include <spdlog/spdlog.h>

#include "spoton/cloudmock.hpp"
#include "spoton/coordinator.hpp"
#include "spoton/process.hpp"

namespace spoton {
namespace fs = std::filesystem;

std::optional<Duration> EvictionPlan::lifetime_for(size_t attempt_index) const {
  if (attempt_index < lifetimes.size()) return lifetimes[attempt_index];
  if (repeat && !lifetimes.empty()) return lifetimes.back();
  return std::nullopt;
}

std::string EvictionPlan::label() const {
  if (lifetimes.empty()) return "N/A";
  if (repeat && lifetimes.size() == 1) return "Every " + format_duration(lifetimes[0]) + " s";
  std::string s = "After ";
  for (size_t i = 0; i < lifetimes.size(); ++i) {
    s += (i ? "/" : "") + format_duration(lifetimes[i]);
  }
  return s + " s";
}

EvictionPlan parse_eviction_plan(std::string_view text) {
  EvictionPlan plan;
  std::string s(text);
  while (!s.empty() && s.front() == ' ') s.erase(s.begin());
  while (!s.empty() && s.back() == ' ') s.pop_back();
  if (s.empty() || s == "none") return plan;
  if (s.rfind("every", 0) == 0) {
    plan.repeat = true;
    s = s.substr(5);
  }
  size_t pos = 0;
  while (pos <= s.size()) {
    const size_t comma = s.find(',', pos);
    const Duration d = parse_duration(s.substr(pos, comma == std::string::npos ? comma : comma - pos));
    if (!(d.count() > 0)) throw std::invalid_argument("eviction lifetimes must be > 0");
    plan.lifetimes.push_back(d);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (plan.repeat && plan.lifetimes.size() != 1) {
    throw std::invalid_argument("'every' takes a single interval");
  }
  return plan;
}

int DrillResult::exit_code() const {
  if (digest_match()) return kExitCompleted;
  if (completed) return kExitDigestMismatch;
  return kExitUnrecoverable;
}

namespace {

std::optional<uint64_t> newest_checkpoint_step(const CheckpointStore& store, const WorkloadSpec& spec) {
  const auto m = store.latest_valid();
  if (!m) return std::nullopt;
  return global_step(spec, m->progress_marker);
}

}  // namespace

DrillResult run_drill(const DrillOptions& options) {
  SpotonConfig config = options.config;
  CoordinatorConfig& cc = config.coordinator;
  const fs::path root = fs::absolute(cc.store_root);
  if (fs::exists(root) && !fs::is_empty(root)) {
    throw std::runtime_error("drill store " + root.string() + " is not empty");
  }
  fs::create_directories(root / "logs");
  cc.store_root = root;

  // A fresh anchor keeps emulated time close to real time.
  const double scale = cc.clock.scale();
  const Clock clock(scale, from_unix_seconds(to_unix_seconds(Clock().now())));
  cc.clock = clock;

  MockOptions mock_options;
  mock_options.min_notice = options.mock_min_notice;
  mock_options.clock = clock;
  MetadataMock mock(mock_options);
  mock.start();
  cc.polling_enabled = true;
  cc.metadata_endpoint = mock.endpoint_url();
  cc.self_register = false;
  validate_config(config, "drill");

  const fs::path ini = root / "drill.ini";
  {
    std::ofstream out(ini);
    out << dump_config(config);
  }
  const fs::path spoton =
      options.spoton_binary.empty() ? executable_dir() / "spoton" : options.spoton_binary;

  DrillResult result;
  const WorkloadSpec& spec = cc.workload;
  result.reference_digest = digest(spec, run_to_end(spec, initial_state(spec)));
  const CheckpointStore store(root);

  std::optional<uint64_t> best_step;
  size_t stalled = 0;
  while (true) {
    if (result.attempts >= options.max_attempts) {
      result.nonconverged = true;
      result.message = "no completion after " + std::to_string(result.attempts) + " attempts";
      break;
    }
    const size_t index = result.attempts++;
    SpawnOptions spawn;
    spawn.stdout_file = root / "logs" / ("attempt-" + std::to_string(index + 1) + ".log");
    spawn.merge_stderr = true;
    spawn.new_process_group = true;
    spawn.die_with_parent = true;
    ChildProcess child({spoton.string(), "resume", "--config", ini.string()}, spawn);
    mock.register_target(child.pid());

    const auto lifetime = options.plan.lifetime_for(index);
    const Instant launched = clock.now();
    bool triggered = false;
    std::optional<ExitStatus> status;
    while (!(status = child.try_wait())) {
      if (lifetime && !triggered && clock.now() >= launched + *lifetime) {
        triggered = true;
        try {
          mock.trigger_eviction(options.notice);
        } catch (const MockError& e) {
          spdlog::warn("drill: {}", e.what());
        }
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    mock.clear_target();

    if (status->success()) {
      result.completed = true;
      break;
    }
    if (status->code != kExitEvicted && status->signal == 0) {
      result.message = "attempt " + std::to_string(index + 1) + " failed with exit status " +
                       std::to_string(status->shell_code());
      break;
    }
    ++result.evictions;
    // The replacement instance only exists once the old one is reclaimed.
    mock.wait_until_clear(options.notice + options.mock_min_notice + Duration(60));

    const auto step = newest_checkpoint_step(store, spec);
    if (step && (!best_step || *step > *best_step)) {
      best_step = step;
      stalled = 0;
    } else if (++stalled >= options.stall_limit) {
      result.nonconverged = true;
      result.message = std::to_string(stalled) +
                       " consecutive evicted attempts without a newer checkpoint; the job cannot "
                       "outrun the eviction interval";
      break;
    }
  }
  mock.stop();

  result.ledger = load_ledger(root);
  result.digest = result.ledger.final_digest();
  result.row = row_from_ledger(result.ledger, options.plan.label(),
                               std::string(to_string(cc.checkpointer)));
  if (result.completed && !result.digest_match()) {
    result.message = "final digest " + result.digest + " differs from reference " +
                     result.reference_digest;
  }
  return result;
}

}  // namespace spoton
