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


// Supervises one workload attempt: periodic checkpoints, eviction notices,
// termination checkpoints, and resume from the newest restorable checkpoint.

#ifndef SPOTON_COORDINATOR_HPP_
#define SPOTON_COORDINATOR_HPP_

#include <cstddef>
#include <filesystem>
#include <memory>
#include <string>

#include "spoton/checkpoint.hpp"
#include "spoton/clock.hpp"
#include "spoton/eviction.hpp"
#include "spoton/ledger.hpp"
#include "spoton/workload.hpp"

namespace spoton {

inline constexpr int kExitCompleted = 0;
inline constexpr int kExitEvicted = 64;
inline constexpr int kExitUnrecoverable = 65;
inline constexpr int kExitConfigError = 66;
inline constexpr int kExitDigestMismatch = 70;

inline constexpr double kDefaultSafetyFactor = 1.5;
inline constexpr char kDefaultEndpoint[] =
    "http://169.254.169.254/metadata/scheduledevents?api-version=2020-07-01";

struct CoordinatorConfig {
  WorkloadSpec workload;
  /// Empty means spoton-workload next to the running executable.
  std::filesystem::path workload_binary;

  CheckpointerKind checkpointer = CheckpointerKind::kToy;
  bool checkpointing_enabled = true;
  Duration checkpoint_interval{900};
  std::filesystem::path store_root = "spoton-store";
  /// Used until the first checkpoint has been timed.
  Duration snapshot_time_estimate{5};
  /// Toy checkpointer only: how long the workload is frozen per snapshot.
  Duration snapshot_cost{1};
  std::string snapshot_cmd;
  std::string restore_cmd;
  size_t retain = 2;

  bool polling_enabled = true;
  std::string metadata_endpoint = kDefaultEndpoint;
  Duration poll_interval{1};
  Duration min_notice_floor = kProtocolMinimumNotice;
  double safety_factor = kDefaultSafetyFactor;
  /// POST our pid to the mock's /admin/register on start.
  bool self_register = false;

  Clock clock;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
  std::filesystem::path resolved_workload_binary() const;
};

enum class PlanAction { kTerminationCheckpointThenStop, kStopWithoutCheckpoint, kIgnore };
std::string_view to_string(PlanAction action);

struct ActionPlan {
  PlanAction action = PlanAction::kIgnore;
  std::string reason;
};

/// Pure decision for a newly detected notice. With a checkpoint in flight the
/// plan is kIgnore: let that checkpoint finish, treat it as the terminal one,
/// then stop. Otherwise a termination checkpoint is attempted iff the
/// checkpointer can take one on demand and budget >= estimate * safety.
ActionPlan on_eviction_notice(const EvictionNotice& notice, bool inflight, Duration estimate,
                              Instant now, double safety_factor = kDefaultSafetyFactor,
                              bool on_demand_capable = true);

/// last_completed + interval, or now if that has already passed (no burst of
/// catch-up checkpoints).
Instant schedule_next_checkpoint(Instant last_completed, Duration interval, Instant now);

enum class OutcomeKind { kCompleted, kEvicted, kFailed };
std::string_view to_string(OutcomeKind kind);

struct RunOutcome {
  OutcomeKind kind = OutcomeKind::kFailed;
  std::string digest;
  std::string error;
  RunLedger ledger;

  int exit_code() const;
};

std::unique_ptr<Checkpointer> make_checkpointer(const CoordinatorConfig& config);

/// Starts from scratch (a new ledger segment).
RunOutcome run(const CoordinatorConfig& config);
/// Restores from the newest checkpoint that restores cleanly, falling back
/// to older ones and finally to scratch.
RunOutcome resume(const CoordinatorConfig& config);

}  // namespace spoton

#endif  // SPOTON_COORDINATOR_HPP_
