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


// Eviction drill: stands in for the cloud's instance auto-replacement by
// relaunching `spoton resume` after every eviction until the job completes,
// while an in-process metadata mock evicts each attempt on a plan.

#ifndef SPOTON_DRILL_HPP_
#define SPOTON_DRILL_HPP_

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "spoton/config.hpp"
#include "spoton/ledger.hpp"
#include "spoton/spotsim.hpp"

namespace spoton {

/// How long each attempt (instance) lives before its eviction is announced.
struct EvictionPlan {
  /// Attempt i is evicted lifetimes[i] after launch; later attempts are not.
  std::vector<Duration> lifetimes;
  /// With repeat set, the last lifetime applies to every later attempt.
  bool repeat = false;

  std::optional<Duration> lifetime_for(size_t attempt_index) const;
  std::string label() const;
};

/// "" or "none" -> no evictions; "every 60" -> repeat 60 s; "12,30,25" ->
/// those lifetimes. Numbers accept duration suffixes. Throws
/// std::invalid_argument.
EvictionPlan parse_eviction_plan(std::string_view text);

struct DrillOptions {
  /// Base configuration. store_root must be empty or absent; endpoint,
  /// polling, clock anchor and self-registration are overridden.
  SpotonConfig config;
  EvictionPlan plan;
  /// NotBefore delay requested per eviction (the mock clamps it).
  Duration notice{30};
  Duration mock_min_notice = kProtocolMinimumNotice;
  /// Empty means `spoton` next to the running executable.
  std::filesystem::path spoton_binary;
  size_t max_attempts = 200;
  /// Consecutive attempts that fail to advance the newest checkpoint before
  /// the drill is declared nonconvergent.
  size_t stall_limit = 5;
};

struct DrillResult {
  bool completed = false;
  bool nonconverged = false;
  std::string digest;
  std::string reference_digest;
  size_t attempts = 0;
  size_t evictions = 0;
  std::string message;
  RunLedger ledger;
  ReportRow row;

  bool digest_match() const { return completed && digest == reference_digest; }
  /// 0 match, 70 digest mismatch, 65 nonconvergence or failure.
  int exit_code() const;
};

/// Throws std::runtime_error when the drill cannot be set up.
DrillResult run_drill(const DrillOptions& options);

}  // namespace spoton

#endif  // SPOTON_DRILL_HPP_
