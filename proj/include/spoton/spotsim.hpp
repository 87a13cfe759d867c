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


// Makespan and cost model for a staged job on instances that are reclaimed at
// every multiple of a fixed eviction interval.

#ifndef SPOTON_SPOTSIM_HPP_
#define SPOTON_SPOTSIM_HPP_

#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "spoton/clock.hpp"
#include "spoton/ledger.hpp"

namespace spoton {

/// Whole micro-dollars. Rounded to cents only when displayed.
struct Money {
  int64_t micros = 0;

  double dollars() const { return static_cast<double>(micros) / 1e6; }
  /// "$0.23" style, `decimals` digits after the point.
  std::string format(int decimals = 2) const;
  auto operator<=>(const Money&) const = default;
};

struct PricingModel {
  double spot_rate = 0.076;       // $/hour
  double on_demand_rate = 0.38;   // $/hour
  double storage_rate = 16.00;    // $ per 100 GiB provisioned per month
  double provisioned_storage = 0; // GiB

  /// Throws std::invalid_argument on a negative rate.
  void validate() const;
  Money monthly_storage_cost() const;
};

/// duration (hours) x rate, rounded to the nearest micro-dollar.
Money cost(Duration duration, double rate_per_hour);
/// (1 - a/b) x 100. Throws std::invalid_argument when b is zero.
double savings(Money cost_a, Money cost_b);

enum class PolicyKind { kPeriodic, kBoundaryOnly, kNone };
std::string_view to_string(PolicyKind kind);

struct CheckpointPolicy {
  PolicyKind kind = PolicyKind::kNone;
  /// Work between checkpoints (periodic only).
  Duration tau{0};

  static CheckpointPolicy periodic(Duration tau) { return {PolicyKind::kPeriodic, tau}; }
  static CheckpointPolicy boundary_only() { return {PolicyKind::kBoundaryOnly, Duration(0)}; }
  static CheckpointPolicy none() { return {}; }
};

inline constexpr Duration kNoEvictions{std::numeric_limits<double>::infinity()};

struct SimParams {
  std::vector<Duration> stage_durations;
  CheckpointPolicy policy;
  Duration checkpoint_overhead{0};  // c
  Duration restore_time{0};         // r
  Duration reprovision_delay{0};    // p
  Duration eviction_interval = kNoEvictions;  // E
  /// Defaults to 100x the eviction-free work.
  std::optional<Duration> horizon_cap;

  Duration total_work() const;
  /// Throws std::invalid_argument.
  void validate() const;
};

struct SimResult {
  Duration makespan{0};
  uint64_t evictions = 0;
  Duration lost_work{0};
  uint64_t checkpoints_taken = 0;
  Money spot_cost;
  Money on_demand_cost;
  /// Wall time per stage: from the previous stage's final completion to this
  /// one's. Sums to the makespan.
  std::vector<Duration> stage_wall;
};

/// The policy cannot finish within the horizon cap.
class NonconvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Event-driven replay. Semantics:
///  - work advances 1:1 while running; evictions strike at k*E, k >= 1;
///  - an eviction discards work since the last committed checkpoint and is
///    followed by p + r of recovery with no progress (an eviction during
///    recovery restarts it);
///  - periodic(tau) checkpoints when work since the last commit (or resume)
///    reaches tau; boundary_only at stage ends strictly inside the job and
///    past the resume point; never at completion;
///  - a checkpoint pauses work for c and commits at its end; an eviction
///    during c loses it;
///  - at equal instants completion, commit and recovery end precede the
///    eviction.
/// Throws NonconvergenceError once time passes the horizon cap.
SimResult simulate(const SimParams& params, const PricingModel& pricing);

// ---------------------------------------------------------------------------
// Tables

/// "3:03:26" (hours unpadded) or "33:50" when under an hour.
std::string format_hms(Duration d);
/// Accepts "S", "M:SS" and "H:MM:SS"; nullopt otherwise.
std::optional<Duration> parse_hms(std::string_view text);

struct ReportRow {
  std::vector<std::pair<std::string, Duration>> stages;
  Duration total{0};
  std::string eviction = "N/A";
  std::string ckpt_type = "N/A";
};

ReportRow row_from_ledger(const RunLedger& ledger, std::string eviction, std::string ckpt_type);
ReportRow row_from_sim(const SimResult& result,
                       const std::vector<std::string>& stage_names, std::string eviction,
                       std::string ckpt_type);

/// Columns: one per stage (lowercased names of the first row, or
/// k33,k55,k77,k99,k127 when empty), total, eviction, ckpt_type, spot_cost,
/// ondemand_cost. Durations in seconds, money in dollars to 6 places.
std::string report_csv(const std::vector<ReportRow>& rows, const PricingModel& pricing);
/// Aligned text table with H:MM:SS durations and cent-rounded money.
std::string report_text(const std::vector<ReportRow>& rows, const PricingModel& pricing);

/// Reads a table whose header names stage columns followed by total,
/// eviction and ckpt_type (extra trailing columns are ignored). Durations
/// may be H:MM:SS or seconds. Throws std::invalid_argument with the line.
std::vector<ReportRow> parse_table_csv(std::string_view text);

// ---------------------------------------------------------------------------
// Calibration

struct CalibrationTarget {
  SimParams params;  // overheads are overwritten during the fit
  Duration observed{0};
};

struct Calibration {
  Duration checkpoint_overhead{0};
  /// Fitted as restore time; reprovision delay stays zero.
  Duration recovery{0};
  /// Sum of squared makespan errors, s^2.
  double sse = 0;
};

/// Grid search over c in [0, c_max] and recovery in [0, r_max] minimizing
/// squared error. Grid points where any target fails to converge are skipped.
Calibration calibrate(const std::vector<CalibrationTarget>& targets, Duration c_max,
                      Duration c_step, Duration r_max, Duration r_step);

}  // namespace spoton

#endif  // SPOTON_SPOTSIM_HPP_
