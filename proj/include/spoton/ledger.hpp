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


// Append-only run ledger kept at <store_root>/ledger/events.log.
//
// One record per line:
//
//   <ISO-8601 timestamp> <kind> key=value key=value ...
//
// Values are percent-encoded so they never contain spaces or '='. Records are
// flushed as they are written, so a killed coordinator leaves every record it
// wrote behind.

#ifndef SPOTON_LEDGER_HPP_
#define SPOTON_LEDGER_HPP_

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "spoton/checkpoint.hpp"
#include "spoton/clock.hpp"

namespace spoton {

struct LedgerRecord {
  Instant time{};
  std::string kind;
  std::vector<std::pair<std::string, std::string>> fields;

  /// Value of `key`, if present.
  std::optional<std::string> get(std::string_view key) const;
};

std::string format_record(const LedgerRecord& record);
/// Throws std::invalid_argument on a malformed line.
LedgerRecord parse_record(std::string_view line);

std::string percent_encode(std::string_view text);
std::string percent_decode(std::string_view text);

std::filesystem::path ledger_path(const std::filesystem::path& store_root);

/// Thread-safe appender. Records from concurrent callers never interleave.
class LedgerWriter {
 public:
  LedgerWriter(const std::filesystem::path& store_root, Clock clock);
  ~LedgerWriter();
  LedgerWriter(const LedgerWriter&) = delete;
  LedgerWriter& operator=(const LedgerWriter&) = delete;

  void append(std::string kind, std::vector<std::pair<std::string, std::string>> fields);

 private:
  Clock clock_;
  std::mutex mu_;
  std::FILE* file_ = nullptr;
};

enum class EndReason { kCompleted, kEvicted, kFailed, kUnknown };
std::string_view to_string(EndReason reason);
EndReason parse_end_reason(std::string_view text);

struct AttemptEntry {
  uint64_t attempt_id = 0;
  Instant start{};
  /// Last record of the attempt when it ended without saying so.
  Instant end{};
  EndReason end_reason = EndReason::kUnknown;
  std::optional<uint64_t> resumed_from;
  uint64_t resume_step = 0;
  /// Highest global step reported during the attempt.
  uint64_t last_step = 0;
  std::string digest;
  /// Sequences tried before a restore succeeded (or all of them).
  std::vector<uint64_t> fallback_chain;
};

struct CheckpointEntry {
  uint64_t attempt_id = 0;
  std::optional<uint64_t> sequence;
  CheckpointKind kind = CheckpointKind::kPeriodic;
  Instant started{};
  Instant finished{};
  bool ok = false;
  uint64_t step = 0;
  std::string error;
};

struct EvictionEntry {
  uint64_t attempt_id = 0;
  std::string event_id;
  Instant notice_time{};
  Instant deadline{};
  std::string action;
  std::string reason;
  bool termination_ckpt_ok = false;
  /// Steps between the attempt's last reported progress and where the
  /// next attempt resumed; empty when no later attempt exists.
  std::optional<uint64_t> lost_steps;
};

struct RunLedger {
  std::vector<AttemptEntry> attempts;
  std::vector<CheckpointEntry> checkpoints;
  std::vector<EvictionEntry> evictions;
  /// Stage name -> wall time from its first start to its last completion,
  /// in first-start order.
  std::vector<std::pair<std::string, Duration>> stage_times;

  /// First attempt start to the completing attempt's end (or the last
  /// record if the run never completed).
  Duration makespan{0};
  bool completed() const;
  std::string final_digest() const;
};

/// Folds records into a RunLedger. Unknown kinds are ignored.
RunLedger build_ledger(const std::vector<LedgerRecord>& records);
/// Reads <store_root>/ledger/events.log; an absent file yields an empty
/// ledger. Malformed lines (e.g. a torn final line) are skipped.
RunLedger load_ledger(const std::filesystem::path& store_root);
std::vector<LedgerRecord> load_records(const std::filesystem::path& store_root);

}  // namespace spoton

#endif  // SPOTON_LEDGER_HPP_
