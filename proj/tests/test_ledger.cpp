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


#include <gtest/gtest.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "spoton/ledger.hpp"

namespace spoton {
namespace {

namespace fs = std::filesystem;

LedgerRecord rec(double t, std::string kind, std::vector<std::pair<std::string, std::string>> f) {
  return {from_unix_seconds(1760000000 + t), std::move(kind), std::move(f)};
}

TEST(LedgerFormat, RecordRoundTrip) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    LedgerRecord r;
    r.time = from_unix_seconds(1760000000.0 + static_cast<double>(rng() % 100000) / 1000.0);
    r.kind = "checkpoint";
    std::string weird;
    for (int k = 0; k < 12; ++k) weird.push_back(static_cast<char>(32 + rng() % 95));
    r.fields = {{"attempt", "3"}, {"error", weird}, {"empty", ""}};
    const LedgerRecord back = parse_record(format_record(r));
    EXPECT_NEAR(to_unix_seconds(back.time), to_unix_seconds(r.time), 1e-6);
    EXPECT_EQ(back.kind, r.kind);
    EXPECT_EQ(back.fields, r.fields);
  }
}

TEST(LedgerFormat, PercentCoding) {
  EXPECT_EQ(percent_encode("a b=c%"), "a%20b%3Dc%25");
  EXPECT_EQ(percent_decode("a%20b%3Dc%25"), "a b=c%");
  EXPECT_THROW(percent_decode("bad%2"), std::invalid_argument);
  EXPECT_THROW(parse_record("not-a-time kind"), std::invalid_argument);
  EXPECT_THROW(parse_record("2026-10-16T00:00:00.000Z kind novalue"), std::invalid_argument);
}

TEST(LedgerBuild, TwoAttemptsWithEviction) {
  const std::vector<LedgerRecord> records = {
      rec(0, "attempt_start", {{"attempt", "1"}, {"mode", "run"}, {"resume_seq", "none"}, {"resume_step", "0"}}),
      rec(0, "stage_begin", {{"attempt", "1"}, {"stage", "K33"}}),
      rec(5, "checkpoint", {{"attempt", "1"}, {"seq", "1"}, {"kind", "periodic"}, {"ok", "true"},
                            {"started", "2026-10-09T09:33:24.000Z"}, {"step", "40"}}),
      rec(9, "progress", {{"attempt", "1"}, {"step", "70"}}),
      rec(9, "eviction", {{"attempt", "1"}, {"event", "ev1"}, {"action", "termination_checkpoint_then_stop"}}),
      rec(10, "checkpoint", {{"attempt", "1"}, {"seq", "2"}, {"kind", "termination"}, {"ok", "true"}, {"step", "75"}}),
      rec(10, "eviction_result", {{"attempt", "1"}, {"termination_ckpt_ok", "true"}}),
      rec(10, "attempt_end", {{"attempt", "1"}, {"reason", "evicted"}, {"step", "76"}}),
      rec(20, "attempt_start", {{"attempt", "2"}, {"mode", "resume"}, {"resume_seq", "2"}, {"resume_step", "75"}}),
      rec(22, "stage_end", {{"attempt", "2"}, {"stage", "K33"}, {"step", "100"}}),
      rec(30, "attempt_end", {{"attempt", "2"}, {"reason", "completed"}, {"step", "100"}, {"digest", "abc"}}),
  };
  const RunLedger l = build_ledger(records);
  ASSERT_EQ(l.attempts.size(), 2u);
  EXPECT_EQ(l.attempts[0].end_reason, EndReason::kEvicted);
  EXPECT_EQ(l.attempts[0].last_step, 76u);
  EXPECT_EQ(l.attempts[1].resumed_from, 2u);
  EXPECT_EQ(l.attempts[1].resume_step, 75u);
  ASSERT_EQ(l.evictions.size(), 1u);
  EXPECT_TRUE(l.evictions[0].termination_ckpt_ok);
  EXPECT_EQ(l.evictions[0].lost_steps, 1u);
  ASSERT_EQ(l.checkpoints.size(), 2u);
  EXPECT_EQ(l.checkpoints[1].kind, CheckpointKind::kTermination);
  EXPECT_TRUE(l.completed());
  EXPECT_EQ(l.final_digest(), "abc");
  EXPECT_EQ(l.makespan, Duration(30));
  ASSERT_EQ(l.stage_times.size(), 1u);
  EXPECT_EQ(l.stage_times[0].second, Duration(22));
}

TEST(LedgerBuild, NewRunStartsNewSegment) {
  const std::vector<LedgerRecord> records = {
      rec(0, "attempt_start", {{"attempt", "1"}, {"mode", "run"}, {"resume_step", "0"}}),
      rec(5, "attempt_end", {{"attempt", "1"}, {"reason", "failed"}}),
      rec(100, "attempt_start", {{"attempt", "1"}, {"mode", "run"}, {"resume_step", "0"}}),
      rec(110, "attempt_end", {{"attempt", "1"}, {"reason", "completed"}, {"digest", "d"}}),
  };
  const RunLedger l = build_ledger(records);
  ASSERT_EQ(l.attempts.size(), 1u);
  EXPECT_EQ(l.makespan, Duration(10));
}

TEST(LedgerBuild, AttemptKilledWithoutEnd) {
  const std::vector<LedgerRecord> records = {
      rec(0, "attempt_start", {{"attempt", "1"}, {"mode", "run"}, {"resume_step", "0"}}),
      rec(4, "progress", {{"attempt", "1"}, {"step", "9"}}),
  };
  const RunLedger l = build_ledger(records);
  ASSERT_EQ(l.attempts.size(), 1u);
  EXPECT_EQ(l.attempts[0].end_reason, EndReason::kUnknown);
  EXPECT_EQ(l.attempts[0].end, records[1].time);
  EXPECT_FALSE(l.completed());
}

TEST(LedgerWriter, AppendsAndSkipsTornLine) {
  const fs::path root = fs::temp_directory_path() / ("spoton-ledger-" + std::to_string(::getpid()));
  fs::remove_all(root);
  {
    LedgerWriter w(root, Clock());
    w.append("attempt_start", {{"attempt", "1"}, {"mode", "run"}, {"resume_step", "0"}});
    w.append("attempt_end", {{"attempt", "1"}, {"reason", "completed"}, {"digest", "ff"}});
  }
  std::ofstream(ledger_path(root), std::ios::app) << "2026-10-16T00:00:0";
  EXPECT_EQ(load_records(root).size(), 2u);
  EXPECT_EQ(load_ledger(root).final_digest(), "ff");
  fs::remove_all(root);
  EXPECT_TRUE(load_ledger(root).attempts.empty());
}

}  // namespace
}  // namespace spoton
