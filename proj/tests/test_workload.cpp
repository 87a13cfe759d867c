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

#include <random>

#include "spoton/hash.hpp"
#include "spoton/workload.hpp"

namespace spoton {
namespace {

WorkloadSpec spec_of(std::initializer_list<uint32_t> steps, uint64_t seed) {
  WorkloadSpec s;
  s.seed = seed;
  int i = 0;
  for (uint32_t n : steps) s.stages.push_back({"s" + std::to_string(i++), n});
  return s;
}

std::string final_digest(const WorkloadSpec& s) { return digest(s, run_to_end(s, initial_state(s))); }

// Digests below come from tests/oracles/workload_digest.py, an independent
// straight-line implementation of the same chain.
TEST(WorkloadDigest, MatchesOracle) {
  EXPECT_EQ(final_digest(spec_of({1000, 1000, 1000, 1000, 1000}, 42)), "2b3b5a8d6a13d904");
  EXPECT_EQ(final_digest(spec_of({}, 42)), "bdd732262feb6e95");
  EXPECT_EQ(final_digest(spec_of({3, 0, 5}, 7)), "36e7b78354a00e17");
  EXPECT_EQ(final_digest(spec_of({200, 200, 200, 200, 200}, 42)), "412faaee0379a634");
  EXPECT_EQ(final_digest(spec_of({50, 50}, 42)), "beccf5e21d09663d");
  EXPECT_EQ(final_digest(spec_of({300, 300, 300, 300, 300}, 42)), "12e28424305a9fc6");
}

TEST(WorkloadDigest, EmptySpecIsInitialAccumulator) {
  const WorkloadSpec s = spec_of({}, 42);
  const WorkloadState st = initial_state(s);
  EXPECT_TRUE(at_end(s, st));
  EXPECT_EQ(st.accumulator, initial_accumulator(42));
  EXPECT_EQ(digest(s, st), to_hex64(initial_accumulator(42)));
}

TEST(WorkloadDigest, StageNamesDoNotMatter) {
  WorkloadSpec a = WorkloadSpec::assembly_like(50);
  WorkloadSpec b = a;
  for (auto& st : b.stages) st.name = "renamed-" + st.name;
  EXPECT_EQ(final_digest(a), final_digest(b));
  EXPECT_EQ(a.fingerprint(), b.fingerprint());
}

TEST(WorkloadStep, ThrowsAtEnd) {
  const WorkloadSpec s = spec_of({2}, 1);
  const WorkloadState end = run_to_end(s, initial_state(s));
  EXPECT_THROW(step(s, end), std::logic_error);
}

TEST(WorkloadStep, StageBoundaries) {
  const WorkloadSpec s = spec_of({1000}, 3);
  WorkloadState st = initial_state(s);
  EXPECT_TRUE(at_stage_boundary(s, st));
  for (int i = 0; i < 500; ++i) st = step(s, st);
  EXPECT_FALSE(at_stage_boundary(s, st));
  st = run_to_end(s, st);
  EXPECT_TRUE(at_stage_boundary(s, st));
}

TEST(WorkloadStep, SplitRunEqualsStraightRun) {
  // Resuming from any intermediate state reaches the same digest.
  const WorkloadSpec s = spec_of({7, 0, 13, 5}, 99);
  const std::string want = final_digest(s);
  WorkloadState st = initial_state(s);
  while (!at_end(s, st)) {
    const auto bytes = serialize(s, st);
    EXPECT_EQ(digest(s, run_to_end(s, deserialize(s, bytes))), want);
    st = step(s, st);
  }
}

TEST(WorkloadStep, GlobalStepInvertsMarker) {
  const WorkloadSpec s = spec_of({4, 0, 3}, 5);
  WorkloadState st = initial_state(s);
  for (uint64_t n = 0;; ++n) {
    EXPECT_EQ(global_step(s, st), n);
    EXPECT_EQ(global_step(s, marker_of(s, st)), n);
    if (at_end(s, st)) break;
    st = step(s, st);
  }
}

TEST(WorkloadSerialize, RoundTripRandomPositions) {
  std::mt19937_64 rng(2026);
  for (int trial = 0; trial < 200; ++trial) {
    WorkloadSpec s;
    s.seed = rng();
    const int n = 1 + static_cast<int>(rng() % 5);
    for (int i = 0; i < n; ++i) s.stages.push_back({"st" + std::to_string(i), uint32_t(rng() % 40)});
    WorkloadState st = initial_state(s);
    const uint64_t advance = rng() % (s.total_steps() + 1);
    for (uint64_t i = 0; i < advance; ++i) st = step(s, st);
    const auto bytes = serialize(s, st);
    ASSERT_EQ(bytes.size(), kStatePayloadSize);
    EXPECT_EQ(deserialize(s, bytes), st);
  }
}

TEST(WorkloadSerialize, RejectsDamage) {
  const WorkloadSpec s = spec_of({10, 10}, 42);
  WorkloadState st = initial_state(s);
  for (int i = 0; i < 13; ++i) st = step(s, st);
  const auto good = serialize(s, st);

  auto truncated = good;
  truncated.pop_back();
  EXPECT_THROW(deserialize(s, truncated), PayloadError);

  auto bad_magic = good;
  bad_magic[0] = std::byte{'X'};
  EXPECT_THROW(deserialize(s, bad_magic), PayloadError);

  auto bad_version = good;
  bad_version[4] = std::byte{9};
  EXPECT_THROW(deserialize(s, bad_version), PayloadError);

  for (size_t i = 0; i < good.size(); ++i) {
    auto flipped = good;
    flipped[i] ^= std::byte{0x01};
    EXPECT_THROW(deserialize(s, flipped), PayloadError) << "byte " << i;
  }
}

TEST(WorkloadSerialize, RejectsOtherSpec) {
  const WorkloadSpec a = spec_of({10, 10}, 42);
  const auto bytes = serialize(a, initial_state(a));
  EXPECT_THROW(deserialize(spec_of({10, 10, 10}, 42), bytes), PayloadError);
  EXPECT_THROW(deserialize(spec_of({10, 10}, 43), bytes), PayloadError);
}

TEST(WorkloadSpecText, StageListRoundTrip) {
  const auto stages = parse_stage_list("K33:200, K55:0,K77:7");
  ASSERT_EQ(stages.size(), 3u);
  EXPECT_EQ(stages[1], (StageSpec{"K55", 0}));
  EXPECT_EQ(parse_stage_list(format_stage_list(stages)), stages);
  EXPECT_THROW(parse_stage_list("K33"), std::invalid_argument);
  EXPECT_THROW(parse_stage_list("K33:x"), std::invalid_argument);
  WorkloadSpec dup;
  dup.stages = parse_stage_list("a:1,a:2");
  EXPECT_THROW(dup.validate(), std::invalid_argument);
}

}  // namespace
}  // namespace spoton
