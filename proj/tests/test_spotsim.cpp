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

#include <cmath>
#include <random>

#include "oracles/sim_bruteforce.hpp"
#include "spoton/spotsim.hpp"

namespace spoton {
namespace {

const PricingModel kPricing;

SimParams params(std::vector<double> stages, CheckpointPolicy policy, double E,
                 double c = 0, double r = 0, double p = 0) {
  SimParams s;
  for (double d : stages) s.stage_durations.push_back(Duration(d));
  s.policy = policy;
  s.eviction_interval = Duration(E);
  s.checkpoint_overhead = Duration(c);
  s.restore_time = Duration(r);
  s.reprovision_delay = Duration(p);
  return s;
}

double makespan(const SimParams& s) { return simulate(s, kPricing).makespan.count(); }

/// Makespan, or infinity on nonconvergence.
double makespan_or_inf(const SimParams& s) {
  try {
    return makespan(s);
  } catch (const NonconvergenceError&) {
    return std::numeric_limits<double>::infinity();
  }
}

TEST(Simulate, NoEvictionsNoPolicy) {
  const auto r = simulate(params({100}, CheckpointPolicy::none(), INFINITY), kPricing);
  EXPECT_EQ(r.makespan, Duration(100));
  EXPECT_EQ(r.evictions, 0u);
  EXPECT_EQ(r.checkpoints_taken, 0u);
}

TEST(Simulate, PeriodicLosesTenSeconds) {
  const auto r = simulate(params({100}, CheckpointPolicy::periodic(Duration(25)), 60), kPricing);
  EXPECT_EQ(r.makespan, Duration(110));
  EXPECT_EQ(r.evictions, 1u);
  EXPECT_EQ(r.lost_work, Duration(10));
}

TEST(Simulate, BoundaryOnlyLosesTenPerEviction) {
  const auto r =
      simulate(params({20, 20, 20, 20, 20}, CheckpointPolicy::boundary_only(), 30), kPricing);
  // Every eviction strikes 10 s past a committed boundary.
  EXPECT_EQ(r.makespan, Duration(100) + r.lost_work);
  EXPECT_EQ(r.lost_work, Duration(10) * static_cast<double>(r.evictions));
  EXPECT_EQ(r.makespan, Duration(140));
  EXPECT_EQ(r.evictions, 4u);
}

TEST(Simulate, BoundaryOnlyNeverFinishesLongStage) {
  EXPECT_THROW(simulate(params({100}, CheckpointPolicy::boundary_only(), 60), kPricing),
               NonconvergenceError);
  EXPECT_NO_THROW(simulate(params({100}, CheckpointPolicy::periodic(Duration(30)), 60), kPricing));
}

TEST(Simulate, StageWallSumsToMakespan) {
  const auto r = simulate(params({30, 50, 40}, CheckpointPolicy::periodic(Duration(20)), 45, 2, 3, 1),
                          kPricing);
  ASSERT_EQ(r.stage_wall.size(), 3u);
  double sum = 0;
  for (auto d : r.stage_wall) sum += d.count();
  EXPECT_NEAR(sum, r.makespan.count(), 1e-9);
}

TEST(Simulate, RejectsBadParams) {
  EXPECT_THROW(simulate(params({10}, CheckpointPolicy::periodic(Duration(0)), 60), kPricing),
               std::invalid_argument);
  EXPECT_THROW(simulate(params({-1}, CheckpointPolicy::none(), 60), kPricing), std::invalid_argument);
  EXPECT_THROW(simulate(params({10}, CheckpointPolicy::none(), 0), kPricing), std::invalid_argument);
}

TEST(SimulateOracle, MatchesBruteForceOnRandomInstances) {
  std::mt19937_64 rng(20261016);
  int converged = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const oracle::Case k = oracle::random_case(rng);
    const oracle::Brute want = k.replay();
    SCOPED_TRACE(k.label());
    try {
      const SimResult got = simulate(k.params(), kPricing);
      ASSERT_FALSE(want.nonconverged);
      EXPECT_EQ(got.makespan.count(), static_cast<double>(want.makespan));
      EXPECT_EQ(static_cast<long>(got.evictions), want.evictions);
      EXPECT_EQ(static_cast<long>(got.checkpoints_taken), want.checkpoints);
      ++converged;
    } catch (const NonconvergenceError&) {
      EXPECT_TRUE(want.nonconverged);
    }
  }
  // The sample must exercise the converging path, not just failures.
  EXPECT_GT(converged, 250);
}

// ---------------------------------------------------------------------------
// Properties.

struct Instance {
  std::vector<double> stages;
  CheckpointPolicy policy;
  double E, c, r, p;
};

std::vector<Instance> random_instances(uint64_t seed, int count) {
  std::mt19937_64 rng(seed);
  auto uni = [&rng](double lo, double hi) {
    return std::floor(std::uniform_real_distribution<double>(lo, hi)(rng));
  };
  std::vector<Instance> out;
  for (int i = 0; i < count; ++i) {
    Instance in;
    const int n = 1 + static_cast<int>(rng() % 4);
    for (int k = 0; k < n; ++k) in.stages.push_back(uni(5, 120));
    in.policy = rng() % 3 ? CheckpointPolicy::periodic(Duration(uni(5, 80)))
                          : CheckpointPolicy::boundary_only();
    in.E = uni(20, 200);
    in.c = uni(0, 8);
    in.r = uni(0, 8);
    in.p = uni(0, 8);
    out.push_back(in);
  }
  return out;
}

SimParams of(const Instance& in) { return params(in.stages, in.policy, in.E, in.c, in.r, in.p); }

TEST(SimulateProperty, MonotoneInOverheads) {
  for (const auto& in : random_instances(1, 300)) {
    const double base = makespan_or_inf(of(in));
    Instance more_c = in, more_r = in, more_p = in;
    more_c.c += 3;
    more_r.r += 3;
    more_p.p += 3;
    EXPECT_LE(base, makespan_or_inf(of(more_c)));
    EXPECT_LE(base, makespan_or_inf(of(more_r)));
    EXPECT_LE(base, makespan_or_inf(of(more_p)));
  }
}

TEST(SimulateProperty, NoEvictionsIsFastest) {
  for (const auto& in : random_instances(2, 300)) {
    Instance never = in;
    never.E = INFINITY;
    EXPECT_LE(makespan_or_inf(of(never)), makespan_or_inf(of(in)));
  }
}

TEST(SimulateProperty, DoublingTheIntervalNeverHurts) {
  for (const auto& in : random_instances(3, 300)) {
    Instance twice = in;
    twice.E = 2 * in.E;
    EXPECT_LE(makespan_or_inf(of(twice)), makespan_or_inf(of(in)));
  }
}

// Makespan is not monotone in E in general: a later eviction can land
// after more unsaved work has piled up.
TEST(SimulateProperty, LongerIntervalCanBeSlower) {
  const auto p = CheckpointPolicy::periodic(Duration(50));
  EXPECT_EQ(makespan(params({100}, p, 51)), 101);
  EXPECT_EQ(makespan(params({100}, p, 60)), 110);
}

TEST(SimulateProperty, PeriodicDominatesWhenTauDividesStages) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 300; ++i) {
    const double tau = 5.0 * static_cast<double>(1 + rng() % 6);
    std::vector<double> stages;
    const int n = 1 + static_cast<int>(rng() % 4);
    for (int k = 0; k < n; ++k) stages.push_back(tau * static_cast<double>(1 + rng() % 5));
    const double E = static_cast<double>(20 + rng() % 180);
    const double r = static_cast<double>(rng() % 8), p = static_cast<double>(rng() % 8);
    const double periodic =
        makespan_or_inf(params(stages, CheckpointPolicy::periodic(Duration(tau)), E, 0, r, p));
    const double boundary =
        makespan_or_inf(params(stages, CheckpointPolicy::boundary_only(), E, 0, r, p));
    EXPECT_LE(periodic, boundary);
  }
}

TEST(Cost, Examples) {
  EXPECT_NEAR(cost(*parse_hms("3:03:26"), 0.38).dollars(), 1.162, 0.0005);
  EXPECT_NEAR(cost(*parse_hms("3:36:14"), 0.076).dollars(), 0.274, 0.0005);
  EXPECT_EQ(cost(Duration(0), 0.38).micros, 0);
  EXPECT_EQ(cost(Duration(3600), 0.076).micros, 76000);
}

TEST(Cost, LinearWithinRounding) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 1000; ++i) {
    const double a = static_cast<double>(rng() % 100000), b = static_cast<double>(rng() % 100000);
    const double rate = static_cast<double>(1 + rng() % 500) / 100.0;
    const int64_t whole = cost(Duration(a + b), rate).micros;
    const int64_t parts = cost(Duration(a), rate).micros + cost(Duration(b), rate).micros;
    EXPECT_LE(std::llabs(whole - parts), 1);
  }
}

TEST(Savings, Examples) {
  EXPECT_NEAR(savings(Money{274000}, Money{1162000}), 76.4, 0.05);
  EXPECT_EQ(savings(Money{5000}, Money{5000}), 0.0);
  EXPECT_NEAR(savings(Money{227000}, Money{1700000}), 86.6, 0.05);
  EXPECT_THROW(savings(Money{1}, Money{0}), std::invalid_argument);
}

TEST(Money, Format) {
  EXPECT_EQ(Money{232350}.format(), "$0.23");
  EXPECT_EQ(Money{1161740}.format(3), "$1.162");
}

TEST(Hms, RoundTrip) {
  EXPECT_EQ(format_hms(Duration(11006)), "3:03:26");
  EXPECT_EQ(format_hms(Duration(2030)), "33:50");
  EXPECT_EQ(parse_hms("33:50"), Duration(2030));
  EXPECT_EQ(parse_hms("3:03:26"), Duration(11006));
  EXPECT_EQ(parse_hms("45"), Duration(45));
  EXPECT_FALSE(parse_hms("3:75"));
  EXPECT_FALSE(parse_hms("x"));
  for (int s = 0; s < 20000; s += 37) EXPECT_EQ(parse_hms(format_hms(Duration(s))), Duration(s));
}

TEST(Report, EmptyInputIsHeaderOnly) {
  const std::string csv = report_csv({}, kPricing);
  EXPECT_EQ(csv, "k33,k55,k77,k99,k127,total,eviction,ckpt_type,spot_cost,ondemand_cost\n");
}

TEST(Report, CsvRoundTripsThroughTableParser) {
  const auto r = simulate(params({100, 200}, CheckpointPolicy::none(), INFINITY), kPricing);
  const ReportRow row = row_from_sim(r, {"A", "B"}, "N/A", "N/A");
  const std::string csv = report_csv({row}, kPricing);
  EXPECT_NE(csv.find("a,b,total,eviction,ckpt_type"), std::string::npos);
  const auto back = parse_table_csv(csv);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].total, Duration(300));
  EXPECT_EQ(back[0].stages.size(), 2u);
  EXPECT_NE(report_text({row}, kPricing).find("5:00"), std::string::npos);
}

TEST(Report, TableParserErrors) {
  EXPECT_THROW(parse_table_csv("a,b\n1,2\n"), std::invalid_argument);
  EXPECT_THROW(parse_table_csv("a,total,eviction,ckpt_type\n1:00,bad,N/A,N/A\n"),
               std::invalid_argument);
}

TEST(Calibrate, RecoversKnownOverheads) {
  std::vector<CalibrationTarget> targets;
  for (double E : {200.0, 300.0}) {
    for (auto policy : {CheckpointPolicy::boundary_only(), CheckpointPolicy::periodic(Duration(50))}) {
      SimParams s = params({120, 150, 90}, policy, E, 10, 20);
      targets.push_back({s, simulate(s, kPricing).makespan});
    }
  }
  const Calibration fit = calibrate(targets, Duration(30), Duration(5), Duration(40), Duration(5));
  EXPECT_EQ(fit.checkpoint_overhead, Duration(10));
  EXPECT_EQ(fit.recovery, Duration(20));
  EXPECT_EQ(fit.sse, 0.0);
}

}  // namespace
}  // namespace spoton
