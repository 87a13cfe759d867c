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

#include <cstdlib>

#include "spoton/config.hpp"

namespace spoton {
namespace {

TEST(Config, DefaultsAreValid) {
  const SpotonConfig c = default_config();
  EXPECT_NO_THROW(validate_config(c, "defaults"));
  EXPECT_EQ(c.coordinator.workload.stages.size(), 5u);
  EXPECT_EQ(c.pricing.spot_rate, 0.076);
}

TEST(Config, ParsesSectionsAndDurations) {
  const SpotonConfig c = parse_config(R"(# drill settings
[workload]
stages = a:10, b:20
step_cost = 60ms
seed = 7

[checkpoint]
kind = application
interval = 15m

[eviction]
endpoint = http://127.0.0.1:9000/metadata/scheduledevents
poll_interval = 0.5

[pricing]
spot_rate = 0.1
)");
  EXPECT_EQ(c.coordinator.workload.stages.size(), 2u);
  EXPECT_DOUBLE_EQ(c.coordinator.workload.step_cost.count(), 0.06);
  EXPECT_EQ(c.coordinator.workload.seed, 7u);
  EXPECT_EQ(c.coordinator.checkpointer, CheckpointerKind::kApplication);
  EXPECT_EQ(c.coordinator.checkpoint_interval, Duration(900));
  EXPECT_EQ(c.coordinator.poll_interval, Duration(0.5));
  EXPECT_EQ(c.pricing.spot_rate, 0.1);
}

TEST(Config, ErrorsCarryPositions) {
  auto error_of = [](std::string_view text) -> ConfigError {
    try {
      parse_config(text, "t.ini");
    } catch (const ConfigError& e) {
      return e;
    }
    ADD_FAILURE() << "no error for: " << text;
    return ConfigError("", 0, 0, "");
  };
  const auto unknown = error_of("[workload]\nstages = a:1\nbogus = 3\n");
  EXPECT_EQ(unknown.line(), 3);
  EXPECT_NE(std::string(unknown.what()).find("t.ini:3:"), std::string::npos);
  EXPECT_EQ(error_of("[nowhere]\n").line(), 1);
  EXPECT_EQ(error_of("[workload]\nseed = 1\nseed = 2\n").line(), 3);
  const auto bad_value = error_of("[checkpoint]\ninterval = soon\n");
  EXPECT_EQ(bad_value.line(), 2);
  EXPECT_EQ(bad_value.column(), 12);
  EXPECT_EQ(error_of("[checkpoint]\njust words\n").line(), 2);
  EXPECT_EQ(error_of("stages = a:1\n").line(), 1);
}

TEST(Config, CrossFieldValidation) {
  SpotonConfig c = default_config();
  apply_override(c, "eviction.time_scale=10");
  EXPECT_THROW(validate_config(c, "x"), ConfigError);
  apply_override(c, "eviction.clock_anchor=1760000000");
  EXPECT_NO_THROW(validate_config(c, "x"));
  apply_override(c, "checkpoint.interval=0");
  EXPECT_THROW(validate_config(c, "x"), ConfigError);
}

TEST(Config, OverridesAndEnvironment) {
  SpotonConfig c = default_config();
  apply_override(c, "checkpoint.retain=4");
  EXPECT_EQ(c.coordinator.retain, 4u);
  EXPECT_THROW(apply_override(c, "checkpoint.retain"), ConfigError);
  EXPECT_THROW(apply_override(c, "nosuch.key=1"), ConfigError);
  ::setenv("SPOTON_ENDPOINT", "http://127.0.0.1:1234/metadata/scheduledevents", 1);
  apply_environment(c);
  ::unsetenv("SPOTON_ENDPOINT");
  EXPECT_EQ(c.coordinator.metadata_endpoint, "http://127.0.0.1:1234/metadata/scheduledevents");
}

TEST(Config, DumpRoundTrips) {
  SpotonConfig c = default_config();
  apply_override(c, "workload.stages=x:3,y:4");
  apply_override(c, "checkpoint.kind=transparent");
  apply_override(c, "checkpoint.snapshot_cmd=dump --pid {pid} --dir \"{dir}\"");
  apply_override(c, "checkpoint.restore_cmd= restore {dir}");
  apply_override(c, "eviction.time_scale=12.5");
  apply_override(c, "eviction.clock_anchor=1760000000.123");
  apply_override(c, "pricing.provisioned_storage=128");
  const std::string text = dump_config(c);
  const SpotonConfig back = parse_config(text, "dump");
  EXPECT_EQ(dump_config(back), text);
  EXPECT_EQ(back.coordinator.snapshot_cmd, c.coordinator.snapshot_cmd);
  EXPECT_EQ(back.coordinator.restore_cmd, c.coordinator.restore_cmd);
  EXPECT_EQ(back.coordinator.clock.anchor(), c.coordinator.clock.anchor());
  EXPECT_EQ(back.coordinator.workload, c.coordinator.workload);
}

TEST(Config, ReferenceListsEveryKey) {
  const std::string ref = config_reference();
  for (const auto& k : config_keys()) {
    EXPECT_NE(ref.find(k.key), std::string::npos) << k.section << "." << k.key;
  }
}

TEST(Duration, ParseAndFormat) {
  EXPECT_EQ(parse_duration("15m"), Duration(900));
  EXPECT_EQ(parse_duration("2h"), Duration(7200));
  EXPECT_EQ(parse_duration("250ms"), Duration(0.25));
  EXPECT_EQ(parse_duration("7"), Duration(7));
  EXPECT_EQ(parse_duration("1.5s"), Duration(1.5));
  EXPECT_THROW(parse_duration("-3"), std::invalid_argument);
  EXPECT_THROW(parse_duration("m"), std::invalid_argument);
  EXPECT_EQ(format_duration(Duration(900)), "900");
  EXPECT_EQ(format_duration(Duration(0.06)), "0.06");
}

}  // namespace
}  // namespace spoton
