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


// INI-style configuration:
//
//   # comment
//   [workload]
//   stages = K33:200,K55:200
//   step_cost = 60ms
//
// Sections: [workload], [checkpoint], [eviction], [pricing]. Unknown
// sections and keys are errors. Durations take an optional ms/s/m/h suffix.

#ifndef SPOTON_CONFIG_HPP_
#define SPOTON_CONFIG_HPP_

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "spoton/coordinator.hpp"
#include "spoton/spotsim.hpp"

namespace spoton {

struct SpotonConfig {
  CoordinatorConfig coordinator;
  PricingModel pricing;
};

/// Parse or validation failure. line/column are 1-based; 0 when the error is
/// not tied to a position (e.g. a cross-field check).
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string source, int line, int column, const std::string& message);
  const std::string& source() const { return source_; }
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  std::string source_;
  int line_;
  int column_;
};

struct ConfigKey {
  std::string section;
  std::string key;
  std::string help;
};

/// Every accepted key, in dump order.
const std::vector<ConfigKey>& config_keys();
/// Human-readable list of keys with defaults, for --help.
std::string config_reference();

/// Defaults: a five-stage toy workload of ~60 s, toy checkpointer.
SpotonConfig default_config();

/// Parses on top of the defaults and validates.
SpotonConfig parse_config(std::string_view text, const std::string& source = "<config>");
SpotonConfig load_config(const std::filesystem::path& path);

/// Sets one key; throws std::invalid_argument on an unknown key or bad value.
void set_config_value(SpotonConfig& config, std::string_view section, std::string_view key,
                      std::string_view value);
/// "section.key=value", as given to --set. Throws ConfigError.
void apply_override(SpotonConfig& config, std::string_view assignment);
/// SPOTON_ENDPOINT replaces eviction.endpoint when set.
void apply_environment(SpotonConfig& config);
/// Throws ConfigError (line 0) when the assembled config is inconsistent.
void validate_config(const SpotonConfig& config, const std::string& source);

/// Full config as INI text that parses back to the same config.
std::string dump_config(const SpotonConfig& config);

/// "15m" -> 900 s. Throws std::invalid_argument.
Duration parse_duration(std::string_view text);
std::string format_duration(Duration d);

}  // namespace spoton

#endif  // SPOTON_CONFIG_HPP_
