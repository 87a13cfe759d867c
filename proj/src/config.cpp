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

#include "spoton/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace spoton {
namespace {

std::string trim(std::string_view s) {
  size_t a = 0, b = s.size();
  while (a < b && (s[a] == ' ' || s[a] == '\t')) ++a;
  while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t' || s[b - 1] == '\r')) --b;
  return std::string(s.substr(a, b - a));
}

std::string unquote(std::string s) {
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return s.substr(1, s.size() - 2);
  return s;
}

std::string number_text(double v) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

double parse_number(std::string_view text) {
  const std::string s(text);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v)) {
    throw std::invalid_argument("expected a number, got '" + s + "'");
  }
  return v;
}

uint64_t parse_u64(std::string_view text) {
  uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size()) {
    throw std::invalid_argument("expected a non-negative integer, got '" + std::string(text) + "'");
  }
  return v;
}

bool parse_bool(std::string_view text) {
  if (text == "true" || text == "yes" || text == "on" || text == "1") return true;
  if (text == "false" || text == "no" || text == "off" || text == "0") return false;
  throw std::invalid_argument("expected true or false, got '" + std::string(text) + "'");
}

std::string bool_text(bool b) { return b ? "true" : "false"; }

struct KeyHandler {
  ConfigKey doc;
  std::function<void(SpotonConfig&, std::string_view)> set;
  std::function<std::string(const SpotonConfig&)> get;
};

const std::vector<KeyHandler>& handlers() {
  static const std::vector<KeyHandler> table = [] {
    std::vector<KeyHandler> t;
    auto add = [&t](const char* section, const char* key, const char* help,
                    std::function<void(SpotonConfig&, std::string_view)> set,
                    std::function<std::string(const SpotonConfig&)> get) {
      t.push_back({{section, key, help}, std::move(set), std::move(get)});
    };
    // [workload]
    add("workload", "command", "workload binary; empty = spoton-workload beside spoton",
        [](SpotonConfig& c, std::string_view v) { c.coordinator.workload_binary = std::string(v); },
        [](const SpotonConfig& c) { return c.coordinator.workload_binary.string(); });
    add("workload", "stages", "comma-separated NAME:STEPS list",
        [](SpotonConfig& c, std::string_view v) { c.coordinator.workload.stages = parse_stage_list(v); },
        [](const SpotonConfig& c) { return format_stage_list(c.coordinator.workload.stages); });
    add("workload", "seed", "64-bit seed of the hash chain",
        [](SpotonConfig& c, std::string_view v) { c.coordinator.workload.seed = parse_u64(v); },
        [](const SpotonConfig& c) { return std::to_string(c.coordinator.workload.seed); });
    add("workload", "step_cost", "emulated time per step",
        [](SpotonConfig& c, std::string_view v) { c.coordinator.workload.step_cost = parse_duration(v); },
        [](const SpotonConfig& c) { return format_duration(c.coordinator.workload.step_cost); });
    add("workload", "busy", "spin instead of sleeping through each step",
        [](SpotonConfig& c, std::string_view v) { c.coordinator.workload.busy = parse_bool(v); },
        [](const SpotonConfig& c) { return bool_text(c.coordinator.workload.busy); });
    // [checkpoint]
    add("checkpoint", "kind", "application | transparent | toy",
        [](SpotonConfig& c, std::string_view v) {
          const auto k = parse_checkpointer_kind(v);
          if (!k) throw std::invalid_argument("expected application, transparent or toy");
          c.coordinator.checkpointer = *k;
        },
        [](const SpotonConfig& c) { return std::string(to_string(c.coordinator.checkpointer)); });
    add("checkpoint", "enabled", "take checkpoints at all",
        [](SpotonConfig& c, std::string_view v) { c.coordinator.checkpointing_enabled = parse_bool(v); },
        [](const SpotonConfig& c) { return bool_text(c.coordinator.checkpointing_enabled); });
    add("checkpoint", "interval", "periodic checkpoint interval (unused by application kind)",
        [](SpotonConfig& c, std::string_view v) { c.coordinator.checkpoint_interval = parse_duration(v); },
        [](const SpotonConfig& c) { return format_duration(c.coordinator.checkpoint_interval); });
    add("checkpoint", "store_root", "shared checkpoint store directory",
        [](SpotonConfig& c, std::string_view v) { c.coordinator.store_root = std::string(v); },
        [](const SpotonConfig& c) { return c.coordinator.store_root.string(); });
    add("checkpoint", "snapshot_time_estimate", "checkpoint duration assumed before one is measured",
        [](SpotonConfig& c, std::string_view v) { c.coordinator.snapshot_time_estimate = parse_duration(v); },
        [](const SpotonConfig& c) { return format_duration(c.coordinator.snapshot_time_estimate); });
    add("checkpoint", "snapshot_cost", "toy kind: time the workload is frozen per snapshot",
        [](SpotonConfig& c, std::string_view v) { c.coordinator.snapshot_cost = parse_duration(v); },
        [](const SpotonConfig& c) { return format_duration(c.coordinator.snapshot_cost); });
    add("checkpoint", "snapshot_cmd", "transparent kind: shell command, {pid} and {dir} substituted",
        [](SpotonConfig& c, std::string_view v) { c.coordinator.snapshot_cmd = std::string(v); },
        [](const SpotonConfig& c) { return c.coordinator.snapshot_cmd; });
    add("checkpoint", "restore_cmd", "transparent kind: must leave workload.state in {dir}",
        [](SpotonConfig& c, std::string_view v) { c.coordinator.restore_cmd = std::string(v); },
        [](const SpotonConfig& c) { return c.coordinator.restore_cmd; });
    add("checkpoint", "retain", "valid checkpoints kept in the store",
        [](SpotonConfig& c, std::string_view v) { c.coordinator.retain = parse_u64(v); },
        [](const SpotonConfig& c) { return std::to_string(c.coordinator.retain); });
    // [eviction]
    add("eviction", "polling", "poll the scheduled-events endpoint",
        [](SpotonConfig& c, std::string_view v) { c.coordinator.polling_enabled = parse_bool(v); },
        [](const SpotonConfig& c) { return bool_text(c.coordinator.polling_enabled); });
    add("eviction", "endpoint", "scheduled-events URL (SPOTON_ENDPOINT overrides)",
        [](SpotonConfig& c, std::string_view v) {
          parse_endpoint(v);
          c.coordinator.metadata_endpoint = std::string(v);
        },
        [](const SpotonConfig& c) { return c.coordinator.metadata_endpoint; });
    add("eviction", "poll_interval", "time between polls",
        [](SpotonConfig& c, std::string_view v) { c.coordinator.poll_interval = parse_duration(v); },
        [](const SpotonConfig& c) { return format_duration(c.coordinator.poll_interval); });
    add("eviction", "min_notice_floor", "notices shorter than this are logged as anomalies",
        [](SpotonConfig& c, std::string_view v) { c.coordinator.min_notice_floor = parse_duration(v); },
        [](const SpotonConfig& c) { return format_duration(c.coordinator.min_notice_floor); });
    add("eviction", "safety_factor", "termination checkpoint needs budget >= estimate x this",
        [](SpotonConfig& c, std::string_view v) { c.coordinator.safety_factor = parse_number(v); },
        [](const SpotonConfig& c) { return number_text(c.coordinator.safety_factor); });
    add("eviction", "time_scale", "emulated seconds per real second",
        [](SpotonConfig& c, std::string_view v) {
          c.coordinator.clock = Clock(parse_number(v), c.coordinator.clock.anchor());
        },
        [](const SpotonConfig& c) { return number_text(c.coordinator.clock.scale()); });
    add("eviction", "clock_anchor", "unix seconds where emulated and real time coincide",
        [](SpotonConfig& c, std::string_view v) {
          c.coordinator.clock = Clock(c.coordinator.clock.scale(), from_unix_seconds(parse_number(v)));
        },
        [](const SpotonConfig& c) { return number_text(to_unix_seconds(c.coordinator.clock.anchor())); });
    add("eviction", "self_register", "register our pid with the mock's /admin/register",
        [](SpotonConfig& c, std::string_view v) { c.coordinator.self_register = parse_bool(v); },
        [](const SpotonConfig& c) { return bool_text(c.coordinator.self_register); });
    // [pricing]
    add("pricing", "spot_rate", "$ per hour",
        [](SpotonConfig& c, std::string_view v) { c.pricing.spot_rate = parse_number(v); },
        [](const SpotonConfig& c) { return number_text(c.pricing.spot_rate); });
    add("pricing", "on_demand_rate", "$ per hour",
        [](SpotonConfig& c, std::string_view v) { c.pricing.on_demand_rate = parse_number(v); },
        [](const SpotonConfig& c) { return number_text(c.pricing.on_demand_rate); });
    add("pricing", "storage_rate", "$ per 100 GiB provisioned per month",
        [](SpotonConfig& c, std::string_view v) { c.pricing.storage_rate = parse_number(v); },
        [](const SpotonConfig& c) { return number_text(c.pricing.storage_rate); });
    add("pricing", "provisioned_storage", "GiB",
        [](SpotonConfig& c, std::string_view v) { c.pricing.provisioned_storage = parse_number(v); },
        [](const SpotonConfig& c) { return number_text(c.pricing.provisioned_storage); });
    return t;
  }();
  return table;
}

const KeyHandler* find_handler(std::string_view section, std::string_view key) {
  for (const auto& h : handlers()) {
    if (h.doc.section == section && h.doc.key == key) return &h;
  }
  return nullptr;
}

bool known_section(std::string_view section) {
  return section == "workload" || section == "checkpoint" || section == "eviction" ||
         section == "pricing";
}

}  // namespace

ConfigError::ConfigError(std::string source, int line, int column, const std::string& message)
    : std::runtime_error(line > 0 ? source + ":" + std::to_string(line) + ":" +
                                        std::to_string(column) + ": " + message
                                  : source + ": " + message),
      source_(std::move(source)),
      line_(line),
      column_(column) {}

Duration parse_duration(std::string_view text) {
  std::string s = trim(text);
  double unit = 1;
  auto strip = [&s](std::string_view suffix) {
    if (s.size() > suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0) {
      s.resize(s.size() - suffix.size());
      return true;
    }
    return false;
  };
  if (strip("ms")) {
    unit = 1e-3;
  } else if (strip("s")) {
    unit = 1;
  } else if (strip("m")) {
    unit = 60;
  } else if (strip("h")) {
    unit = 3600;
  }
  const double v = parse_number(s) * unit;
  if (v < 0) throw std::invalid_argument("durations must be >= 0");
  return Duration(v);
}

std::string format_duration(Duration d) { return number_text(d.count()); }

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    for (const auto& h : handlers()) k.push_back(h.doc);
    return k;
  }();
  return keys;
}

SpotonConfig default_config() {
  SpotonConfig c;
  c.coordinator.workload = WorkloadSpec::assembly_like(200);
  c.coordinator.workload.step_cost = Duration(0.06);
  return c;
}

std::string config_reference() {
  const SpotonConfig defaults = default_config();
  std::ostringstream out;
  std::string section;
  for (const auto& h : handlers()) {
    if (h.doc.section != section) {
      section = h.doc.section;
      out << "[" << section << "]\n";
    }
    out << "  " << h.doc.key << " = " << h.get(defaults) << "\n      " << h.doc.help << "\n";
  }
  return out.str();
}

void set_config_value(SpotonConfig& config, std::string_view section, std::string_view key,
                      std::string_view value) {
  const KeyHandler* h = find_handler(section, key);
  if (h == nullptr) {
    throw std::invalid_argument("unknown key '" + std::string(section) + "." + std::string(key) + "'");
  }
  h->set(config, value);
}

void validate_config(const SpotonConfig& config, const std::string& source) {
  try {
    config.coordinator.validate();
    config.pricing.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(source, 0, 0, e.what());
  }
  if (config.coordinator.clock.scale() != 1.0 &&
      to_unix_seconds(config.coordinator.clock.anchor()) == 0) {
    throw ConfigError(source, 0, 0, "eviction.clock_anchor must be set when time_scale != 1");
  }
}

SpotonConfig parse_config(std::string_view text, const std::string& source) {
  SpotonConfig config = default_config();
  std::string section;
  std::set<std::string> seen;
  int line_no = 0;
  size_t pos = 0;
  while (pos <= text.size()) {
    const size_t nl = text.find('\n', pos);
    const std::string_view line = text.substr(pos, nl == std::string_view::npos ? nl : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    size_t first = 0;
    while (first < line.size() && (line[first] == ' ' || line[first] == '\t')) ++first;
    const int col = static_cast<int>(first) + 1;
    const std::string body = trim(line);
    if (body.empty() || body[0] == '#' || body[0] == ';') continue;
    if (body[0] == '[') {
      if (body.back() != ']') throw ConfigError(source, line_no, col, "section header is missing ']'");
      section = trim(std::string_view(body).substr(1, body.size() - 2));
      if (!known_section(section)) {
        throw ConfigError(source, line_no, col + 1,
                          "unknown section [" + section +
                              "]; expected workload, checkpoint, eviction or pricing");
      }
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(source, line_no, col, "expected 'key = value' or '[section]'");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(source, line_no, col, "missing key before '='");
    if (section.empty()) {
      throw ConfigError(source, line_no, col, "key '" + key + "' appears before any [section]");
    }
    if (find_handler(section, key) == nullptr) {
      throw ConfigError(source, line_no, col, "unknown key '" + key + "' in [" + section + "]");
    }
    if (!seen.insert(section + "." + key).second) {
      throw ConfigError(source, line_no, col, "duplicate key '" + key + "' in [" + section + "]");
    }
    size_t vstart = eq + 1;
    while (vstart < line.size() && (line[vstart] == ' ' || line[vstart] == '\t')) ++vstart;
    const std::string value = unquote(trim(line.substr(eq + 1)));
    try {
      set_config_value(config, section, key, value);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(source, line_no, static_cast<int>(vstart) + 1,
                        section + "." + key + ": " + e.what());
    }
  }
  validate_config(config, source);
  return config;
}

SpotonConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string(), 0, 0, "cannot read config file");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.string());
}

void apply_override(SpotonConfig& config, std::string_view assignment) {
  const std::string source = "--set " + std::string(assignment);
  const size_t eq = assignment.find('=');
  const size_t dot = assignment.substr(0, eq).find('.');
  if (eq == std::string_view::npos || dot == std::string_view::npos) {
    throw ConfigError(source, 1, 1, "expected section.key=value");
  }
  const std::string section = trim(assignment.substr(0, dot));
  const std::string key = trim(assignment.substr(dot + 1, eq - dot - 1));
  if (!known_section(section)) throw ConfigError(source, 1, 1, "unknown section '" + section + "'");
  try {
    set_config_value(config, section, key, unquote(trim(assignment.substr(eq + 1))));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(source, 1, static_cast<int>(eq) + 2, e.what());
  }
}

void apply_environment(SpotonConfig& config) {
  if (const char* url = std::getenv("SPOTON_ENDPOINT"); url != nullptr && *url != '\0') {
    try {
      set_config_value(config, "eviction", "endpoint", url);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("SPOTON_ENDPOINT", 0, 0, e.what());
    }
  }
}

std::string dump_config(const SpotonConfig& config) {
  std::ostringstream out;
  std::string section;
  for (const auto& h : handlers()) {
    if (h.doc.section != section) {
      if (!section.empty()) out << '\n';
      section = h.doc.section;
      out << '[' << section << "]\n";
    }
    std::string value = h.get(config);
    if (!value.empty() && (value.front() == '"' || value.back() == '"' || value.front() == ' ' ||
                           value.back() == ' ' || value.front() == '\t' || value.back() == '\t')) {
      value = '"' + value + '"';
    }
    out << h.doc.key << " = " << value << '\n';
  }
  return out.str();
}

}  // namespace spoton
