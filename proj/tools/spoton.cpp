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


// spoton: run, resume, drill, simulate and report.

#include <signal.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "spoton/cloudmock.hpp"
#include "spoton/config.hpp"
#include "spoton/coordinator.hpp"
#include "spoton/drill.hpp"
#include "spoton/spotsim.hpp"

namespace {

using nlohmann::json;
using spoton::Duration;

struct CommonFlags {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string store;
  std::string endpoint;
  bool json = false;
  bool dump = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "INI config file");
  cmd->add_option("--set", f.overrides, "override a key: section.key=value (repeatable)");
  cmd->add_option("--store", f.store, "checkpoint store directory (checkpoint.store_root)");
  cmd->add_option("--endpoint", f.endpoint, "scheduled-events URL (eviction.endpoint)");
  cmd->add_flag("--json", f.json, "machine-readable output");
  cmd->add_flag("--dump-config", f.dump, "print the effective config and exit");
  cmd->footer("Config keys (file, --set section.key=value):\n" + spoton::config_reference());
}

/// File < SPOTON_ENDPOINT < --set < --store/--endpoint.
spoton::SpotonConfig assemble(const CommonFlags& f) {
  spoton::SpotonConfig c =
      f.config_path.empty() ? spoton::default_config() : spoton::load_config(f.config_path);
  spoton::apply_environment(c);
  for (const auto& o : f.overrides) spoton::apply_override(c, o);
  if (!f.store.empty()) spoton::apply_override(c, "checkpoint.store_root=" + f.store);
  if (!f.endpoint.empty()) spoton::apply_override(c, "eviction.endpoint=" + f.endpoint);
  spoton::validate_config(c, f.config_path.empty() ? "<defaults>" : f.config_path);
  return c;
}

json ledger_json(const spoton::RunLedger& l) {
  json attempts = json::array();
  for (const auto& a : l.attempts) {
    attempts.push_back({{"attempt", a.attempt_id},
                        {"start", spoton::format_iso8601(a.start)},
                        {"end", spoton::format_iso8601(a.end)},
                        {"end_reason", std::string(spoton::to_string(a.end_reason))},
                        {"resumed_from", a.resumed_from ? json(*a.resumed_from) : json(nullptr)},
                        {"resume_step", a.resume_step},
                        {"last_step", a.last_step}});
  }
  json checkpoints = json::array();
  for (const auto& c : l.checkpoints) {
    checkpoints.push_back({{"attempt", c.attempt_id},
                           {"sequence", c.sequence ? json(*c.sequence) : json(nullptr)},
                           {"kind", std::string(spoton::to_string(c.kind))},
                           {"ok", c.ok},
                           {"step", c.step},
                           {"duration_s", (c.finished - c.started).count()}});
  }
  json evictions = json::array();
  for (const auto& e : l.evictions) {
    evictions.push_back({{"attempt", e.attempt_id},
                         {"event_id", e.event_id},
                         {"notice_time", spoton::format_iso8601(e.notice_time)},
                         {"deadline", spoton::format_iso8601(e.deadline)},
                         {"action", e.action},
                         {"termination_ckpt_ok", e.termination_ckpt_ok},
                         {"lost_steps", e.lost_steps ? json(*e.lost_steps) : json(nullptr)}});
  }
  json stages = json::object();
  for (const auto& [name, d] : l.stage_times) stages[name] = d.count();
  return {{"attempts", attempts},
          {"checkpoints", checkpoints},
          {"evictions", evictions},
          {"stage_times_s", stages},
          {"makespan_s", l.makespan.count()}};
}

int cmd_run(const CommonFlags& f, bool resume_mode) {
  const spoton::SpotonConfig c = assemble(f);
  if (f.dump) {
    std::cout << spoton::dump_config(c);
    return 0;
  }
  const spoton::RunOutcome out =
      resume_mode ? spoton::resume(c.coordinator) : spoton::run(c.coordinator);
  if (f.json) {
    std::cout << json{{"outcome", std::string(spoton::to_string(out.kind))},
                      {"digest", out.digest},
                      {"error", out.error},
                      {"exit_code", out.exit_code()},
                      {"ledger", ledger_json(out.ledger)}}
                     .dump(2)
              << "\n";
  } else if (out.kind == spoton::OutcomeKind::kCompleted) {
    std::cout << "completed digest=" << out.digest << "\n";
  } else if (out.kind == spoton::OutcomeKind::kEvicted) {
    std::cout << "evicted; resume with: spoton resume"
              << (f.config_path.empty() ? "" : " --config " + f.config_path) << "\n";
  } else {
    std::cout << "failed: " << out.error << "\n";
  }
  return out.exit_code();
}

int cmd_mock_serve(const std::string& bind, int port, double min_notice, bool no_kill,
                   double time_scale, double anchor, const std::string& plan_text) {
  spoton::MockOptions o;
  o.bind_address = bind;
  o.port = port;
  o.min_notice = Duration(min_notice);
  o.kill_at_deadline = !no_kill;
  o.clock = spoton::Clock(time_scale, spoton::from_unix_seconds(anchor));
  // Block the stop signals before any thread starts so sigwait sees them.
  sigset_t stop;
  sigemptyset(&stop);
  sigaddset(&stop, SIGINT);
  sigaddset(&stop, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &stop, nullptr);
  spoton::MetadataMock mock(o);
  mock.start();
  if (!plan_text.empty()) {
    // "AT:DELAY,AT:DELAY" in emulated seconds from now.
    std::vector<std::pair<Duration, Duration>> plan;
    std::stringstream ss(plan_text);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const size_t colon = item.find(':');
      plan.emplace_back(spoton::parse_duration(item.substr(0, colon)),
                        colon == std::string::npos ? Duration(0)
                                                   : spoton::parse_duration(item.substr(colon + 1)));
    }
    mock.schedule_evictions(std::move(plan));
  }
  std::cout << mock.endpoint_url() << std::endl;
  int sig = 0;
  sigwait(&stop, &sig);
  mock.stop();
  return 0;
}

std::vector<Duration> parse_duration_list(const std::string& text) {
  std::vector<Duration> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "inf" || item == "none") {
      out.push_back(spoton::kNoEvictions);
      continue;
    }
    const auto hms = spoton::parse_hms(item);
    out.push_back(hms ? *hms : spoton::parse_duration(item));
  }
  return out;
}

spoton::ReportRow table_row(const std::vector<spoton::ReportRow>& rows, const std::string& eviction,
                            const std::string& ckpt) {
  for (const auto& r : rows) {
    if (r.eviction == eviction && r.ckpt_type == ckpt) return r;
  }
  throw std::invalid_argument("table has no row with eviction '" + eviction + "' and type '" +
                              ckpt + "'");
}

/// Savings figures derived from a campaign runs table.
std::string claims_text(const std::vector<spoton::ReportRow>& rows,
                        const spoton::PricingModel& pricing) {
  using spoton::cost;
  std::ostringstream out;
  char buf[256];
  const auto baseline = rows.front();
  const auto app90 = table_row(rows, "Every 90 min", "Application");
  const auto app60 = table_row(rows, "Every 60 min", "Application");
  const auto tr90 = table_row(rows, "Every 90 min", "Transparent 30 min");
  const auto tr60 = table_row(rows, "Every 60 min", "Transparent 30 min");
  const auto od_base = cost(baseline.total, pricing.on_demand_rate);
  std::snprintf(buf, sizeof buf, "on-demand baseline (%s): %s\n",
                spoton::format_hms(baseline.total).c_str(), od_base.format(5).c_str());
  out << buf;
  std::snprintf(buf, sizeof buf, "savings, application 90 min spot vs baseline on-demand: %.2f%%\n",
                spoton::savings(cost(app90.total, pricing.spot_rate), od_base));
  out << buf;
  std::snprintf(buf, sizeof buf,
                "savings, transparent 90 min spot vs application 60 min on-demand: %.2f%%\n",
                spoton::savings(cost(tr90.total, pricing.spot_rate),
                                cost(app60.total, pricing.on_demand_rate)));
  out << buf;
  std::snprintf(buf, sizeof buf,
                "savings, transparent 90 min spot vs baseline on-demand (literal reading): %.2f%%\n",
                spoton::savings(cost(tr90.total, pricing.spot_rate), od_base));
  out << buf;
  std::snprintf(buf, sizeof buf, "time gap, application vs transparent, 90 min: %.2f%%\n",
                100.0 * (app90.total - tr90.total) / app90.total);
  out << buf;
  std::snprintf(buf, sizeof buf, "time gap, application vs transparent, 60 min: %.2f%%\n",
                100.0 * (app60.total - tr60.total) / app60.total);
  out << buf;
  out << "storage (monthly, not in per-run cost): " << pricing.monthly_storage_cost().format(2)
      << "\n";
  return out.str();
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

int main(int argc, char** argv) {
  auto logger = spdlog::stderr_color_mt("spoton");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%H:%M:%S.%e] [%l] %v");

  CLI::App app{"spoton: checkpoint coordinator for preemptible instances"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "debug logging");

  CommonFlags run_flags, resume_flags, drill_flags, sim_flags, report_flags, evict_flags;
  auto* run_cmd = app.add_subcommand("run", "run the workload from scratch under the coordinator");
  add_common(run_cmd, run_flags);
  auto* resume_cmd = app.add_subcommand(
      "resume", "resume from the newest valid checkpoint (or start fresh on an empty store)");
  add_common(resume_cmd, resume_flags);

  auto* serve_cmd = app.add_subcommand("mock-serve", "serve a local scheduled-events mock");
  std::string bind = "127.0.0.1", serve_plan;
  int port = 8787;
  double min_notice = 30, serve_scale = 1, serve_anchor = 0;
  bool no_kill = false;
  serve_cmd->add_option("--bind", bind, "loopback address to bind")->capture_default_str();
  serve_cmd->add_option("--port", port, "TCP port, 0 = any free")->capture_default_str();
  serve_cmd->add_option("--min-notice", min_notice, "notice floor in seconds")->capture_default_str();
  serve_cmd->add_flag("--no-kill", no_kill, "do not kill the registered target at NotBefore");
  serve_cmd->add_option("--time-scale", serve_scale, "emulated seconds per real second");
  serve_cmd->add_option("--clock-anchor", serve_anchor, "unix seconds anchoring emulated time");
  serve_cmd->add_option("--plan", serve_plan, "scheduled evictions AT:DELAY,... (seconds from start)");

  auto* evict_cmd = app.add_subcommand("mock-evict", "ask a running mock to schedule a Preempt");
  double delay = 30;
  evict_cmd->add_option("--delay", delay, "seconds until NotBefore (clamped by the mock)")
      ->capture_default_str();
  add_common(evict_cmd, evict_flags);

  auto* sim_cmd = app.add_subcommand("sim", "simulate makespan and cost under periodic evictions");
  std::string sim_stages = "33:57,39:03,41:35,40:41,31:01", policy = "periodic";
  std::string taus = "1800", evict_every = "inf", calibrate_table;
  double overhead = 0, restore_time = 0, reprovision = 0, cap = 0;
  sim_cmd->add_option("--stages", sim_stages, "eviction-free stage durations (H:MM:SS or s)")
      ->capture_default_str();
  sim_cmd->add_option("--policy", policy, "periodic | boundary | none")
      ->check(CLI::IsMember({"periodic", "boundary", "none"}))
      ->capture_default_str();
  sim_cmd->add_option("--tau", taus, "periodic interval(s), comma-separated")->capture_default_str();
  sim_cmd->add_option("--evict-every", evict_every, "eviction interval(s) E, 'inf' for none")
      ->capture_default_str();
  sim_cmd->add_option("--overhead", overhead, "checkpoint cost c (s)");
  sim_cmd->add_option("--restore", restore_time, "restore time r (s)");
  sim_cmd->add_option("--reprovision", reprovision, "reprovision delay p (s)");
  sim_cmd->add_option("--cap", cap, "horizon cap (s); default 100x the work");
  sim_cmd->add_option("--calibrate", calibrate_table,
                      "fit c and recovery to a campaign runs CSV, then print forward gaps");
  add_common(sim_cmd, sim_flags);

  auto* report_cmd = app.add_subcommand("report", "cost table from recorded runs or a table file");
  std::vector<std::string> tables, ledgers;
  bool csv = false, claims = false;
  std::string ledger_eviction = "N/A", ledger_ckpt = "N/A";
  report_cmd->add_option("--table", tables, "campaign runs CSV (repeatable)");
  report_cmd->add_option("--ledger", ledgers, "store directory whose ledger to report (repeatable)");
  report_cmd->add_option("--eviction-label", ledger_eviction, "eviction column for ledger rows");
  report_cmd->add_option("--ckpt-label", ledger_ckpt, "checkpoint column for ledger rows");
  report_cmd->add_flag("--csv", csv, "CSV instead of an aligned table");
  report_cmd->add_flag("--claims", claims, "also print savings and time-gap figures");
  add_common(report_cmd, report_flags);

  auto* drill_cmd = app.add_subcommand(
      "drill", "evict and relaunch until completion; compare the digest to a clean run");
  std::string drill_plan = "every 60";
  double notice = 30, drill_min_notice = 30;
  size_t max_attempts = 200, stall_limit = 5;
  drill_cmd->add_option("--plan", drill_plan,
                        "instance lifetimes: 'every N', 'N1,N2,...' or 'none'")
      ->capture_default_str();
  drill_cmd->add_option("--notice", notice, "requested notice per eviction (s)")->capture_default_str();
  drill_cmd->add_option("--mock-min-notice", drill_min_notice, "mock notice floor (s)")
      ->capture_default_str();
  drill_cmd->add_option("--max-attempts", max_attempts)->capture_default_str();
  drill_cmd->add_option("--stall-limit", stall_limit,
                        "evicted attempts without checkpoint progress before giving up")
      ->capture_default_str();
  add_common(drill_cmd, drill_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  if (verbose) spdlog::set_level(spdlog::level::debug);

  try {
    if (*run_cmd) return cmd_run(run_flags, false);
    if (*resume_cmd) return cmd_run(resume_flags, true);
    if (*serve_cmd) {
      return cmd_mock_serve(bind, port, min_notice, no_kill, serve_scale, serve_anchor, serve_plan);
    }
    if (*evict_cmd) {
      const auto c = assemble(evict_flags);
      const auto id = spoton::remote_trigger_eviction(
          spoton::parse_endpoint(c.coordinator.metadata_endpoint), Duration(delay));
      std::cout << id << "\n";
      return 0;
    }
    if (*sim_cmd) {
      const auto c = assemble(sim_flags);
      if (!calibrate_table.empty()) {
        const auto rows = spoton::parse_table_csv(read_text(calibrate_table));
        std::vector<Duration> base;
        for (const auto& [name, d] : rows.at(1).stages) base.push_back(d);
        std::vector<spoton::CalibrationTarget> targets;
        for (const auto& r : rows) {
          if (r.eviction == "N/A") continue;
          spoton::SimParams p;
          p.stage_durations = base;
          const double e = r.eviction.find("90") != std::string::npos ? 5400 : 3600;
          p.eviction_interval = Duration(e);
          if (r.ckpt_type == "Application") {
            p.policy = spoton::CheckpointPolicy::boundary_only();
          } else {
            p.policy = spoton::CheckpointPolicy::periodic(
                Duration(r.ckpt_type.find("15") != std::string::npos ? 900 : 1800));
          }
          targets.push_back({p, r.total});
        }
        const auto fit = spoton::calibrate(targets, Duration(300), Duration(5), Duration(900),
                                           Duration(10));
        std::printf("fitted checkpoint overhead c = %.0f s, recovery r = %.0f s (sse %.0f s^2)\n",
                    fit.checkpoint_overhead.count(), fit.recovery.count(), fit.sse);
        for (const double e : {5400.0, 3600.0}) {
          spoton::SimParams p;
          p.stage_durations = base;
          p.checkpoint_overhead = fit.checkpoint_overhead;
          p.restore_time = fit.recovery;
          p.eviction_interval = Duration(e);
          p.policy = spoton::CheckpointPolicy::boundary_only();
          const auto app_run = spoton::simulate(p, c.pricing);
          p.policy = spoton::CheckpointPolicy::periodic(Duration(1800));
          const auto tr_run = spoton::simulate(p, c.pricing);
          std::printf("E=%.0f min: application %s, transparent 30 min %s, gap %.2f%%\n", e / 60,
                      spoton::format_hms(app_run.makespan).c_str(),
                      spoton::format_hms(tr_run.makespan).c_str(),
                      100.0 * (app_run.makespan - tr_run.makespan) / app_run.makespan);
        }
        return 0;
      }
      spoton::SimParams base;
      base.stage_durations = parse_duration_list(sim_stages);
      base.checkpoint_overhead = Duration(overhead);
      base.restore_time = Duration(restore_time);
      base.reprovision_delay = Duration(reprovision);
      if (cap > 0) base.horizon_cap = Duration(cap);
      std::vector<std::string> names;
      for (size_t i = 0; i < base.stage_durations.size(); ++i) {
        names.push_back(i < 5 ? std::vector<std::string>{"K33", "K55", "K77", "K99", "K127"}[i]
                              : "S" + std::to_string(i + 1));
      }
      std::vector<spoton::ReportRow> rows;
      json out = json::array();
      int status = 0;
      for (const Duration e : parse_duration_list(evict_every)) {
        for (const Duration tau : policy == "periodic" ? parse_duration_list(taus)
                                                       : std::vector<Duration>{Duration(0)}) {
          spoton::SimParams p = base;
          p.eviction_interval = e;
          p.policy = policy == "periodic"   ? spoton::CheckpointPolicy::periodic(tau)
                     : policy == "boundary" ? spoton::CheckpointPolicy::boundary_only()
                                            : spoton::CheckpointPolicy::none();
          const std::string eviction =
              std::isinf(e.count()) ? "N/A" : "Every " + spoton::format_duration(e) + " s";
          const std::string ckpt =
              policy == "periodic" ? "Periodic " + spoton::format_duration(tau) + " s" : policy;
          try {
            const auto r = spoton::simulate(p, c.pricing);
            rows.push_back(spoton::row_from_sim(r, names, eviction, ckpt));
            out.push_back({{"eviction_interval_s", std::isinf(e.count()) ? json(nullptr) : json(e.count())},
                           {"policy", policy},
                           {"tau_s", tau.count()},
                           {"makespan_s", r.makespan.count()},
                           {"evictions", r.evictions},
                           {"lost_work_s", r.lost_work.count()},
                           {"checkpoints_taken", r.checkpoints_taken},
                           {"spot_cost", r.spot_cost.dollars()},
                           {"on_demand_cost", r.on_demand_cost.dollars()}});
          } catch (const spoton::NonconvergenceError& err) {
            std::cerr << "nonconvergence (" << eviction << ", " << ckpt << "): " << err.what() << "\n";
            out.push_back({{"eviction_interval_s", e.count()}, {"policy", policy},
                           {"tau_s", tau.count()}, {"error", err.what()}});
            status = spoton::kExitUnrecoverable;
          }
        }
      }
      if (sim_flags.json) {
        std::cout << out.dump(2) << "\n";
      } else {
        std::cout << spoton::report_csv(rows, c.pricing);
      }
      return status;
    }
    if (*report_cmd) {
      const auto c = assemble(report_flags);
      std::vector<spoton::ReportRow> rows;
      for (const auto& t : tables) {
        for (auto& r : spoton::parse_table_csv(read_text(t))) rows.push_back(std::move(r));
      }
      for (const auto& l : ledgers) {
        rows.push_back(spoton::row_from_ledger(spoton::load_ledger(l), ledger_eviction, ledger_ckpt));
      }
      std::cout << (csv ? spoton::report_csv(rows, c.pricing) : spoton::report_text(rows, c.pricing));
      if (claims && !rows.empty()) std::cout << "\n" << claims_text(rows, c.pricing);
      return 0;
    }
    if (*drill_cmd) {
      spoton::DrillOptions o;
      o.config = assemble(drill_flags);
      o.plan = spoton::parse_eviction_plan(drill_plan);
      o.notice = Duration(notice);
      o.mock_min_notice = Duration(drill_min_notice);
      o.max_attempts = max_attempts;
      o.stall_limit = stall_limit;
      const auto r = spoton::run_drill(o);
      if (drill_flags.json) {
        std::cout << json{{"completed", r.completed},
                          {"nonconverged", r.nonconverged},
                          {"digest", r.digest},
                          {"reference_digest", r.reference_digest},
                          {"digest_match", r.digest_match()},
                          {"attempts", r.attempts},
                          {"evictions", r.evictions},
                          {"message", r.message},
                          {"exit_code", r.exit_code()},
                          {"ledger", ledger_json(r.ledger)}}
                         .dump(2)
                  << "\n";
      } else {
        std::cout << spoton::report_text({r.row}, o.config.pricing);
        std::cout << "attempts=" << r.attempts << " evictions=" << r.evictions
                  << " digest=" << (r.digest.empty() ? "-" : r.digest)
                  << " reference=" << r.reference_digest << "\n";
        if (r.nonconverged) std::cout << "nonconvergence: " << r.message << "\n";
        else if (!r.message.empty()) std::cout << r.message << "\n";
        else std::cout << "digest match\n";
      }
      return r.exit_code();
    }
  } catch (const spoton::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return spoton::kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return spoton::kExitUnrecoverable;
  }
  return 0;
}
