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


#include "spoton/coordinator.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <csignal>
#include <condition_variable>
#include <deque>
#include <map>
#include <mutex>
#include <stdexcept>
#include <thread>

#include <spdlog/spdlog.h>

#include "spoton/cloudmock.hpp"
#include "spoton/process.hpp"

namespace spoton {
namespace fs = std::filesystem;

void CoordinatorConfig::validate() const {
  workload.validate();
  if (!(checkpoint_interval.count() > 0)) {
    throw std::invalid_argument("checkpoint.interval must be > 0");
  }
  if (!(poll_interval.count() > 0)) throw std::invalid_argument("eviction.poll_interval must be > 0");
  if (snapshot_time_estimate.count() < 0) {
    throw std::invalid_argument("checkpoint.snapshot_time_estimate must be >= 0");
  }
  if (snapshot_cost.count() < 0) throw std::invalid_argument("checkpoint.snapshot_cost must be >= 0");
  if (min_notice_floor.count() < 0) {
    throw std::invalid_argument("eviction.min_notice_floor must be >= 0");
  }
  if (!(safety_factor >= 1.0)) throw std::invalid_argument("eviction.safety_factor must be >= 1");
  if (workload.step_cost.count() < 0) throw std::invalid_argument("workload.step_cost must be >= 0");
  if (!(clock.scale() > 0)) throw std::invalid_argument("eviction.time_scale must be > 0");
  if (retain < 1) throw std::invalid_argument("checkpoint.retain must be >= 1");
  if (store_root.empty()) throw std::invalid_argument("checkpoint.store_root must be set");
  if (checkpointer == CheckpointerKind::kTransparent &&
      (snapshot_cmd.empty() || restore_cmd.empty())) {
    throw std::invalid_argument(
        "checkpoint.kind = transparent needs checkpoint.snapshot_cmd and checkpoint.restore_cmd");
  }
  if (polling_enabled) parse_endpoint(metadata_endpoint);
}

fs::path CoordinatorConfig::resolved_workload_binary() const {
  return workload_binary.empty() ? executable_dir() / "spoton-workload" : workload_binary;
}

std::string_view to_string(PlanAction action) {
  switch (action) {
    case PlanAction::kTerminationCheckpointThenStop: return "termination_checkpoint_then_stop";
    case PlanAction::kStopWithoutCheckpoint: return "stop_without_checkpoint";
    case PlanAction::kIgnore: break;
  }
  return "ignore";
}

ActionPlan on_eviction_notice(const EvictionNotice& notice, bool inflight, Duration estimate,
                              Instant now, double safety_factor, bool on_demand_capable) {
  const Duration budget = std::max(notice.deadline - now, Duration(0));
  char text[160];
  if (inflight) {
    return {PlanAction::kIgnore,
            "checkpoint already in flight; it becomes the terminal checkpoint"};
  }
  if (!on_demand_capable) {
    return {PlanAction::kStopWithoutCheckpoint,
            "checkpointer cannot snapshot on demand; last committed checkpoint stands"};
  }
  const Duration needed = estimate * safety_factor;
  if (budget >= needed) {
    std::snprintf(text, sizeof text, "budget %.1fs covers %.1fs (estimate %.1fs x %.2f)",
                  budget.count(), needed.count(), estimate.count(), safety_factor);
    return {PlanAction::kTerminationCheckpointThenStop, text};
  }
  std::snprintf(text, sizeof text,
                "budget %.1fs below %.1fs (estimate %.1fs x %.2f); termination checkpoint skipped",
                budget.count(), needed.count(), estimate.count(), safety_factor);
  return {PlanAction::kStopWithoutCheckpoint, text};
}

Instant schedule_next_checkpoint(Instant last_completed, Duration interval, Instant now) {
  return std::max(last_completed + interval, now);
}

std::string_view to_string(OutcomeKind kind) {
  switch (kind) {
    case OutcomeKind::kCompleted: return "completed";
    case OutcomeKind::kEvicted: return "evicted";
    case OutcomeKind::kFailed: break;
  }
  return "failed";
}

int RunOutcome::exit_code() const {
  switch (kind) {
    case OutcomeKind::kCompleted: return kExitCompleted;
    case OutcomeKind::kEvicted: return kExitEvicted;
    case OutcomeKind::kFailed: break;
  }
  return kExitUnrecoverable;
}

std::unique_ptr<Checkpointer> make_checkpointer(const CoordinatorConfig& c) {
  switch (c.checkpointer) {
    case CheckpointerKind::kToy:
      return std::make_unique<ToyCheckpointer>(c.workload, c.snapshot_time_estimate,
                                               c.snapshot_cost, c.clock);
    case CheckpointerKind::kApplication:
      return std::make_unique<ApplicationCheckpointer>(c.workload, c.snapshot_time_estimate,
                                                       c.clock);
    case CheckpointerKind::kTransparent:
      return std::make_unique<ExternalCheckpointer>(c.workload, c.snapshot_time_estimate,
                                                    c.snapshot_cmd, c.restore_cmd,
                                                    c.store_root / "work", c.clock);
  }
  throw std::invalid_argument("unknown checkpointer kind");
}

namespace {

using Fields = std::vector<std::pair<std::string, std::string>>;

std::string seconds_text(Duration d) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", d.count());
  return buf;
}

struct CheckpointResult {
  bool ok = false;
  CheckpointKind kind = CheckpointKind::kPeriodic;
  std::optional<uint64_t> sequence;
  uint64_t step = 0;
  Instant started{};
  Instant finished{};
  std::string error;
};

struct Event {
  enum Type { kExited, kNotice, kCheckpointDone, kNativeCheckpoint } type;
  ExitStatus status;
  EvictionNotice notice;
  CheckpointResult result;
};

uint64_t next_attempt_id(const fs::path& store_root) {
  uint64_t last = 0;
  for (const auto& r : load_records(store_root)) {
    if (auto a = r.get("attempt")) last = std::max<uint64_t>(last, std::strtoull(a->c_str(), nullptr, 10));
  }
  return last + 1;
}

class Attempt {
 public:
  Attempt(const CoordinatorConfig& config, bool resume_mode)
      : config_(config),
        resume_mode_(resume_mode),
        clock_(config.clock),
        store_(config.store_root) {}

  RunOutcome execute();

 private:
  WorkloadState restore_start_state();
  void log(std::string kind, Fields fields);
  void push(Event e);
  void on_progress(const ProgressMarker& m);
  void start_checkpoint(CheckpointKind kind);
  void handle_notice(const EvictionNotice& notice);
  void finish_checkpoint(const CheckpointResult& r);
  RunOutcome finish(OutcomeKind kind, std::string digest, std::string error);

  const CoordinatorConfig& config_;
  const bool resume_mode_;
  Clock clock_;
  CheckpointStore store_;
  std::unique_ptr<LedgerWriter> ledger_;
  std::unique_ptr<Checkpointer> checkpointer_;
  uint64_t attempt_id_ = 0;
  fs::path scratch_;
  std::map<std::string, size_t> stage_index_;

  std::unique_ptr<WorkloadProcess> process_;
  std::atomic<uint64_t> step_{0};
  std::mutex marker_mu_;
  ProgressMarker marker_;
  std::string digest_;

  std::mutex queue_mu_;
  std::condition_variable queue_cv_;
  std::deque<Event> queue_;

  std::thread worker_;
  bool inflight_ = false;
  bool evicting_ = false;
  bool stop_after_inflight_ = false;
};

void Attempt::log(std::string kind, Fields fields) {
  fields.insert(fields.begin(), {"attempt", std::to_string(attempt_id_)});
  ledger_->append(std::move(kind), std::move(fields));
}

void Attempt::push(Event e) {
  {
    std::lock_guard lock(queue_mu_);
    queue_.push_back(std::move(e));
  }
  queue_cv_.notify_all();
}

WorkloadState Attempt::restore_start_state() {
  const WorkloadState scratch_state = initial_state(config_.workload);
  if (!resume_mode_) return scratch_state;
  std::vector<std::string> chain;
  for (const auto& m : store_.valid_checkpoints()) {
    try {
      const auto payload = store_.read_payload(m);
      const WorkloadState s = checkpointer_->restore(payload, scratch_);
      if (!chain.empty()) {
        log("restore_fallback", {{"chain", [&] {
                                    std::string c;
                                    for (const auto& x : chain) c += x + ",";
                                    return c + std::to_string(m.sequence);
                                  }()},
                                 {"resumed", std::to_string(m.sequence)}});
      }
      log("attempt_start", {{"mode", "resume"},
                            {"resume_seq", std::to_string(m.sequence)},
                            {"resume_step", std::to_string(global_step(config_.workload, s))}});
      spdlog::info("attempt {}: resuming from checkpoint {} ({} {})", attempt_id_, m.sequence,
                   m.progress_marker.stage_name, m.progress_marker.step_index);
      return s;
    } catch (const std::exception& e) {
      spdlog::warn("attempt {}: checkpoint {} did not restore: {}", attempt_id_, m.sequence, e.what());
      log("restore_failed", {{"seq", std::to_string(m.sequence)}, {"error", e.what()}});
      chain.push_back(std::to_string(m.sequence));
    }
  }
  if (!chain.empty()) {
    std::string c;
    for (const auto& x : chain) c += x + ",";
    log("restore_fallback", {{"chain", c + "scratch"}, {"resumed", "scratch"}});
  }
  log("attempt_start", {{"mode", "resume"}, {"resume_seq", "none"}, {"resume_step", "0"}});
  return scratch_state;
}

void Attempt::on_progress(const ProgressMarker& m) {
  const auto it = stage_index_.find(m.stage_name);
  if (it == stage_index_.end()) return;
  {
    std::lock_guard lock(marker_mu_);
    marker_ = m;
  }
  step_.store(global_step(config_.workload, m));
  const auto& stages = config_.workload.stages;
  if (m.step_index == stages[it->second].steps) {
    log("stage_end", {{"stage", m.stage_name}, {"step", std::to_string(step_.load())}});
    for (size_t i = it->second + 1; i < stages.size(); ++i) {
      if (stages[i].steps > 0) {
        log("stage_begin", {{"stage", stages[i].name}});
        break;
      }
    }
  }
}

void Attempt::start_checkpoint(CheckpointKind kind) {
  inflight_ = true;
  worker_ = std::thread([this, kind] {
    CheckpointResult r;
    r.kind = kind;
    r.started = clock_.now();
    try {
      Snapshot snap = checkpointer_->snapshot(*process_);
      ProgressMarker marker;
      if (snap.marker) {
        marker = *snap.marker;
      } else {
        std::lock_guard lock(marker_mu_);
        marker = marker_;
      }
      const CheckpointManifest m =
          store_.write(snap.payload, CheckpointMeta{kind, attempt_id_, marker}, clock_.now());
      r.finished = clock_.now();
      r.ok = true;
      r.sequence = m.sequence;
      r.step = global_step(config_.workload, marker);
      checkpointer_->observe_duration(r.finished - r.started);
      store_.apply_retention(config_.retain);
    } catch (const std::exception& e) {
      r.finished = clock_.now();
      r.error = e.what();
      r.step = step_.load();
    }
    push(Event{Event::kCheckpointDone, {}, {}, r});
  });
}

void Attempt::finish_checkpoint(const CheckpointResult& r) {
  if (worker_.joinable()) worker_.join();
  inflight_ = false;
  Fields f = {{"kind", std::string(to_string(r.kind))},
              {"ok", r.ok ? "true" : "false"},
              {"started", format_iso8601(r.started)},
              {"duration", seconds_text(r.finished - r.started)},
              {"step", std::to_string(r.step)}};
  if (r.sequence) f.insert(f.begin(), {"seq", std::to_string(*r.sequence)});
  if (stop_after_inflight_) f.emplace_back("terminal", "true");
  if (!r.ok) f.emplace_back("error", r.error);
  log("checkpoint", std::move(f));
  if (r.ok) {
    spdlog::info("attempt {}: {} checkpoint {} committed at step {}", attempt_id_,
                 to_string(r.kind), *r.sequence, r.step);
  } else {
    spdlog::warn("attempt {}: {} checkpoint failed: {}", attempt_id_, to_string(r.kind), r.error);
  }
}

void Attempt::handle_notice(const EvictionNotice& notice) {
  if (evicting_) return;
  evicting_ = true;
  const Instant now = clock_.now();
  const NoticeBudget budget = notice_budget(notice, now, config_.min_notice_floor);
  if (budget.anomaly) {
    spdlog::warn("eviction notice {} gives only {:.1f}s, below the {:.0f}s floor", notice.event_id,
                 budget.budget.count(), config_.min_notice_floor.count());
  }
  ActionPlan plan;
  if (!config_.checkpointing_enabled) {
    plan = {PlanAction::kStopWithoutCheckpoint, "checkpointing disabled"};
  } else {
    plan = on_eviction_notice(notice, inflight_, checkpointer_->estimate(), now,
                              config_.safety_factor,
                              config_.checkpointer != CheckpointerKind::kApplication);
  }
  log("eviction", {{"event", notice.event_id},
                   {"deadline", format_iso8601(notice.deadline)},
                   {"budget", seconds_text(budget.budget)},
                   {"anomaly", budget.anomaly ? "true" : "false"},
                   {"action", std::string(to_string(plan.action))},
                   {"reason", plan.reason},
                   {"step", std::to_string(step_.load())}});
  spdlog::info("attempt {}: eviction notice {}, {}: {}", attempt_id_, notice.event_id,
               to_string(plan.action), plan.reason);
  switch (plan.action) {
    case PlanAction::kTerminationCheckpointThenStop:
      stop_after_inflight_ = true;
      start_checkpoint(CheckpointKind::kTermination);
      break;
    case PlanAction::kIgnore:
      stop_after_inflight_ = true;
      break;
    case PlanAction::kStopWithoutCheckpoint:
      break;
  }
}

RunOutcome Attempt::finish(OutcomeKind kind, std::string digest, std::string error) {
  Fields f = {{"reason", std::string(to_string(kind))}, {"step", std::to_string(step_.load())}};
  if (!digest.empty()) f.emplace_back("digest", digest);
  if (!error.empty()) f.emplace_back("error", error);
  log("attempt_end", std::move(f));
  RunOutcome out;
  out.kind = kind;
  out.digest = std::move(digest);
  out.error = std::move(error);
  out.ledger = load_ledger(config_.store_root);
  return out;
}

RunOutcome Attempt::execute() {
  config_.validate();
  store_.initialize();
  attempt_id_ = next_attempt_id(config_.store_root);
  ledger_ = std::make_unique<LedgerWriter>(config_.store_root, clock_);
  checkpointer_ = make_checkpointer(config_);
  scratch_ = config_.store_root / "work" / ("attempt-" + std::to_string(attempt_id_));
  fs::create_directories(scratch_);
  const auto& spec = config_.workload;
  for (size_t i = 0; i < spec.stages.size(); ++i) stage_index_[spec.stages[i].name] = i;

  const WorkloadState start = restore_start_state();
  if (!resume_mode_) log("attempt_start", {{"mode", "run"}, {"resume_seq", "none"}, {"resume_step", "0"}});
  step_.store(global_step(spec, start));
  marker_ = marker_of(spec, start);

  if (at_end(spec, start)) {
    return finish(OutcomeKind::kCompleted, digest(spec, start), "");
  }
  if (start.stage_index < spec.stages.size()) {
    log("stage_begin", {{"stage", spec.stages[start.stage_index].name}});
  }

  WorkloadLaunch launch;
  launch.binary = config_.resolved_workload_binary();
  launch.spec = spec;
  launch.mode = config_.checkpointer == CheckpointerKind::kApplication ? SafePointMode::kStageBoundary
                                                                      : SafePointMode::kAnyStep;
  launch.scratch_dir = scratch_;
  launch.time_scale = clock_.scale();
  if (!(start == initial_state(spec))) {
    launch.resume_file = scratch_ / "resume.state";
    std::FILE* f = std::fopen(launch.resume_file->c_str(), "wb");
    if (f == nullptr) return finish(OutcomeKind::kFailed, "", "cannot write resume state");
    const auto bytes = serialize(spec, start);
    std::fwrite(bytes.data(), 1, bytes.size(), f);
    std::fclose(f);
  }
  if (!fs::exists(launch.binary)) {
    return finish(OutcomeKind::kFailed, "", "workload binary not found: " + launch.binary.string());
  }

  const bool app_mode = config_.checkpointer == CheckpointerKind::kApplication;
  WorkloadCallbacks callbacks;
  callbacks.on_progress = [this](const ProgressMarker& m) { on_progress(m); };
  callbacks.on_checkpoint_file = [this, app_mode](const fs::path&) {
    if (app_mode) push(Event{Event::kNativeCheckpoint, {}, {}, {}});
  };
  callbacks.on_done = [this](const std::string& d) {
    std::lock_guard lock(marker_mu_);
    digest_ = d;
  };
  callbacks.on_exit = [this](ExitStatus s) { push(Event{Event::kExited, s, {}, {}}); };

  try {
    process_ = std::make_unique<WorkloadProcess>(workload_argv(launch), std::move(callbacks), clock_);
  } catch (const std::exception& e) {
    return finish(OutcomeKind::kFailed, "", std::string("workload spawn failed: ") + e.what());
  }
  spdlog::info("attempt {}: workload pid {} started at step {}", attempt_id_, process_->pid(),
               step_.load());

  std::unique_ptr<EvictionPoller> poller;
  if (config_.polling_enabled) {
    const Endpoint endpoint = parse_endpoint(config_.metadata_endpoint);
    if (config_.self_register) {
      try {
        remote_register_target(endpoint, ::getpid());
      } catch (const std::exception& e) {
        spdlog::warn("self-registration with {} failed: {}", endpoint.base_url(), e.what());
      }
    }
    poller = std::make_unique<EvictionPoller>(
        endpoint, config_.poll_interval, clock_,
        [this](const EvictionNotice& n) { push(Event{Event::kNotice, {}, n, {}}); });
    poller->start();
  }

  const bool timer_driven = config_.checkpointing_enabled && !app_mode;
  const Instant attempt_start = clock_.now();
  constexpr Instant kNever = Instant::max();
  Instant next_ckpt = timer_driven ? attempt_start + config_.checkpoint_interval : kNever;
  Instant next_tick = attempt_start + config_.poll_interval;
  bool stopped_by_plan = false;
  bool termination_ok = false;
  std::optional<ExitStatus> exit_status;

  auto stop_workload = [&] {
    log("progress", {{"step", std::to_string(step_.load())}});
    log("eviction_result", {{"termination_ckpt_ok", termination_ok ? "true" : "false"}});
    stopped_by_plan = true;
    process_->kill();
  };

  while (!exit_status) {
    std::deque<Event> events;
    {
      std::unique_lock lock(queue_mu_);
      queue_cv_.wait_until(lock, clock_.to_real(std::min(next_ckpt, next_tick)),
                           [this] { return !queue_.empty(); });
      events.swap(queue_);
    }
    for (const Event& e : events) {
      switch (e.type) {
        case Event::kExited:
          exit_status = e.status;
          break;
        case Event::kNotice:
          if (stopped_by_plan) break;
          handle_notice(e.notice);
          next_ckpt = kNever;
          if (!stop_after_inflight_) stop_workload();
          break;
        case Event::kCheckpointDone:
          finish_checkpoint(e.result);
          if (stop_after_inflight_ && !stopped_by_plan) {
            termination_ok = e.result.ok;
            stop_workload();
          } else if (timer_driven && !evicting_) {
            next_ckpt = schedule_next_checkpoint(e.result.finished, config_.checkpoint_interval,
                                                 clock_.now());
          }
          break;
        case Event::kNativeCheckpoint:
          if (!inflight_ && !evicting_ && config_.checkpointing_enabled) {
            start_checkpoint(CheckpointKind::kPeriodic);
          }
          break;
      }
    }
    if (exit_status) break;
    const Instant now = clock_.now();
    if (now >= next_tick) {
      log("progress", {{"step", std::to_string(step_.load())}});
      next_tick = std::max(next_tick + config_.poll_interval, now);
    }
    if (timer_driven && !inflight_ && !evicting_ && now >= next_ckpt) {
      next_ckpt = kNever;
      start_checkpoint(CheckpointKind::kPeriodic);
    }
  }

  if (poller) poller->stop();
  process_->wait();
  if (worker_.joinable()) {
    // A checkpoint racing the exit fails once the workload is gone; record it.
    worker_.join();
    std::deque<Event> rest;
    {
      std::lock_guard lock(queue_mu_);
      rest.swap(queue_);
    }
    for (const Event& e : rest) {
      if (e.type == Event::kCheckpointDone) finish_checkpoint(e.result);
    }
  }

  std::string digest_text;
  {
    std::lock_guard lock(marker_mu_);
    digest_text = digest_;
  }
  if (exit_status->success() && !digest_text.empty()) {
    return finish(OutcomeKind::kCompleted, digest_text, "");
  }
  if (stopped_by_plan || (evicting_ && exit_status->signal == SIGKILL)) {
    return finish(OutcomeKind::kEvicted, "", "");
  }
  return finish(OutcomeKind::kFailed, "",
                "workload exited with status " + std::to_string(exit_status->shell_code()));
}

RunOutcome execute_attempt(const CoordinatorConfig& config, bool resume_mode) {
  Attempt attempt(config, resume_mode);
  return attempt.execute();
}

}  // namespace

RunOutcome run(const CoordinatorConfig& config) { return execute_attempt(config, false); }

RunOutcome resume(const CoordinatorConfig& config) { return execute_attempt(config, true); }

}  // namespace spoton
