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

#include "spoton/cloudmock.hpp"

#include <signal.h>
#include <unistd.h>

#include <cmath>
#include <cstdio>

#include <httplib.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

namespace spoton {
namespace {

using nlohmann::json;

bool is_loopback(const std::string& address) {
  return address == "localhost" || address == "::1" || address.rfind("127.", 0) == 0;
}

json event_json(const EvictionEvent& e) {
  return {{"EventId", e.event_id},
          {"EventStatus", e.event_status},
          {"EventType", std::string(to_string(e.event_type))},
          {"ResourceType", e.resource_type},
          {"Resources", e.resources},
          {"NotBefore", e.not_before}};
}

void reply_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

}  // namespace

MetadataMock::MetadataMock(MockOptions options) : options_(std::move(options)) {
  state_.document_incarnation = 1;
}

MetadataMock::~MetadataMock() { stop(); }

void MetadataMock::start() {
  if (server_) return;
  if (!options_.allow_non_loopback && !is_loopback(options_.bind_address)) {
    throw MockError("refusing to bind metadata mock to non-loopback address " +
                    options_.bind_address);
  }
  server_ = std::make_unique<httplib::Server>();
  server_->new_task_queue = [] { return new httplib::ThreadPool(4); };

  server_->Get("/metadata/scheduledevents", [this](const httplib::Request& req,
                                                   httplib::Response& res) {
    if (req.get_header_value("Metadata") != "true") {
      reply_json(res, 400,
                 {{"error", "Bad request. Required metadata header not specified"}});
      return;
    }
    res.status = 200;
    res.set_content(to_json(document()), "application/json");
  });

  server_->Post("/admin/evict", [this](const httplib::Request& req, httplib::Response& res) {
    const json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.contains("delay_seconds") || !body["delay_seconds"].is_number()) {
      reply_json(res, 400, {{"error", "expected {\"delay_seconds\": n}"}});
      return;
    }
    try {
      const std::string id = trigger_eviction(Duration(body["delay_seconds"].get<double>()));
      const MockSnapshot s = state();
      reply_json(res, 200, {{"event_id", id}, {"not_before", s.pending ? s.pending->not_before : ""}});
    } catch (const MockError& e) {
      reply_json(res, 409, {{"error", e.what()}});
    }
  });

  server_->Post("/admin/register", [this](const httplib::Request& req, httplib::Response& res) {
    const json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.contains("pid") || !body["pid"].is_number_integer() ||
        body["pid"].get<int64_t>() <= 0) {
      reply_json(res, 400, {{"error", "expected {\"pid\": n}"}});
      return;
    }
    register_target(static_cast<pid_t>(body["pid"].get<int64_t>()));
    reply_json(res, 200, {{"registered", body["pid"]}});
  });

  server_->Get("/admin/state", [this](const httplib::Request&, httplib::Response& res) {
    const MockSnapshot s = state();
    json j = {{"document_incarnation", s.document_incarnation},
              {"pending", s.pending ? event_json(*s.pending) : json(nullptr)},
              {"registered_pid", s.registered_pid ? json(*s.registered_pid) : json(nullptr)},
              {"min_notice_seconds", options_.min_notice.count()},
              {"kill_at_deadline", options_.kill_at_deadline},
              {"kills", s.kills}};
    reply_json(res, 200, j);
  });

  if (options_.port == 0) {
    port_ = server_->bind_to_any_port(options_.bind_address);
  } else {
    port_ = server_->bind_to_port(options_.bind_address, options_.port) ? options_.port : -1;
  }
  if (port_ <= 0) {
    server_.reset();
    throw MockError("cannot bind metadata mock to " + options_.bind_address + ":" +
                    std::to_string(options_.port));
  }
  {
    std::lock_guard lock(mu_);
    stopping_ = false;
  }
  server_thread_ = std::thread([this] { server_->listen_after_bind(); });
  reaper_thread_ = std::thread([this] { reaper_loop(); });
  server_->wait_until_ready();
}

void MetadataMock::stop() {
  {
    std::lock_guard lock(mu_);
    stopping_ = true;
  }
  cv_.notify_all();
  if (server_) server_->stop();
  if (server_thread_.joinable()) server_thread_.join();
  if (reaper_thread_.joinable()) reaper_thread_.join();
  if (planner_thread_.joinable()) planner_thread_.join();
  server_.reset();
}

std::string MetadataMock::endpoint_url() const {
  return "http://127.0.0.1:" + std::to_string(port_) +
         "/metadata/scheduledevents?api-version=2020-07-01";
}

void MetadataMock::set_pending_locked(std::optional<EvictionEvent> event,
                                      std::optional<Instant> deadline) {
  state_.pending = std::move(event);
  state_.pending_deadline = deadline;
  ++state_.document_incarnation;
  cv_.notify_all();
}

std::string MetadataMock::trigger_eviction(Duration delay) {
  std::lock_guard lock(mu_);
  if (state_.pending) throw MockError("an eviction is already pending");
  const Duration notice = std::max(delay, options_.min_notice);
  const Instant deadline =
      from_unix_seconds(std::ceil(to_unix_seconds(options_.clock.now() + notice)));
  char id[48];
  std::snprintf(id, sizeof id, "spoton-preempt-%d-%04llu", static_cast<int>(::getpid()),
                static_cast<unsigned long long>(++event_counter_));
  EvictionEvent e;
  e.event_id = id;
  e.event_type = EventType::kPreempt;
  e.event_status = "Scheduled";
  e.resource_type = "VirtualMachine";
  e.resources = {options_.instance_name};
  e.not_before = format_rfc1123(deadline);
  set_pending_locked(e, deadline);
  spdlog::info("mock: {} scheduled, NotBefore {}", e.event_id, e.not_before);
  return e.event_id;
}

void MetadataMock::publish(EvictionEvent event) {
  std::lock_guard lock(mu_);
  const auto deadline = parse_rfc1123(event.not_before);
  set_pending_locked(std::move(event), deadline);
}

void MetadataMock::schedule_evictions(std::vector<std::pair<Duration, Duration>> plan) {
  for (size_t i = 1; i < plan.size(); ++i) {
    if (!(plan[i].first > plan[i - 1].first)) {
      throw MockError("eviction plan times must be strictly increasing");
    }
  }
  if (planner_thread_.joinable()) planner_thread_.join();
  const Instant origin = options_.clock.now();
  planner_thread_ = std::thread([this, plan = std::move(plan), origin]() mutable {
    planner_loop(std::move(plan), origin);
  });
}

void MetadataMock::planner_loop(std::vector<std::pair<Duration, Duration>> plan, Instant origin) {
  for (const auto& [at, delay] : plan) {
    {
      std::unique_lock lock(mu_);
      if (cv_.wait_until(lock, options_.clock.to_real(origin + at), [this] { return stopping_; })) {
        return;
      }
    }
    try {
      trigger_eviction(delay);
    } catch (const MockError&) {
      spdlog::info("mock: planned eviction at +{:.1f}s collapsed into the pending one", at.count());
    }
  }
}

void MetadataMock::register_target(pid_t pid) {
  std::lock_guard lock(mu_);
  state_.registered_pid = pid;
  const pid_t pgid = ::getpgid(pid);
  target_pgid_ = (pgid > 0 && pgid != ::getpgrp()) ? std::optional<pid_t>(pgid) : std::nullopt;
}

void MetadataMock::clear_target() {
  std::lock_guard lock(mu_);
  state_.registered_pid.reset();
  target_pgid_.reset();
}

void MetadataMock::kill_target_locked() {
  if (!options_.kill_at_deadline || !state_.registered_pid) return;
  // No graceful signal: the instance simply disappears.
  if (target_pgid_) {
    ::killpg(*target_pgid_, SIGKILL);
  } else {
    ::kill(*state_.registered_pid, SIGKILL);
  }
  ++state_.kills;
  spdlog::info("mock: reclaimed instance (pid {})", *state_.registered_pid);
  state_.registered_pid.reset();
  target_pgid_.reset();
}

void MetadataMock::reaper_loop() {
  std::unique_lock lock(mu_);
  while (!stopping_) {
    if (!state_.pending_deadline) {
      cv_.wait(lock, [this] { return stopping_ || state_.pending_deadline.has_value(); });
      continue;
    }
    const Instant deadline = *state_.pending_deadline;
    if (cv_.wait_until(lock, options_.clock.to_real(deadline), [this, deadline] {
          return stopping_ || !state_.pending_deadline || *state_.pending_deadline != deadline;
        })) {
      continue;
    }
    if (options_.clock.now() < deadline) continue;
    kill_target_locked();
    state_.last_kill_at = options_.clock.now();
    set_pending_locked(std::nullopt, std::nullopt);
  }
}

MockSnapshot MetadataMock::state() const {
  std::lock_guard lock(mu_);
  return state_;
}

EventsDocument MetadataMock::document() const {
  std::lock_guard lock(mu_);
  EventsDocument doc;
  doc.document_incarnation = state_.document_incarnation;
  if (state_.pending) doc.events.push_back(*state_.pending);
  return doc;
}

bool MetadataMock::wait_until_clear(Duration timeout) const {
  std::unique_lock lock(mu_);
  return cv_.wait_for(lock, options_.clock.to_real(timeout),
                      [this] { return stopping_ || !state_.pending.has_value(); });
}

namespace {

json admin_post(const Endpoint& endpoint, const std::string& path, const json& body) {
  httplib::Client client(endpoint.host, endpoint.port);
  client.set_connection_timeout(std::chrono::seconds(2));
  client.set_read_timeout(std::chrono::seconds(5));
  auto res = client.Post(path, body.dump(), "application/json");
  if (!res) {
    throw MockError("POST " + endpoint.base_url() + path + " failed: " + httplib::to_string(res.error()));
  }
  const json reply = json::parse(res->body, nullptr, false);
  if (res->status != 200) {
    const std::string detail =
        reply.is_object() && reply.contains("error") ? reply["error"].dump() : res->body;
    throw MockError("POST " + path + " returned " + std::to_string(res->status) + ": " + detail);
  }
  return reply;
}

}  // namespace

std::string remote_trigger_eviction(const Endpoint& endpoint, Duration delay) {
  const json reply = admin_post(endpoint, "/admin/evict", {{"delay_seconds", delay.count()}});
  return reply.value("event_id", std::string());
}

void remote_register_target(const Endpoint& endpoint, pid_t pid) {
  admin_post(endpoint, "/admin/register", {{"pid", static_cast<int64_t>(pid)}});
}

}  // namespace spoton
