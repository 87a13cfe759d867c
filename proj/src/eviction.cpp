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

#include "spoton/eviction.hpp"

#include <algorithm>
#include <charconv>

#include <httplib.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

namespace spoton {
namespace {

using nlohmann::json;

constexpr std::pair<EventType, std::string_view> kEventTypeNames[] = {
    {EventType::kPreempt, "Preempt"},     {EventType::kReboot, "Reboot"},
    {EventType::kRedeploy, "Redeploy"},   {EventType::kFreeze, "Freeze"},
    {EventType::kTerminate, "Terminate"},
};

EventsDocument get_document(const Endpoint& endpoint, bool with_header, Duration timeout) {
  if (endpoint.scheme != "http") throw PollError("unsupported scheme " + endpoint.scheme, 0);
  httplib::Client client(endpoint.host, endpoint.port);
  const auto usec = std::chrono::duration_cast<std::chrono::microseconds>(timeout);
  client.set_connection_timeout(usec);
  client.set_read_timeout(usec);
  httplib::Headers headers;
  if (with_header) headers.emplace("Metadata", "true");
  auto res = client.Get(endpoint.target, headers);
  if (!res) {
    throw PollError("GET " + endpoint.to_string() + " failed: " + httplib::to_string(res.error()), 0);
  }
  if (res->status != 200) {
    throw PollError("GET " + endpoint.to_string() + " returned " + std::to_string(res->status),
                    res->status);
  }
  try {
    return parse_events_document(res->body);
  } catch (const std::exception& e) {
    throw PollError(std::string("malformed events document: ") + e.what(), res->status);
  }
}

}  // namespace

std::string_view to_string(EventType type) {
  for (const auto& [t, name] : kEventTypeNames) {
    if (t == type) return name;
  }
  return "Other";
}

EventType parse_event_type(std::string_view text) {
  for (const auto& [t, name] : kEventTypeNames) {
    if (name == text) return t;
  }
  return EventType::kOther;
}

std::string to_json(const EventsDocument& doc) {
  json events = json::array();
  for (const auto& e : doc.events) {
    events.push_back({{"EventId", e.event_id},
                      {"EventStatus", e.event_status},
                      {"EventType", std::string(to_string(e.event_type))},
                      {"ResourceType", e.resource_type},
                      {"Resources", e.resources},
                      {"NotBefore", e.not_before}});
  }
  return json{{"DocumentIncarnation", doc.document_incarnation}, {"Events", std::move(events)}}
      .dump();
}

EventsDocument parse_events_document(std::string_view body) {
  const json j = json::parse(body, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object()) throw std::invalid_argument("body is not a JSON object");
  if (!j.contains("DocumentIncarnation") || !j["DocumentIncarnation"].is_number_integer()) {
    throw std::invalid_argument("DocumentIncarnation missing or not an integer");
  }
  if (!j.contains("Events") || !j["Events"].is_array()) {
    throw std::invalid_argument("Events missing or not an array");
  }
  EventsDocument doc;
  doc.document_incarnation = j["DocumentIncarnation"].get<int64_t>();
  for (const auto& ev : j["Events"]) {
    if (!ev.is_object()) throw std::invalid_argument("event is not an object");
    auto str = [&ev](const char* key, bool required) -> std::string {
      if (!ev.contains(key)) {
        if (required) throw std::invalid_argument(std::string("event missing ") + key);
        return {};
      }
      if (!ev[key].is_string()) throw std::invalid_argument(std::string(key) + " is not a string");
      return ev[key].get<std::string>();
    };
    EvictionEvent e;
    e.event_id = str("EventId", true);
    e.event_type = parse_event_type(str("EventType", true));
    e.event_status = str("EventStatus", false);
    e.resource_type = str("ResourceType", false);
    e.not_before = str("NotBefore", false);
    if (ev.contains("Resources")) {
      if (!ev["Resources"].is_array()) throw std::invalid_argument("Resources is not an array");
      for (const auto& r : ev["Resources"]) {
        if (!r.is_string()) throw std::invalid_argument("resource is not a string");
        e.resources.push_back(r.get<std::string>());
      }
    }
    doc.events.push_back(std::move(e));
  }
  return doc;
}

std::string Endpoint::base_url() const {
  return scheme + "://" + host + ":" + std::to_string(port);
}

std::string Endpoint::to_string() const { return base_url() + target; }

Endpoint parse_endpoint(std::string_view url) {
  Endpoint ep;
  const size_t sep = url.find("://");
  if (sep == std::string_view::npos) throw std::invalid_argument("endpoint needs a scheme: " + std::string(url));
  ep.scheme = std::string(url.substr(0, sep));
  if (ep.scheme != "http") throw std::invalid_argument("only http endpoints are supported");
  url.remove_prefix(sep + 3);
  const size_t slash = url.find_first_of("/?");
  std::string_view authority = url.substr(0, slash);
  ep.target = slash == std::string_view::npos ? "/metadata/scheduledevents" : std::string(url.substr(slash));
  if (!ep.target.empty() && ep.target.front() == '?') {
    ep.target = "/metadata/scheduledevents" + ep.target;
  }
  const size_t colon = authority.rfind(':');
  if (colon != std::string_view::npos) {
    const auto port = authority.substr(colon + 1);
    const auto [ptr, ec] = std::from_chars(port.data(), port.data() + port.size(), ep.port);
    if (ec != std::errc{} || ptr != port.data() + port.size() || ep.port <= 0 || ep.port > 65535) {
      throw std::invalid_argument("bad port in endpoint: " + std::string(port));
    }
    authority = authority.substr(0, colon);
  }
  if (authority.empty()) throw std::invalid_argument("endpoint has no host");
  ep.host = std::string(authority);
  return ep;
}

EventsDocument poll(const Endpoint& endpoint, Duration timeout) {
  return get_document(endpoint, true, timeout);
}

EventsDocument poll_without_metadata_header(const Endpoint& endpoint) {
  return get_document(endpoint, false, Duration(2));
}

std::optional<EvictionNotice> detect_preempt(const EventsDocument& doc, Instant now) {
  std::optional<EvictionNotice> best;
  for (const auto& e : doc.events) {
    if (e.event_type != EventType::kPreempt) continue;
    const Instant deadline = parse_rfc1123(e.not_before).value_or(now);
    // Ties broken on event id so the result does not depend on list order.
    if (!best || deadline < best->deadline ||
        (deadline == best->deadline && e.event_id < best->event_id)) {
      best = EvictionNotice{e.event_id, deadline, now};
    }
  }
  return best;
}

NoticeBudget notice_budget(const EvictionNotice& notice, Instant now, Duration floor) {
  NoticeBudget b;
  b.budget = std::max(notice.deadline - now, Duration(0));
  b.anomaly = b.budget < floor;
  return b;
}

EvictionPoller::EvictionPoller(Endpoint endpoint, Duration interval, Clock clock,
                               NoticeHandler on_notice, TickHandler on_tick)
    : endpoint_(std::move(endpoint)),
      interval_(interval),
      clock_(clock),
      on_notice_(std::move(on_notice)),
      on_tick_(std::move(on_tick)) {}

EvictionPoller::~EvictionPoller() { stop(); }

void EvictionPoller::start() {
  if (thread_.joinable()) return;
  stopping_ = false;
  thread_ = std::thread([this] { loop(); });
}

void EvictionPoller::stop() {
  {
    std::lock_guard lock(mu_);
    stopping_ = true;
  }
  cv_.notify_all();
  if (thread_.joinable()) thread_.join();
}

void EvictionPoller::loop() {
  // The HTTP timeout stays below one tick so a dead endpoint cannot stall
  // detection for longer than a tick.
  const Duration timeout = std::min(Duration(2), std::max(interval_ / clock_.scale(), Duration(0.05)));
  for (;;) {
    const auto tick_start = std::chrono::steady_clock::now();
    try {
      const EventsDocument doc = poll(endpoint_, timeout);
      ok_polls_.fetch_add(1);
      if (doc.document_incarnation < last_incarnation_) {
        spdlog::warn("scheduled events: DocumentIncarnation went backwards ({} -> {})",
                     last_incarnation_, doc.document_incarnation);
      }
      last_incarnation_ = doc.document_incarnation;
      if (auto notice = detect_preempt(doc, clock_.now())) {
        if (delivered_.insert(notice->event_id).second) on_notice_(*notice);
      }
    } catch (const PollError& e) {
      failed_polls_.fetch_add(1);
      spdlog::debug("scheduled events poll failed: {}", e.what());
    }
    if (on_tick_) on_tick_();
    std::unique_lock lock(mu_);
    if (cv_.wait_until(lock, tick_start + clock_.to_real(interval_), [this] { return stopping_; })) {
      return;
    }
  }
}

}  // namespace spoton
