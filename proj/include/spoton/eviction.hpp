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

// Client side of the Scheduled Events metadata protocol.
//
// Wire format of GET <base>/metadata/scheduledevents (header "Metadata: true"):
//
//   {"DocumentIncarnation": 2,
//    "Events": [{"EventId": "...", "EventStatus": "Scheduled",
//                "EventType": "Preempt", "ResourceType": "VirtualMachine",
//                "Resources": ["vm-0"], "NotBefore": "Mon, 19 Sep 2016 18:29:47 GMT"}]}

#ifndef SPOTON_EVICTION_HPP_
#define SPOTON_EVICTION_HPP_

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "spoton/clock.hpp"

namespace spoton {

enum class EventType { kPreempt, kReboot, kRedeploy, kFreeze, kTerminate, kOther };

std::string_view to_string(EventType type);
EventType parse_event_type(std::string_view text);

struct EvictionEvent {
  std::string event_id;
  EventType event_type = EventType::kPreempt;
  std::string event_status = "Scheduled";
  std::string resource_type = "VirtualMachine";
  std::vector<std::string> resources;
  /// Raw NotBefore text as served; may be empty or unparseable.
  std::string not_before;

  bool operator==(const EvictionEvent&) const = default;
};

struct EventsDocument {
  int64_t document_incarnation = 0;
  std::vector<EvictionEvent> events;

  bool operator==(const EventsDocument&) const = default;
};

std::string to_json(const EventsDocument& doc);
/// Throws std::invalid_argument on a malformed body.
EventsDocument parse_events_document(std::string_view body);

struct EvictionNotice {
  std::string event_id;
  Instant deadline{};
  Instant detected_at{};
};

/// Retryable failure of one poll (network, non-200, malformed body).
class PollError : public std::runtime_error {
 public:
  PollError(const std::string& what, int status) : std::runtime_error(what), status_(status) {}
  /// HTTP status, or 0 when no response was received.
  int status() const { return status_; }

 private:
  int status_;
};

struct Endpoint {
  std::string scheme = "http";
  std::string host = "127.0.0.1";
  int port = 80;
  /// Path plus query, e.g. "/metadata/scheduledevents?api-version=2020-07-01".
  std::string target = "/metadata/scheduledevents";

  std::string base_url() const;
  std::string to_string() const;
};

/// Accepts http://host[:port][/path][?query]. Throws std::invalid_argument.
Endpoint parse_endpoint(std::string_view url);

/// One GET with the Metadata header. Throws PollError.
EventsDocument poll(const Endpoint& endpoint, Duration timeout = Duration(2));
/// The same request without the Metadata header (for conformance checks).
EventsDocument poll_without_metadata_header(const Endpoint& endpoint);

/// Earliest-deadline Preempt event as a notice, if any. Pure; the order of
/// `doc.events` does not matter. An unparseable NotBefore yields
/// deadline == now.
std::optional<EvictionNotice> detect_preempt(const EventsDocument& doc, Instant now);

inline constexpr Duration kProtocolMinimumNotice{30.0};

struct NoticeBudget {
  Duration budget{0};
  /// Budget at first detection was below the protocol floor.
  bool anomaly = false;
};

/// max(deadline - now, 0), flagging budgets below `floor`.
NoticeBudget notice_budget(const EvictionNotice& notice, Instant now,
                           Duration floor = kProtocolMinimumNotice);

/// Periodically polls the endpoint and delivers each Preempt event at most
/// once. Poll failures are counted and retried on the next tick.
class EvictionPoller {
 public:
  using NoticeHandler = std::function<void(const EvictionNotice&)>;
  using TickHandler = std::function<void()>;

  EvictionPoller(Endpoint endpoint, Duration interval, Clock clock, NoticeHandler on_notice,
                 TickHandler on_tick = {});
  ~EvictionPoller();
  EvictionPoller(const EvictionPoller&) = delete;
  EvictionPoller& operator=(const EvictionPoller&) = delete;

  void start();
  void stop();

  uint64_t successful_polls() const { return ok_polls_.load(); }
  uint64_t failed_polls() const { return failed_polls_.load(); }

 private:
  void loop();

  Endpoint endpoint_;
  Duration interval_;
  Clock clock_;
  NoticeHandler on_notice_;
  TickHandler on_tick_;
  std::set<std::string> delivered_;
  int64_t last_incarnation_ = -1;
  std::atomic<uint64_t> ok_polls_{0};
  std::atomic<uint64_t> failed_polls_{0};
  std::mutex mu_;
  std::condition_variable cv_;
  bool stopping_ = false;
  std::thread thread_;
};

}  // namespace spoton

#endif  // SPOTON_EVICTION_HPP_
