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

#ifndef SPOTON_CLOUDMOCK_HPP_
#define SPOTON_CLOUDMOCK_HPP_

#include <sys/types.h>

#include <condition_variable>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "spoton/clock.hpp"
#include "spoton/eviction.hpp"

namespace httplib {
class Server;
}

namespace spoton {

struct MockOptions {
  std::string bind_address = "127.0.0.1";
  /// 0 picks a free port.
  int port = 0;
  bool allow_non_loopback = false;
  Duration min_notice = kProtocolMinimumNotice;
  /// Kill the registered target at NotBefore (instance reclamation).
  bool kill_at_deadline = true;
  std::string instance_name = "spoton-vm-0";
  Clock clock;
};

/// Observable state of the mock.
struct MockSnapshot {
  int64_t document_incarnation = 0;
  std::optional<EvictionEvent> pending;
  std::optional<Instant> pending_deadline;
  std::optional<pid_t> registered_pid;
  uint64_t kills = 0;
  std::optional<Instant> last_kill_at;
};

class MockError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Loopback emulation of the Scheduled Events endpoint plus an eviction
/// trigger. Endpoints:
///   GET  /metadata/scheduledevents   (requires "Metadata: true", else 400)
///   POST /admin/evict     {"delay_seconds": n}
///   POST /admin/register  {"pid": n}
///   GET  /admin/state
class MetadataMock {
 public:
  explicit MetadataMock(MockOptions options);
  ~MetadataMock();
  MetadataMock(const MetadataMock&) = delete;
  MetadataMock& operator=(const MetadataMock&) = delete;

  /// Binds and starts serving. Throws MockError on a non-loopback address
  /// (unless allowed) or bind failure.
  void start();
  void stop();

  int port() const { return port_; }
  /// http://127.0.0.1:<port>/metadata/scheduledevents?api-version=2020-07-01
  std::string endpoint_url() const;

  /// Creates a Preempt event with NotBefore = now + max(delay, min_notice),
  /// rounded up to a whole second. Throws MockError if one is pending.
  std::string trigger_eviction(Duration delay);
  /// Publishes an arbitrary event as the pending one (test hook). Its
  /// NotBefore, when parseable, becomes the kill deadline.
  void publish(EvictionEvent event);
  /// Fires trigger_eviction(delay) at each emulated offset from now. Offsets
  /// must be strictly increasing; a trigger that finds an event pending is
  /// dropped (overlapping events collapse to the earlier one).
  void schedule_evictions(std::vector<std::pair<Duration, Duration>> plan);

  /// Target whose process group is killed at the deadline. If the group is
  /// the mock's own, only the pid is killed.
  void register_target(pid_t pid);
  void clear_target();

  MockSnapshot state() const;
  EventsDocument document() const;
  /// Blocks until no eviction is pending or `timeout` (emulated) elapses.
  bool wait_until_clear(Duration timeout) const;

 private:
  void reaper_loop();
  void planner_loop(std::vector<std::pair<Duration, Duration>> plan, Instant origin);
  void set_pending_locked(std::optional<EvictionEvent> event, std::optional<Instant> deadline);
  void kill_target_locked();

  MockOptions options_;
  std::unique_ptr<httplib::Server> server_;
  std::thread server_thread_;
  std::thread reaper_thread_;
  std::thread planner_thread_;
  int port_ = 0;

  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  bool stopping_ = false;
  uint64_t event_counter_ = 0;
  MockSnapshot state_;
  std::optional<pid_t> target_pgid_;
};

// Admin client for a mock reachable over HTTP. `endpoint` is the metadata
// URL; the admin paths live on the same host and port. Throw MockError.

/// Returns the new event id.
std::string remote_trigger_eviction(const Endpoint& endpoint, Duration delay);
void remote_register_target(const Endpoint& endpoint, pid_t pid);

}  // namespace spoton

#endif  // SPOTON_CLOUDMOCK_HPP_
