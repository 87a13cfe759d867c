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

#ifndef SPOTON_CLOCK_HPP_
#define SPOTON_CLOCK_HPP_

#include <chrono>
#include <optional>
#include <string>
#include <string_view>

namespace spoton {

/// Seconds as a floating-point count. All configured durations use this.
using Duration = std::chrono::duration<double>;

/// A point on the (possibly emulated) wall clock, UTC.
using Instant = std::chrono::time_point<std::chrono::system_clock, Duration>;

inline Duration seconds(double s) { return Duration(s); }

inline Instant from_unix_seconds(double s) { return Instant(Duration(s)); }
inline double to_unix_seconds(Instant t) { return t.time_since_epoch().count(); }

/// Wall clock that can run faster than real time.
///
/// Emulated time is `anchor + (real - anchor) * scale`. Every process that
/// shares a drill must use the same anchor and scale so that absolute
/// timestamps (e.g. an event's NotBefore) agree across processes. With
/// scale == 1 the anchor is irrelevant and the clock is the system clock.
class Clock {
 public:
  Clock() = default;
  Clock(double scale, Instant anchor);

  Instant now() const;
  double scale() const { return scale_; }
  Instant anchor() const { return anchor_; }

  /// Real-time equivalent of an emulated interval.
  std::chrono::nanoseconds to_real(Duration emulated) const;
  /// Real system-clock instant at which emulated time `t` is reached.
  std::chrono::system_clock::time_point to_real(Instant t) const;

  void sleep_for(Duration emulated) const;
  void sleep_until(Instant t) const;

 private:
  double scale_ = 1.0;
  Instant anchor_{};
};

/// "Mon, 19 Sep 2016 18:29:47 GMT". Sub-second parts are truncated.
std::string format_rfc1123(Instant t);

/// Accepts the format above; the trailing zone may be "GMT", "UTC" or
/// absent. Returns nullopt on anything else.
std::optional<Instant> parse_rfc1123(std::string_view text);

/// "2026-10-16T12:00:00.123Z" (millisecond precision).
std::string format_iso8601(Instant t);
std::optional<Instant> parse_iso8601(std::string_view text);

}  // namespace spoton

#endif  // SPOTON_CLOCK_HPP_
