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

#include "spoton/clock.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <stdexcept>
#include <thread>

namespace spoton {
namespace {

constexpr std::array<std::string_view, 7> kWeekdays = {"Sun", "Mon", "Tue", "Wed",
                                                       "Thu", "Fri", "Sat"};
constexpr std::array<std::string_view, 12> kMonths = {"Jan", "Feb", "Mar", "Apr",
                                                      "May", "Jun", "Jul", "Aug",
                                                      "Sep", "Oct", "Nov", "Dec"};

std::tm to_utc_tm(Instant t, double* fraction) {
  const double s = to_unix_seconds(t);
  const double whole = std::floor(s);
  if (fraction != nullptr) *fraction = s - whole;
  const std::time_t tt = static_cast<std::time_t>(whole);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  return tm;
}

bool parse_uint(std::string_view& in, size_t digits, int* out) {
  if (in.size() < digits) return false;
  int v = 0;
  for (size_t i = 0; i < digits; ++i) {
    const char c = in[i];
    if (c < '0' || c > '9') return false;
    v = v * 10 + (c - '0');
  }
  in.remove_prefix(digits);
  *out = v;
  return true;
}

bool consume(std::string_view& in, char c) {
  if (in.empty() || in.front() != c) return false;
  in.remove_prefix(1);
  return true;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

}  // namespace

Clock::Clock(double scale, Instant anchor) : scale_(scale), anchor_(anchor) {
  if (!(scale > 0.0)) throw std::invalid_argument("clock scale must be > 0");
}

Instant Clock::now() const {
  const Instant real = std::chrono::time_point_cast<Duration>(std::chrono::system_clock::now());
  if (scale_ == 1.0) return real;
  return anchor_ + (real - anchor_) * scale_;
}

std::chrono::nanoseconds Clock::to_real(Duration emulated) const {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(emulated / scale_);
}

std::chrono::system_clock::time_point Clock::to_real(Instant t) const {
  const Instant real = scale_ == 1.0 ? t : anchor_ + (t - anchor_) / scale_;
  return std::chrono::time_point_cast<std::chrono::system_clock::duration>(real);
}

void Clock::sleep_for(Duration emulated) const {
  if (emulated.count() <= 0) return;
  std::this_thread::sleep_for(to_real(emulated));
}

void Clock::sleep_until(Instant t) const { std::this_thread::sleep_until(to_real(t)); }

std::string format_rfc1123(Instant t) {
  const std::tm tm = to_utc_tm(t, nullptr);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s, %02d %s %04d %02d:%02d:%02d GMT",
                kWeekdays[static_cast<size_t>(tm.tm_wday)].data(), tm.tm_mday,
                kMonths[static_cast<size_t>(tm.tm_mon)].data(), tm.tm_year + 1900, tm.tm_hour,
                tm.tm_min, tm.tm_sec);
  return buf;
}

std::optional<Instant> parse_rfc1123(std::string_view text) {
  std::string_view in = trim(text);
  // Optional "Ddd, " prefix; the weekday is not cross-checked.
  if (in.size() >= 5 && in[3] == ',') {
    bool known = false;
    for (auto d : kWeekdays) known = known || in.substr(0, 3) == d;
    if (!known) return std::nullopt;
    in.remove_prefix(4);
    in = trim(in);
  }
  std::tm tm{};
  int day = 0;
  if (!parse_uint(in, in.size() > 1 && in[1] == ' ' ? 1 : 2, &day)) return std::nullopt;
  if (!consume(in, ' ') || in.size() < 3) return std::nullopt;
  int month = -1;
  for (size_t i = 0; i < kMonths.size(); ++i) {
    if (in.substr(0, 3) == kMonths[i]) month = static_cast<int>(i);
  }
  if (month < 0) return std::nullopt;
  in.remove_prefix(3);
  int year = 0, hour = 0, minute = 0, sec = 0;
  if (!consume(in, ' ') || !parse_uint(in, 4, &year) || !consume(in, ' ') ||
      !parse_uint(in, 2, &hour) || !consume(in, ':') || !parse_uint(in, 2, &minute) ||
      !consume(in, ':') || !parse_uint(in, 2, &sec)) {
    return std::nullopt;
  }
  in = trim(in);
  if (!(in.empty() || in == "GMT" || in == "UTC")) return std::nullopt;
  if (day < 1 || day > 31 || hour > 23 || minute > 59 || sec > 60) return std::nullopt;
  tm.tm_mday = day;
  tm.tm_mon = month;
  tm.tm_year = year - 1900;
  tm.tm_hour = hour;
  tm.tm_min = minute;
  tm.tm_sec = sec;
  const std::time_t tt = timegm(&tm);
  return from_unix_seconds(static_cast<double>(tt));
}

std::string format_iso8601(Instant t) {
  // Round to the nearest millisecond; doubles near 1.7e9 s sit a hair off.
  const long long total_ms = std::llround(to_unix_seconds(t) * 1000.0);
  long long secs = total_ms / 1000;
  int millis = static_cast<int>(total_ms % 1000);
  if (millis < 0) {
    millis += 1000;
    --secs;
  }
  const std::time_t tt = static_cast<std::time_t>(secs);
  std::tm tm{};
  ::gmtime_r(&tt, &tm);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900,
                tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, millis);
  return buf;
}

std::optional<Instant> parse_iso8601(std::string_view text) {
  std::string_view in = trim(text);
  int year = 0, month = 0, day = 0, hour = 0, minute = 0, sec = 0, millis = 0;
  if (!parse_uint(in, 4, &year) || !consume(in, '-') || !parse_uint(in, 2, &month) ||
      !consume(in, '-') || !parse_uint(in, 2, &day) || !consume(in, 'T') ||
      !parse_uint(in, 2, &hour) || !consume(in, ':') || !parse_uint(in, 2, &minute) ||
      !consume(in, ':') || !parse_uint(in, 2, &sec)) {
    return std::nullopt;
  }
  if (consume(in, '.') && !parse_uint(in, 3, &millis)) return std::nullopt;
  if (!consume(in, 'Z') || !in.empty()) return std::nullopt;
  std::tm tm{};
  tm.tm_year = year - 1900;
  tm.tm_mon = month - 1;
  tm.tm_mday = day;
  tm.tm_hour = hour;
  tm.tm_min = minute;
  tm.tm_sec = sec;
  return from_unix_seconds(static_cast<double>(timegm(&tm)) + millis / 1000.0);
}

}  // namespace spoton
