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


#include "spoton/ledger.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <stdexcept>
#include <system_error>

namespace spoton {
namespace {

bool is_plain(char c) {
  return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '.' ||
         c == '_' || c == '-' || c == ':' || c == '/' || c == ',' || c == '+';
}

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

uint64_t to_u64(const std::optional<std::string>& text, uint64_t fallback = 0) {
  if (!text) return fallback;
  uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text->data(), text->data() + text->size(), v);
  return (ec == std::errc{} && ptr == text->data() + text->size()) ? v : fallback;
}

}  // namespace

std::optional<std::string> LedgerRecord::get(std::string_view key) const {
  for (const auto& [k, v] : fields) {
    if (k == key) return v;
  }
  return std::nullopt;
}

std::string percent_encode(std::string_view text) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  out.reserve(text.size());
  for (const char c : text) {
    if (is_plain(c)) {
      out.push_back(c);
    } else {
      const auto u = static_cast<unsigned char>(c);
      out.push_back('%');
      out.push_back(kHex[u >> 4]);
      out.push_back(kHex[u & 0xf]);
    }
  }
  return out;
}

std::string percent_decode(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '%') {
      if (i + 2 >= text.size()) {
        throw std::invalid_argument("truncated percent escape");
      }
      const int hi = hex_value(text[i + 1]);
      const int lo = hex_value(text[i + 2]);
      if (hi < 0 || lo < 0) throw std::invalid_argument("bad percent escape");
      out.push_back(static_cast<char>(hi * 16 + lo));
      i += 2;
    } else {
      out.push_back(text[i]);
    }
  }
  return out;
}

std::string format_record(const LedgerRecord& record) {
  std::string line = format_iso8601(record.time) + " " + record.kind;
  for (const auto& [k, v] : record.fields) {
    line += " " + k + "=" + percent_encode(v);
  }
  return line;
}

LedgerRecord parse_record(std::string_view line) {
  std::vector<std::string_view> tokens;
  size_t pos = 0;
  while (pos < line.size()) {
    const size_t next = line.find(' ', pos);
    const auto token = line.substr(pos, next == std::string_view::npos ? next : next - pos);
    if (!token.empty()) tokens.push_back(token);
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  if (tokens.size() < 2) throw std::invalid_argument("ledger line needs a timestamp and a kind");
  LedgerRecord r;
  const auto time = parse_iso8601(tokens[0]);
  if (!time) throw std::invalid_argument("bad ledger timestamp: " + std::string(tokens[0]));
  r.time = *time;
  r.kind = std::string(tokens[1]);
  for (size_t i = 2; i < tokens.size(); ++i) {
    const size_t eq = tokens[i].find('=');
    if (eq == std::string_view::npos || eq == 0) {
      throw std::invalid_argument("bad ledger field: " + std::string(tokens[i]));
    }
    r.fields.emplace_back(std::string(tokens[i].substr(0, eq)),
                          percent_decode(tokens[i].substr(eq + 1)));
  }
  return r;
}

std::filesystem::path ledger_path(const std::filesystem::path& store_root) {
  return store_root / "ledger" / "events.log";
}

LedgerWriter::LedgerWriter(const std::filesystem::path& store_root, Clock clock) : clock_(clock) {
  const auto path = ledger_path(store_root);
  std::filesystem::create_directories(path.parent_path());
  file_ = std::fopen(path.c_str(), "a");
  if (file_ == nullptr) throw std::runtime_error("cannot open ledger " + path.string());
}

LedgerWriter::~LedgerWriter() {
  if (file_ != nullptr) std::fclose(file_);
}

void LedgerWriter::append(std::string kind,
                          std::vector<std::pair<std::string, std::string>> fields) {
  std::lock_guard lock(mu_);
  const std::string line =
      format_record(LedgerRecord{clock_.now(), std::move(kind), std::move(fields)}) + "\n";
  std::fputs(line.c_str(), file_);
  std::fflush(file_);
}

std::string_view to_string(EndReason reason) {
  switch (reason) {
    case EndReason::kCompleted: return "completed";
    case EndReason::kEvicted: return "evicted";
    case EndReason::kFailed: return "failed";
    case EndReason::kUnknown: break;
  }
  return "unknown";
}

EndReason parse_end_reason(std::string_view text) {
  if (text == "completed") return EndReason::kCompleted;
  if (text == "evicted") return EndReason::kEvicted;
  if (text == "failed") return EndReason::kFailed;
  return EndReason::kUnknown;
}

bool RunLedger::completed() const {
  return !attempts.empty() && attempts.back().end_reason == EndReason::kCompleted;
}

std::string RunLedger::final_digest() const {
  return completed() ? attempts.back().digest : std::string();
}

RunLedger build_ledger(const std::vector<LedgerRecord>& all) {
  // Only the last run segment counts: a fresh `run` starts a new one.
  size_t first = 0;
  for (size_t i = 0; i < all.size(); ++i) {
    if (all[i].kind == "attempt_start" && all[i].get("mode") == "run") first = i;
  }

  RunLedger ledger;
  std::map<uint64_t, size_t> index;
  std::map<std::string, std::pair<Instant, std::optional<Instant>>> stages;
  std::vector<std::string> stage_order;
  std::optional<Instant> last_time;

  auto attempt_for = [&](const LedgerRecord& r) -> AttemptEntry& {
    const uint64_t id = to_u64(r.get("attempt"));
    auto it = index.find(id);
    if (it == index.end()) {
      AttemptEntry a;
      a.attempt_id = id;
      a.start = r.time;
      a.end = r.time;
      ledger.attempts.push_back(a);
      it = index.emplace(id, ledger.attempts.size() - 1).first;
    }
    AttemptEntry& a = ledger.attempts[it->second];
    a.end = std::max(a.end, r.time);
    if (auto step = r.get("step")) a.last_step = std::max(a.last_step, to_u64(step));
    return a;
  };

  for (size_t i = first; i < all.size(); ++i) {
    const LedgerRecord& r = all[i];
    last_time = r.time;
    if (r.kind == "attempt_start") {
      AttemptEntry& a = attempt_for(r);
      a.start = r.time;
      if (auto seq = r.get("resume_seq"); seq && *seq != "none") a.resumed_from = to_u64(seq);
      a.resume_step = to_u64(r.get("resume_step"));
      a.last_step = std::max(a.last_step, a.resume_step);
    } else if (r.kind == "restore_failed") {
      attempt_for(r).fallback_chain.push_back(to_u64(r.get("seq")));
    } else if (r.kind == "progress" || r.kind == "restore_fallback") {
      attempt_for(r);
    } else if (r.kind == "stage_begin" || r.kind == "stage_end") {
      attempt_for(r);
      const std::string name = r.get("stage").value_or("");
      auto it = stages.find(name);
      if (it == stages.end()) {
        if (r.kind == "stage_end") continue;
        stages.emplace(name, std::make_pair(r.time, std::optional<Instant>()));
        stage_order.push_back(name);
      } else if (r.kind == "stage_end") {
        it->second.second = r.time;
      }
    } else if (r.kind == "checkpoint") {
      attempt_for(r);
      CheckpointEntry c;
      c.attempt_id = to_u64(r.get("attempt"));
      if (auto seq = r.get("seq")) c.sequence = to_u64(seq);
      c.kind = parse_checkpoint_kind(r.get("kind").value_or("")).value_or(CheckpointKind::kPeriodic);
      c.finished = r.time;
      c.started = parse_iso8601(r.get("started").value_or("")).value_or(r.time);
      c.ok = r.get("ok") == "true";
      c.step = to_u64(r.get("step"));
      c.error = r.get("error").value_or("");
      ledger.checkpoints.push_back(std::move(c));
    } else if (r.kind == "eviction") {
      attempt_for(r);
      EvictionEntry e;
      e.attempt_id = to_u64(r.get("attempt"));
      e.event_id = r.get("event").value_or("");
      e.notice_time = r.time;
      e.deadline = parse_iso8601(r.get("deadline").value_or("")).value_or(r.time);
      e.action = r.get("action").value_or("");
      e.reason = r.get("reason").value_or("");
      ledger.evictions.push_back(std::move(e));
    } else if (r.kind == "eviction_result") {
      attempt_for(r);
      const uint64_t id = to_u64(r.get("attempt"));
      for (auto it = ledger.evictions.rbegin(); it != ledger.evictions.rend(); ++it) {
        if (it->attempt_id == id) {
          it->termination_ckpt_ok = r.get("termination_ckpt_ok") == "true";
          break;
        }
      }
    } else if (r.kind == "attempt_end") {
      AttemptEntry& a = attempt_for(r);
      a.end = r.time;
      a.end_reason = parse_end_reason(r.get("reason").value_or(""));
      a.digest = r.get("digest").value_or("");
    }
  }

  for (auto& e : ledger.evictions) {
    const auto it = index.find(e.attempt_id);
    if (it == index.end() || it->second + 1 >= ledger.attempts.size()) continue;
    const AttemptEntry& evicted = ledger.attempts[it->second];
    const AttemptEntry& next = ledger.attempts[it->second + 1];
    e.lost_steps = evicted.last_step > next.resume_step ? evicted.last_step - next.resume_step : 0;
  }
  for (const auto& name : stage_order) {
    const auto& [begin, end] = stages.at(name);
    if (end) ledger.stage_times.emplace_back(name, *end - begin);
  }
  if (!ledger.attempts.empty()) {
    const Instant start = ledger.attempts.front().start;
    const Instant end = ledger.completed() ? ledger.attempts.back().end : *last_time;
    ledger.makespan = end - start;
  }
  return ledger;
}

std::vector<LedgerRecord> load_records(const std::filesystem::path& store_root) {
  std::vector<LedgerRecord> records;
  std::ifstream in(ledger_path(store_root));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      records.push_back(parse_record(line));
    } catch (const std::invalid_argument&) {
      // A coordinator killed mid-write can leave a torn last line.
    }
  }
  return records;
}

RunLedger load_ledger(const std::filesystem::path& store_root) {
  return build_ledger(load_records(store_root));
}

}  // namespace spoton
