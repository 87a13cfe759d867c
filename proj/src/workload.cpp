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

#include "spoton/workload.hpp"

#include <poll.h>
#include <unistd.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstring>
#include <fstream>
#include <set>
#include <system_error>
#include <thread>

#include "spoton/hash.hpp"

namespace spoton {
namespace {

constexpr uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
constexpr char kMagic[4] = {'S', 'P', 'W', 'S'};
constexpr uint16_t kVersion = 1;

void put_u16(std::vector<std::byte>& out, uint16_t v) {
  for (int i = 0; i < 2; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xff));
}
void put_u32(std::vector<std::byte>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xff));
}
void put_u64(std::vector<std::byte>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xff));
}
uint64_t get_le(std::span<const std::byte> in, size_t offset, size_t width) {
  uint64_t v = 0;
  for (size_t i = 0; i < width; ++i) {
    v |= static_cast<uint64_t>(in[offset + i]) << (8 * i);
  }
  return v;
}

// Skips stages with zero steps so that a non-final state always points at a
// runnable step.
WorkloadState normalize(const WorkloadSpec& spec, WorkloadState s) {
  while (s.stage_index < spec.stages.size() && s.step_index >= spec.stages[s.stage_index].steps) {
    ++s.stage_index;
    s.step_index = 0;
  }
  return s;
}

}  // namespace

WorkloadSpec WorkloadSpec::assembly_like(uint32_t steps_per_stage, uint64_t seed) {
  WorkloadSpec spec;
  for (const char* name : {"K33", "K55", "K77", "K99", "K127"}) {
    spec.stages.push_back({name, steps_per_stage});
  }
  spec.seed = seed;
  return spec;
}

uint64_t WorkloadSpec::total_steps() const {
  uint64_t total = 0;
  for (const auto& s : stages) total += s.steps;
  return total;
}

uint64_t WorkloadSpec::fingerprint() const {
  uint64_t h = kFnvOffsetBasis;
  auto fold = [&h](uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xff;
      h *= kFnvPrime;
    }
  };
  fold(stages.size());
  for (const auto& s : stages) fold(s.steps);
  fold(seed);
  return h;
}

void WorkloadSpec::validate() const {
  std::set<std::string_view> seen;
  for (const auto& s : stages) {
    if (s.name.empty()) throw std::invalid_argument("stage name must not be empty");
    if (s.name.find_first_of(" \t\r\n,:") != std::string::npos) {
      throw std::invalid_argument("stage name '" + s.name + "' contains a separator");
    }
    if (!seen.insert(s.name).second) {
      throw std::invalid_argument("duplicate stage name '" + s.name + "'");
    }
  }
}

std::vector<StageSpec> parse_stage_list(std::string_view text) {
  std::vector<StageSpec> stages;
  while (!text.empty()) {
    const size_t comma = text.find(',');
    std::string_view item = text.substr(0, comma);
    text = comma == std::string_view::npos ? std::string_view{} : text.substr(comma + 1);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (item.empty()) continue;
    const size_t colon = item.rfind(':');
    if (colon == std::string_view::npos || colon == 0) {
      throw std::invalid_argument("stage '" + std::string(item) + "' is not NAME:STEPS");
    }
    uint32_t steps = 0;
    const auto num = item.substr(colon + 1);
    const auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), steps);
    if (ec != std::errc{} || ptr != num.data() + num.size()) {
      throw std::invalid_argument("stage '" + std::string(item) + "' has a bad step count");
    }
    stages.push_back({std::string(item.substr(0, colon)), steps});
  }
  return stages;
}

std::string format_stage_list(std::span<const StageSpec> stages) {
  std::string out;
  for (const auto& s : stages) {
    if (!out.empty()) out += ',';
    out += s.name + ':' + std::to_string(s.steps);
  }
  return out;
}

uint64_t initial_accumulator(uint64_t seed) { return mix64(seed + kGolden); }

uint64_t step_hash(uint64_t accumulator, uint32_t stage_index, uint32_t step_index,
                   uint64_t seed) {
  const uint64_t key = (static_cast<uint64_t>(stage_index) << 32) | step_index;
  return mix64(accumulator ^ (seed + kGolden * (key + 1)));
}

WorkloadState initial_state(const WorkloadSpec& spec) {
  return normalize(spec, WorkloadState{0, 0, initial_accumulator(spec.seed), spec.seed});
}

bool at_end(const WorkloadSpec& spec, const WorkloadState& state) {
  return state.stage_index >= spec.stages.size();
}

WorkloadState step(const WorkloadSpec& spec, WorkloadState state) {
  if (at_end(spec, state)) throw std::logic_error("step() on a finished workload");
  state.accumulator =
      step_hash(state.accumulator, state.stage_index, state.step_index, state.seed);
  ++state.step_index;
  return normalize(spec, state);
}

bool at_stage_boundary(const WorkloadSpec& spec, const WorkloadState& state) {
  return state.step_index == 0 || at_end(spec, state);
}

uint64_t global_step(const WorkloadSpec& spec, const WorkloadState& state) {
  uint64_t done = 0;
  for (uint32_t i = 0; i < state.stage_index && i < spec.stages.size(); ++i) {
    done += spec.stages[i].steps;
  }
  return done + state.step_index;
}

ProgressMarker marker_of(const WorkloadSpec& spec, const WorkloadState& state) {
  if (spec.stages.empty()) return {};
  if (at_end(spec, state)) return {spec.stages.back().name, spec.stages.back().steps};
  return {spec.stages[state.stage_index].name, state.step_index};
}

uint64_t global_step(const WorkloadSpec& spec, const ProgressMarker& marker) {
  uint64_t done = 0;
  for (const auto& s : spec.stages) {
    if (s.name == marker.stage_name) return done + std::min(marker.step_index, s.steps);
    done += s.steps;
  }
  return 0;
}

WorkloadState run_to_end(const WorkloadSpec& spec, WorkloadState state) {
  while (!at_end(spec, state)) state = step(spec, state);
  return state;
}

std::string digest(const WorkloadSpec& spec, const WorkloadState& state) {
  if (!at_end(spec, state)) throw std::logic_error("digest() of an unfinished workload");
  return to_hex64(state.accumulator);
}

std::vector<std::byte> serialize(const WorkloadSpec& spec, const WorkloadState& state) {
  std::vector<std::byte> out;
  out.reserve(kStatePayloadSize);
  for (char c : kMagic) out.push_back(static_cast<std::byte>(c));
  put_u16(out, kVersion);
  put_u16(out, 0);
  put_u64(out, spec.fingerprint());
  put_u32(out, state.stage_index);
  put_u32(out, state.step_index);
  put_u64(out, state.accumulator);
  put_u64(out, state.seed);
  put_u64(out, fnv1a64(std::span<const std::byte>(out)));
  return out;
}

WorkloadState deserialize(const WorkloadSpec& spec, std::span<const std::byte> payload) {
  if (payload.size() < kStatePayloadSize) throw PayloadError("state payload truncated");
  if (payload.size() > kStatePayloadSize) throw PayloadError("state payload has trailing bytes");
  if (std::memcmp(payload.data(), kMagic, sizeof kMagic) != 0) {
    throw PayloadError("state payload has wrong magic");
  }
  if (get_le(payload, 4, 2) != kVersion) throw PayloadError("unsupported state payload version");
  if (get_le(payload, 40, 8) != fnv1a64(payload.first(40))) {
    throw PayloadError("state payload checksum mismatch");
  }
  if (get_le(payload, 8, 8) != spec.fingerprint()) {
    throw PayloadError("state payload belongs to a different workload spec");
  }
  WorkloadState s;
  s.stage_index = static_cast<uint32_t>(get_le(payload, 16, 4));
  s.step_index = static_cast<uint32_t>(get_le(payload, 20, 4));
  s.accumulator = get_le(payload, 24, 8);
  s.seed = get_le(payload, 32, 8);
  if (s.stage_index > spec.stages.size() ||
      (s.stage_index < spec.stages.size() && s.step_index >= spec.stages[s.stage_index].steps) ||
      (s.stage_index == spec.stages.size() && s.step_index != 0)) {
    throw PayloadError("state payload position is outside the spec");
  }
  return s;
}

namespace {

// Non-blocking line reader over a file descriptor; waiting doubles as the
// per-step pacing so checkpoint requests are seen promptly.
class LineReader {
 public:
  explicit LineReader(int fd) : fd_(fd) {}

  std::vector<std::string> wait_lines(std::chrono::nanoseconds timeout) {
    std::vector<std::string> lines;
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    do {
      const auto left = deadline - std::chrono::steady_clock::now();
      if (fd_ < 0 || eof_) {
        if (left.count() > 0) std::this_thread::sleep_for(left);
        break;
      }
      const int ms = static_cast<int>(std::max<int64_t>(
          0, std::chrono::ceil<std::chrono::milliseconds>(left).count()));
      pollfd pfd{fd_, POLLIN, 0};
      if (::poll(&pfd, 1, ms) > 0) {
        char buf[512];
        const ssize_t n = ::read(fd_, buf, sizeof buf);
        if (n <= 0) {
          eof_ = true;
        } else {
          pending_.append(buf, static_cast<size_t>(n));
        }
      }
      size_t nl;
      while ((nl = pending_.find('\n')) != std::string::npos) {
        lines.push_back(pending_.substr(0, nl));
        pending_.erase(0, nl + 1);
      }
    } while (lines.empty() && std::chrono::steady_clock::now() < deadline);
    return lines;
  }

 private:
  int fd_;
  bool eof_ = false;
  std::string pending_;
};

void write_file_atomic(const std::filesystem::path& path, std::span<const std::byte> bytes) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("cannot write " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

void busy_wait(std::chrono::nanoseconds d) {
  const auto until = std::chrono::steady_clock::now() + d;
  while (std::chrono::steady_clock::now() < until) {
  }
}

}  // namespace

int drive_workload(const WorkloadDriverOptions& options, WorkloadState state, int in_fd,
                   std::FILE* out) {
  const WorkloadSpec& spec = options.spec;
  const auto real_step = std::chrono::duration_cast<std::chrono::nanoseconds>(
      spec.step_cost / options.time_scale);
  LineReader reader(in_fd);
  bool request_pending = false;
  uint64_t snapshots = 0;

  auto emit_checkpoint = [&](const std::string& prefix) {
    const auto path = options.scratch_dir / (prefix + std::to_string(snapshots++) + ".state");
    write_file_atomic(path, serialize(spec, state));
    std::fprintf(out, "CKPT-OK %s\n", path.c_str());
    std::fflush(out);
  };
  auto drain = [&](std::chrono::nanoseconds wait) {
    for (const auto& line : reader.wait_lines(wait)) {
      if (line == "CKPT-REQ") request_pending = true;
    }
  };

  const WorkloadState start = state;
  while (!at_end(spec, state)) {
    drain(std::chrono::nanoseconds(0));
    const bool boundary = at_stage_boundary(spec, state);
    if (options.mode == SafePointMode::kStageBoundary) {
      // Native checkpoints are written at every boundary reached during
      // this run; the resume point itself is already persisted.
      if (boundary && (request_pending || !(state == start))) {
        emit_checkpoint("native-");
        request_pending = false;
      }
    } else if (request_pending) {
      emit_checkpoint("snap-");
      request_pending = false;
    }

    const uint32_t stage = state.stage_index;
    state = step(spec, state);
    const uint32_t done = state.stage_index == stage ? state.step_index : spec.stages[stage].steps;
    std::fprintf(out, "PROGRESS %s %u\n", spec.stages[stage].name.c_str(), done);
    std::fflush(out);

    if (real_step.count() > 0) {
      if (spec.busy) {
        busy_wait(real_step);
      } else {
        // Sleep the whole step, answering requests that arrive meanwhile.
        const auto until = std::chrono::steady_clock::now() + real_step;
        for (auto now = std::chrono::steady_clock::now(); now < until;
             now = std::chrono::steady_clock::now()) {
          drain(until - now);
          if (request_pending && options.mode == SafePointMode::kAnyStep) {
            emit_checkpoint("snap-");
            request_pending = false;
          }
        }
      }
    }
  }
  std::fprintf(out, "DONE %s\n", digest(spec, state).c_str());
  std::fflush(out);
  return 0;
}

}  // namespace spoton
