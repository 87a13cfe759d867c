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

// A deterministic staged workload used as a stand-in for a long-running
// external program.
//
// Each stage is a loop of steps; every step folds its position into a 64-bit
// accumulator:
//
//   key  = (stage_index << 32) | step_index
//   acc' = mix64(acc ^ (seed + 0x9e3779b97f4a7c15 * (key + 1)))
//   acc0 = mix64(seed + 0x9e3779b97f4a7c15)
//
// where mix64 is the splitmix64 finalizer. Stage names never enter the
// chain, so renaming stages leaves the digest unchanged.

#ifndef SPOTON_WORKLOAD_HPP_
#define SPOTON_WORKLOAD_HPP_

#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "spoton/clock.hpp"

namespace spoton {

struct StageSpec {
  std::string name;
  uint32_t steps = 0;

  bool operator==(const StageSpec&) const = default;
};

struct WorkloadSpec {
  std::vector<StageSpec> stages;
  uint64_t seed = 42;
  /// Emulated time one step takes. Zero runs flat out.
  Duration step_cost{0};
  /// Spin instead of sleeping for step_cost.
  bool busy = false;

  /// Five stages named K33, K55, K77, K99, K127.
  static WorkloadSpec assembly_like(uint32_t steps_per_stage, uint64_t seed = 42);

  uint64_t total_steps() const;
  /// Identifies the step layout and seed; names excluded.
  uint64_t fingerprint() const;
  /// Throws std::invalid_argument on duplicate or empty stage names.
  void validate() const;

  bool operator==(const WorkloadSpec&) const = default;
};

/// "K33:200,K55:200" <-> stages.
std::vector<StageSpec> parse_stage_list(std::string_view text);
std::string format_stage_list(std::span<const StageSpec> stages);

struct WorkloadState {
  uint32_t stage_index = 0;
  uint32_t step_index = 0;
  uint64_t accumulator = 0;
  uint64_t seed = 0;

  bool operator==(const WorkloadState&) const = default;
};

/// Position reported in checkpoint manifests and the run ledger.
struct ProgressMarker {
  std::string stage_name;
  uint32_t step_index = 0;

  bool operator==(const ProgressMarker&) const = default;
};

class PayloadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

uint64_t initial_accumulator(uint64_t seed);
uint64_t step_hash(uint64_t accumulator, uint32_t stage_index, uint32_t step_index, uint64_t seed);

WorkloadState initial_state(const WorkloadSpec& spec);
bool at_end(const WorkloadSpec& spec, const WorkloadState& state);
/// Precondition: !at_end(spec, state); throws std::logic_error otherwise.
WorkloadState step(const WorkloadSpec& spec, WorkloadState state);
/// True at the start of a stage and at the very end.
bool at_stage_boundary(const WorkloadSpec& spec, const WorkloadState& state);
/// Steps completed from the start of the workload.
uint64_t global_step(const WorkloadSpec& spec, const WorkloadState& state);
ProgressMarker marker_of(const WorkloadSpec& spec, const WorkloadState& state);
/// Inverse of the stage-offset mapping, for a stage name + steps done.
uint64_t global_step(const WorkloadSpec& spec, const ProgressMarker& marker);

/// Runs to completion without pacing. Used for reference digests.
WorkloadState run_to_end(const WorkloadSpec& spec, WorkloadState state);

/// Lowercase 16-digit hex of the accumulator. Precondition: at_end.
std::string digest(const WorkloadSpec& spec, const WorkloadState& state);

inline constexpr size_t kStatePayloadSize = 48;

/// 48-byte little-endian record: "SPWS", u16 version (1), u16 zero,
/// u64 spec fingerprint, u32 stage, u32 step, u64 accumulator, u64 seed,
/// u64 FNV-1a of the preceding 40 bytes.
std::vector<std::byte> serialize(const WorkloadSpec& spec, const WorkloadState& state);
/// Throws PayloadError on bad magic, version, size, checksum, fingerprint or
/// out-of-range position.
WorkloadState deserialize(const WorkloadSpec& spec, std::span<const std::byte> payload);

enum class SafePointMode {
  kAnyStep,        // answers checkpoint requests immediately
  kStageBoundary,  // application-native: only at stage boundaries
};

struct WorkloadDriverOptions {
  WorkloadSpec spec;
  SafePointMode mode = SafePointMode::kAnyStep;
  std::filesystem::path scratch_dir;
  double time_scale = 1.0;
};

/// Executes the workload speaking the line protocol on `in_fd` / `out`:
///   out: PROGRESS <stage> <done>, CKPT-OK <path>, DONE <digest>
///   in:  CKPT-REQ
/// Returns the process exit code.
int drive_workload(const WorkloadDriverOptions& options, WorkloadState start, int in_fd,
                   std::FILE* out);

}  // namespace spoton

#endif  // SPOTON_WORKLOAD_HPP_
