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

// Durable checkpoint store and checkpointer plugins.
//
// Store layout (any directory every attempt can see, e.g. an NFS mount):
//
//   <root>/ckpt/<seq>/payload.bin   opaque bytes
//   <root>/ckpt/<seq>/manifest      key = value text
//   <root>/ckpt/<seq>/COMMIT        empty; its existence commits the checkpoint
//
// A checkpoint is valid iff COMMIT exists, payload.bin exists, and its size
// and FNV-1a checksum match the manifest.

#ifndef SPOTON_CHECKPOINT_HPP_
#define SPOTON_CHECKPOINT_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "spoton/clock.hpp"
#include "spoton/workload.hpp"

namespace spoton {

enum class CheckpointKind { kPeriodic, kTermination };

std::string_view to_string(CheckpointKind kind);
std::optional<CheckpointKind> parse_checkpoint_kind(std::string_view text);

struct CheckpointManifest {
  uint64_t sequence = 0;
  CheckpointKind kind = CheckpointKind::kPeriodic;
  uint64_t attempt_id = 0;
  ProgressMarker progress_marker;
  uint64_t payload_size = 0;
  uint64_t checksum = 0;
  /// Derived from the COMMIT marker when read back from a store.
  bool complete = false;
  Instant created_at{};

  bool operator==(const CheckpointManifest&) const = default;
};

std::string format_manifest(const CheckpointManifest& m);
/// Throws std::invalid_argument on a malformed or incomplete manifest.
CheckpointManifest parse_manifest(std::string_view text);

struct CheckpointMeta {
  CheckpointKind kind = CheckpointKind::kPeriodic;
  uint64_t attempt_id = 0;
  ProgressMarker progress_marker;
};

/// The ordered steps of a checkpoint write. A crash before any step leaves the
/// store as it was before that step.
enum class CommitStep {
  kCreateDirectory,
  kWritePayloadHead,
  kWritePayloadTail,
  kSyncPayload,
  kWriteManifest,
  kSyncManifest,
  kWriteCommitMarker,
  kSyncDirectory,
};
inline constexpr int kCommitStepCount = 8;

/// Invoked before each step; throwing from it simulates a crash there.
using CommitHook = std::function<void(CommitStep)>;

class StoreError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CheckpointStore {
 public:
  explicit CheckpointStore(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path checkpoint_dir(uint64_t sequence) const;

  /// Creates <root>/ckpt and checks that it is writable.
  void initialize() const;

  /// Two-phase write: payload (fsynced), then manifest, then COMMIT.
  /// Throws StoreError on I/O failure; nothing partial becomes valid.
  CheckpointManifest write(std::span<const std::byte> payload, const CheckpointMeta& meta,
                           Instant now, const CommitHook& hook = {});

  std::optional<CheckpointManifest> latest_valid() const;
  /// Valid checkpoints, highest sequence first.
  std::vector<CheckpointManifest> valid_checkpoints() const;
  bool validate(const CheckpointManifest& manifest) const;
  std::vector<std::byte> read_payload(const CheckpointManifest& manifest) const;

  /// One past the highest sequence ever allocated in this store, counting
  /// incomplete directories, so sequences are never reused.
  uint64_t next_sequence() const;

  /// Keeps the `keep` newest valid checkpoints and removes every older
  /// checkpoint directory (valid or not).
  void apply_retention(size_t keep) const;

 private:
  std::vector<uint64_t> sequences_on_disk() const;
  std::optional<CheckpointManifest> read_manifest(uint64_t sequence) const;

  std::filesystem::path root_;
};

// Free-function forms of the store operations.
CheckpointManifest write_checkpoint(std::span<const std::byte> payload, const CheckpointMeta& meta,
                                    const std::filesystem::path& store_root, Instant now);
std::optional<CheckpointManifest> latest_valid(const std::filesystem::path& store_root);
bool validate(const CheckpointManifest& manifest, const std::filesystem::path& store_root);

// ---------------------------------------------------------------------------
// Checkpointers

enum class CheckpointerKind { kApplication, kTransparent, kToy };

std::string_view to_string(CheckpointerKind kind);
std::optional<CheckpointerKind> parse_checkpointer_kind(std::string_view text);

class CheckpointFailed : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The running workload as seen by a checkpointer.
class SnapshotTarget {
 public:
  virtual ~SnapshotTarget() = default;
  virtual int pid() const = 0;
  /// Sends CKPT-REQ and waits for the matching CKPT-OK. Throws
  /// CheckpointFailed on timeout or if the workload exits first.
  virtual std::filesystem::path request_checkpoint(Duration timeout) = 0;
  /// Most recent CKPT-OK path seen, solicited or not.
  virtual std::optional<std::filesystem::path> latest_checkpoint_file() const = 0;
  /// Stops / resumes the process tree (SIGSTOP / SIGCONT).
  virtual void freeze() = 0;
  virtual void thaw() = 0;
};

struct Snapshot {
  std::vector<std::byte> payload;
  /// Empty when the checkpointer cannot tell (external images).
  std::optional<ProgressMarker> marker;
};

class Checkpointer {
 public:
  Checkpointer(WorkloadSpec spec, Duration initial_estimate, Clock clock);
  virtual ~Checkpointer() = default;

  virtual CheckpointerKind kind() const = 0;
  virtual bool can_checkpoint_now(const WorkloadState& state) const = 0;
  virtual Snapshot snapshot(SnapshotTarget& target) = 0;
  /// Turns a stored payload back into a launchable workload state.
  virtual WorkloadState restore(std::span<const std::byte> payload,
                                const std::filesystem::path& work_dir) = 0;

  /// Configured estimate until a checkpoint has been observed, then the
  /// longest observed checkpoint duration.
  Duration estimate() const;
  void observe_duration(Duration d);

 protected:
  const WorkloadSpec& spec() const { return spec_; }
  const Clock& clock() const { return clock_; }

 private:
  WorkloadSpec spec_;
  Clock clock_;
  mutable std::mutex mu_;
  Duration initial_estimate_;
  std::optional<Duration> max_observed_;
};

/// Built-in transparent stand-in: captures the workload's full state at any
/// step through the line protocol, freezing the process for `snapshot_cost`
/// to model image-dump time.
class ToyCheckpointer final : public Checkpointer {
 public:
  ToyCheckpointer(WorkloadSpec spec, Duration initial_estimate, Duration snapshot_cost,
                  Clock clock);

  CheckpointerKind kind() const override { return CheckpointerKind::kToy; }
  bool can_checkpoint_now(const WorkloadState&) const override { return true; }
  Snapshot snapshot(SnapshotTarget& target) override;
  WorkloadState restore(std::span<const std::byte> payload,
                        const std::filesystem::path& work_dir) override;

 private:
  Duration snapshot_cost_;
};

/// Registers checkpoints the workload writes itself at stage boundaries.
/// It cannot produce one on demand mid-stage.
class ApplicationCheckpointer final : public Checkpointer {
 public:
  using Checkpointer::Checkpointer;

  CheckpointerKind kind() const override { return CheckpointerKind::kApplication; }
  bool can_checkpoint_now(const WorkloadState& state) const override;
  /// Picks up the newest native checkpoint file; throws CheckpointFailed if
  /// there is none or it was already registered.
  Snapshot snapshot(SnapshotTarget& target) override;
  WorkloadState restore(std::span<const std::byte> payload,
                        const std::filesystem::path& work_dir) override;

 private:
  std::optional<std::filesystem::path> last_registered_;
};

/// Drives an external transparent checkpointing tool (CRIU-style) through
/// command templates. `{pid}` and `{dir}` are substituted; commands run under
/// /bin/sh. The snapshot directory is packed into the payload; on restore it
/// is unpacked and the restore command must leave `workload.state` (a
/// serialized WorkloadState) in `{dir}`.
class ExternalCheckpointer final : public Checkpointer {
 public:
  ExternalCheckpointer(WorkloadSpec spec, Duration initial_estimate, std::string snapshot_cmd,
                       std::string restore_cmd, std::filesystem::path work_root, Clock clock);

  CheckpointerKind kind() const override { return CheckpointerKind::kTransparent; }
  bool can_checkpoint_now(const WorkloadState&) const override { return true; }
  Snapshot snapshot(SnapshotTarget& target) override;
  WorkloadState restore(std::span<const std::byte> payload,
                        const std::filesystem::path& work_dir) override;

  int last_exit_status() const { return last_exit_status_; }

 private:
  std::string snapshot_cmd_;
  std::string restore_cmd_;
  std::filesystem::path work_root_;
  uint64_t counter_ = 0;
  int last_exit_status_ = 0;
};

/// Replaces every `{key}` in `templ` with its value.
std::string expand_command(std::string_view templ,
                           std::span<const std::pair<std::string, std::string>> values);

/// Directory <-> single payload. Regular files only, sorted by relative path.
std::vector<std::byte> pack_directory(const std::filesystem::path& dir);
void unpack_directory(std::span<const std::byte> payload, const std::filesystem::path& dir);

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path);

}  // namespace spoton

#endif  // SPOTON_CHECKPOINT_HPP_
