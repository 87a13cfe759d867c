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

#ifndef SPOTON_PROCESS_HPP_
#define SPOTON_PROCESS_HPP_

#include <sys/types.h>

#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "spoton/checkpoint.hpp"
#include "spoton/clock.hpp"
#include "spoton/workload.hpp"

namespace spoton {

struct ExitStatus {
  int code = -1;    // valid when signal == 0
  int signal = 0;   // terminating signal, 0 if exited normally

  bool success() const { return signal == 0 && code == 0; }
  /// Shell convention: code, or 128 + signal.
  int shell_code() const { return signal != 0 ? 128 + signal : code; }
};

/// Runs `command` under /bin/sh -c and waits for it.
ExitStatus run_shell(const std::string& command);

struct SpawnOptions {
  bool pipe_stdin = false;
  bool pipe_stdout = false;
  /// Redirect stdout to this file instead (ignored when pipe_stdout).
  std::optional<std::filesystem::path> stdout_file;
  /// Put the child in its own process group.
  bool new_process_group = false;
  /// Kill the child if the spawning thread dies.
  bool die_with_parent = false;
  /// Send stderr wherever stdout goes.
  bool merge_stderr = false;
};

/// A forked + exec'd child. Not copyable; the destructor does not kill.
class ChildProcess {
 public:
  ChildProcess(const std::vector<std::string>& argv, const SpawnOptions& options);
  ~ChildProcess();
  ChildProcess(const ChildProcess&) = delete;
  ChildProcess& operator=(const ChildProcess&) = delete;

  pid_t pid() const { return pid_; }
  int stdin_fd() const { return stdin_fd_; }
  int stdout_fd() const { return stdout_fd_; }
  void close_stdin();

  void signal(int sig) const;
  ExitStatus wait();
  std::optional<ExitStatus> try_wait();

 private:
  pid_t pid_ = -1;
  int stdin_fd_ = -1;
  int stdout_fd_ = -1;
  std::optional<ExitStatus> status_;
};

/// Callbacks from the workload's line protocol. Invoked on the reader thread.
struct WorkloadCallbacks {
  std::function<void(const ProgressMarker&)> on_progress;
  std::function<void(const std::filesystem::path&)> on_checkpoint_file;
  std::function<void(const std::string& digest)> on_done;
  std::function<void(ExitStatus)> on_exit;
};

/// The supervised toy workload: a child process plus a thread that parses
/// its stdout.
class WorkloadProcess final : public SnapshotTarget {
 public:
  WorkloadProcess(const std::vector<std::string>& argv, WorkloadCallbacks callbacks, Clock clock);
  ~WorkloadProcess() override;

  int pid() const override;
  std::filesystem::path request_checkpoint(Duration timeout) override;
  std::optional<std::filesystem::path> latest_checkpoint_file() const override;
  void freeze() override;
  void thaw() override;

  /// SIGKILL; safe to call repeatedly.
  void kill();
  /// Blocks until the process has exited and its output is drained.
  ExitStatus wait();
  bool exited() const;

 private:
  void read_loop();

  ChildProcess child_;
  WorkloadCallbacks callbacks_;
  Clock clock_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  uint64_t checkpoint_replies_ = 0;
  std::optional<std::filesystem::path> latest_file_;
  std::optional<ExitStatus> exit_;
  bool frozen_ = false;
  std::thread reader_;
};

/// Arguments for launching the workload binary.
struct WorkloadLaunch {
  std::filesystem::path binary;
  WorkloadSpec spec;
  SafePointMode mode = SafePointMode::kAnyStep;
  std::filesystem::path scratch_dir;
  double time_scale = 1.0;
  std::optional<std::filesystem::path> resume_file;
};

std::vector<std::string> workload_argv(const WorkloadLaunch& launch);

/// Directory holding the running executable.
std::filesystem::path executable_dir();

}  // namespace spoton

#endif  // SPOTON_PROCESS_HPP_
