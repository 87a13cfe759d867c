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

#include "spoton/process.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/prctl.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstdio>
#include <cstring>
#include <sstream>
#include <stdexcept>

#include <spdlog/spdlog.h>

namespace spoton {
namespace {

ExitStatus decode(int raw) {
  ExitStatus s;
  if (WIFEXITED(raw)) {
    s.code = WEXITSTATUS(raw);
  } else if (WIFSIGNALED(raw)) {
    s.signal = WTERMSIG(raw);
  }
  return s;
}

std::string sys_error(const char* what) { return std::string(what) + ": " + std::strerror(errno); }

std::string format_seconds(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

ExitStatus run_shell(const std::string& command) {
  ChildProcess child({"/bin/sh", "-c", command}, SpawnOptions{});
  return child.wait();
}

ChildProcess::ChildProcess(const std::vector<std::string>& argv, const SpawnOptions& options) {
  if (argv.empty()) throw std::invalid_argument("empty argv");
  int in_pipe[2] = {-1, -1};
  int out_pipe[2] = {-1, -1};
  if (options.pipe_stdin && ::pipe2(in_pipe, O_CLOEXEC) != 0) throw std::runtime_error(sys_error("pipe"));
  if (options.pipe_stdout && ::pipe2(out_pipe, O_CLOEXEC) != 0) {
    throw std::runtime_error(sys_error("pipe"));
  }
  int out_file = -1;
  if (!options.pipe_stdout && options.stdout_file) {
    out_file = ::open(options.stdout_file->c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
    if (out_file < 0) throw std::runtime_error(sys_error("open stdout file"));
  }

  std::vector<char*> cargv;
  cargv.reserve(argv.size() + 1);
  for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
  cargv.push_back(nullptr);
  const pid_t parent = ::getpid();

  pid_ = ::fork();
  if (pid_ < 0) throw std::runtime_error(sys_error("fork"));
  if (pid_ == 0) {
    // Child: async-signal-safe calls only.
    if (options.new_process_group) ::setpgid(0, 0);
    if (options.die_with_parent) {
      ::prctl(PR_SET_PDEATHSIG, SIGKILL);
      if (::getppid() != parent) ::_exit(126);
    }
    if (in_pipe[0] >= 0) ::dup2(in_pipe[0], STDIN_FILENO);
    if (out_pipe[1] >= 0) ::dup2(out_pipe[1], STDOUT_FILENO);
    if (out_file >= 0) ::dup2(out_file, STDOUT_FILENO);
    if (options.merge_stderr) ::dup2(STDOUT_FILENO, STDERR_FILENO);
    ::execv(cargv[0], cargv.data());
    ::_exit(127);
  }
  if (options.new_process_group) ::setpgid(pid_, pid_);
  if (in_pipe[0] >= 0) {
    ::close(in_pipe[0]);
    stdin_fd_ = in_pipe[1];
  }
  if (out_pipe[1] >= 0) {
    ::close(out_pipe[1]);
    stdout_fd_ = out_pipe[0];
  }
  if (out_file >= 0) ::close(out_file);
}

ChildProcess::~ChildProcess() {
  close_stdin();
  if (stdout_fd_ >= 0) ::close(stdout_fd_);
  if (!status_ && pid_ > 0) {
    // Reap if already gone; otherwise leave it to init.
    int raw = 0;
    ::waitpid(pid_, &raw, WNOHANG);
  }
}

void ChildProcess::close_stdin() {
  if (stdin_fd_ >= 0) {
    ::close(stdin_fd_);
    stdin_fd_ = -1;
  }
}

void ChildProcess::signal(int sig) const {
  if (pid_ > 0 && !status_) ::kill(pid_, sig);
}

ExitStatus ChildProcess::wait() {
  if (status_) return *status_;
  int raw = 0;
  while (::waitpid(pid_, &raw, 0) < 0) {
    if (errno != EINTR) throw std::runtime_error(sys_error("waitpid"));
  }
  status_ = decode(raw);
  return *status_;
}

std::optional<ExitStatus> ChildProcess::try_wait() {
  if (status_) return status_;
  int raw = 0;
  const pid_t r = ::waitpid(pid_, &raw, WNOHANG);
  if (r == pid_) status_ = decode(raw);
  return status_;
}

WorkloadProcess::WorkloadProcess(const std::vector<std::string>& argv, WorkloadCallbacks callbacks,
                                 Clock clock)
    : child_(argv, SpawnOptions{.pipe_stdin = true,
                                .pipe_stdout = true,
                                .stdout_file = std::nullopt,
                                .new_process_group = false,
                                .die_with_parent = true}),
      callbacks_(std::move(callbacks)),
      clock_(clock) {
  // Writes to a dead workload must not kill the supervisor.
  ::signal(SIGPIPE, SIG_IGN);
  reader_ = std::thread([this] { read_loop(); });
}

WorkloadProcess::~WorkloadProcess() {
  kill();
  if (reader_.joinable()) reader_.join();
}

int WorkloadProcess::pid() const { return child_.pid(); }

void WorkloadProcess::read_loop() {
  FILE* in = ::fdopen(::dup(child_.stdout_fd()), "r");
  char* line = nullptr;
  size_t cap = 0;
  ssize_t n;
  while (in != nullptr && (n = ::getline(&line, &cap, in)) > 0) {
    std::string_view text(line, static_cast<size_t>(n));
    while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.remove_suffix(1);
    if (text.rfind("PROGRESS ", 0) == 0) {
      std::istringstream is{std::string(text.substr(9))};
      ProgressMarker m;
      if (is >> m.stage_name >> m.step_index && callbacks_.on_progress) callbacks_.on_progress(m);
    } else if (text.rfind("CKPT-OK ", 0) == 0) {
      std::filesystem::path path{std::string(text.substr(8))};
      {
        std::lock_guard lock(mu_);
        latest_file_ = path;
        ++checkpoint_replies_;
      }
      cv_.notify_all();
      if (callbacks_.on_checkpoint_file) callbacks_.on_checkpoint_file(path);
    } else if (text.rfind("DONE ", 0) == 0) {
      if (callbacks_.on_done) callbacks_.on_done(std::string(text.substr(5)));
    } else {
      spdlog::debug("workload: unrecognized line '{}'", text);
    }
  }
  std::free(line);
  if (in != nullptr) std::fclose(in);
  const ExitStatus status = child_.wait();
  {
    std::lock_guard lock(mu_);
    exit_ = status;
  }
  cv_.notify_all();
  if (callbacks_.on_exit) callbacks_.on_exit(status);
}

std::filesystem::path WorkloadProcess::request_checkpoint(Duration timeout) {
  std::unique_lock lock(mu_);
  if (exit_) throw CheckpointFailed("workload already exited");
  const uint64_t before = checkpoint_replies_;
  static constexpr char kRequest[] = "CKPT-REQ\n";
  if (::write(child_.stdin_fd(), kRequest, sizeof kRequest - 1) != sizeof kRequest - 1) {
    throw CheckpointFailed("cannot send checkpoint request");
  }
  const auto deadline = std::chrono::steady_clock::now() + clock_.to_real(timeout);
  if (!cv_.wait_until(lock, deadline, [&] { return checkpoint_replies_ > before || exit_; })) {
    throw CheckpointFailed("workload did not answer the checkpoint request in time");
  }
  if (checkpoint_replies_ == before) throw CheckpointFailed("workload exited during checkpoint");
  return *latest_file_;
}

std::optional<std::filesystem::path> WorkloadProcess::latest_checkpoint_file() const {
  std::lock_guard lock(mu_);
  return latest_file_;
}

void WorkloadProcess::freeze() {
  std::lock_guard lock(mu_);
  if (!exit_ && !frozen_) {
    child_.signal(SIGSTOP);
    frozen_ = true;
  }
}

void WorkloadProcess::thaw() {
  std::lock_guard lock(mu_);
  if (frozen_) {
    child_.signal(SIGCONT);
    frozen_ = false;
  }
}

void WorkloadProcess::kill() {
  std::lock_guard lock(mu_);
  if (!exit_) child_.signal(SIGKILL);
}

ExitStatus WorkloadProcess::wait() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return exit_.has_value(); });
  return *exit_;
}

bool WorkloadProcess::exited() const {
  std::lock_guard lock(mu_);
  return exit_.has_value();
}

std::vector<std::string> workload_argv(const WorkloadLaunch& launch) {
  std::vector<std::string> argv = {
      launch.binary.string(),
      "--stages",
      format_stage_list(launch.spec.stages),
      "--seed",
      std::to_string(launch.spec.seed),
      "--step-cost",
      format_seconds(launch.spec.step_cost.count()),
      "--time-scale",
      format_seconds(launch.time_scale),
      "--mode",
      launch.mode == SafePointMode::kStageBoundary ? "application" : "transparent",
      "--scratch",
      launch.scratch_dir.string(),
  };
  if (launch.spec.busy) argv.push_back("--busy");
  if (launch.resume_file) {
    argv.push_back("--resume");
    argv.push_back(launch.resume_file->string());
  }
  return argv;
}

std::filesystem::path executable_dir() {
  std::error_code ec;
  const auto exe = std::filesystem::read_symlink("/proc/self/exe", ec);
  return ec ? std::filesystem::current_path() : exe.parent_path();
}

}  // namespace spoton
