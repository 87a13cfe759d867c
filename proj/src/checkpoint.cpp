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

#include "spoton/checkpoint.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cctype>
#include <charconv>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <spdlog/spdlog.h>

#include "spoton/hash.hpp"
#include "spoton/process.hpp"

namespace spoton {
namespace fs = std::filesystem;
namespace {

constexpr char kPayloadFile[] = "payload.bin";
constexpr char kManifestFile[] = "manifest";
constexpr char kCommitFile[] = "COMMIT";

// Writes all of `data` to an open fd, throwing StoreError on failure.
void write_all(int fd, std::span<const std::byte> data, const fs::path& what) {
  size_t off = 0;
  while (off < data.size()) {
    const ssize_t n = ::write(fd, data.data() + off, data.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw StoreError("write " + what.string() + ": " + std::strerror(errno));
    }
    off += static_cast<size_t>(n);
  }
}

class Fd {
 public:
  Fd(const fs::path& path, int flags) : fd_(::open(path.c_str(), flags | O_CLOEXEC, 0644)) {
    if (fd_ < 0) throw StoreError("open " + path.string() + ": " + std::strerror(errno));
  }
  ~Fd() {
    if (fd_ >= 0) ::close(fd_);
  }
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  int get() const { return fd_; }
  void sync(const fs::path& what) const {
    if (::fsync(fd_) != 0) throw StoreError("fsync " + what.string() + ": " + std::strerror(errno));
  }

 private:
  int fd_;
};

void sync_directory(const fs::path& dir) {
  Fd fd(dir, O_RDONLY | O_DIRECTORY);
  fd.sync(dir);
}

bool parse_u64(std::string_view s, uint64_t* out) {
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), *out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

std::string_view to_string(CheckpointKind kind) {
  return kind == CheckpointKind::kTermination ? "termination" : "periodic";
}

std::optional<CheckpointKind> parse_checkpoint_kind(std::string_view text) {
  if (text == "periodic") return CheckpointKind::kPeriodic;
  if (text == "termination") return CheckpointKind::kTermination;
  return std::nullopt;
}

std::string format_manifest(const CheckpointManifest& m) {
  std::ostringstream os;
  os << "sequence = " << m.sequence << '\n'
     << "kind = " << to_string(m.kind) << '\n'
     << "attempt_id = " << m.attempt_id << '\n'
     << "progress_marker = " << m.progress_marker.stage_name << ' ' << m.progress_marker.step_index
     << '\n'
     << "payload_size = " << m.payload_size << '\n'
     << "checksum = " << to_hex64(m.checksum) << '\n'
     << "complete = " << (m.complete ? "true" : "false") << '\n'
     << "created_at = " << format_iso8601(m.created_at) << '\n';
  return os.str();
}

CheckpointManifest parse_manifest(std::string_view text) {
  std::map<std::string, std::string, std::less<>> kv;
  while (!text.empty()) {
    const size_t nl = text.find('\n');
    std::string_view line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (line.empty() || line.front() == '#') continue;
    const size_t eq = line.find('=');
    if (eq == std::string_view::npos) throw std::invalid_argument("manifest line without '='");
    kv.emplace(std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1))));
  }
  auto need = [&kv](const char* key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw std::invalid_argument(std::string("manifest missing ") + key);
    return it->second;
  };
  CheckpointManifest m;
  uint64_t step = 0;
  if (!parse_u64(need("sequence"), &m.sequence) || m.sequence == 0) {
    throw std::invalid_argument("manifest: bad sequence");
  }
  const auto kind = parse_checkpoint_kind(need("kind"));
  if (!kind) throw std::invalid_argument("manifest: bad kind");
  m.kind = *kind;
  if (!parse_u64(need("attempt_id"), &m.attempt_id)) throw std::invalid_argument("manifest: bad attempt_id");
  {
    const std::string& pm = need("progress_marker");
    const size_t sp = pm.rfind(' ');
    if (sp == std::string::npos || !parse_u64(std::string_view(pm).substr(sp + 1), &step)) {
      throw std::invalid_argument("manifest: bad progress_marker");
    }
    m.progress_marker = {pm.substr(0, sp), static_cast<uint32_t>(step)};
  }
  if (!parse_u64(need("payload_size"), &m.payload_size)) {
    throw std::invalid_argument("manifest: bad payload_size");
  }
  if (!parse_hex64(need("checksum"), &m.checksum)) throw std::invalid_argument("manifest: bad checksum");
  const std::string& complete = need("complete");
  if (complete != "true" && complete != "false") throw std::invalid_argument("manifest: bad complete");
  m.complete = complete == "true";
  const auto created = parse_iso8601(need("created_at"));
  if (!created) throw std::invalid_argument("manifest: bad created_at");
  m.created_at = *created;
  return m;
}

std::vector<std::byte> read_file_bytes(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw StoreError("cannot read " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  std::vector<std::byte> out(raw.size());
  std::memcpy(out.data(), raw.data(), raw.size());
  return out;
}

// ---------------------------------------------------------------------------

CheckpointStore::CheckpointStore(fs::path root) : root_(std::move(root)) {}

fs::path CheckpointStore::checkpoint_dir(uint64_t sequence) const {
  return root_ / "ckpt" / std::to_string(sequence);
}

void CheckpointStore::initialize() const {
  std::error_code ec;
  fs::create_directories(root_ / "ckpt", ec);
  if (ec) throw StoreError("cannot create " + (root_ / "ckpt").string() + ": " + ec.message());
  if (::access((root_ / "ckpt").c_str(), W_OK) != 0) {
    throw StoreError("checkpoint store " + root_.string() + " is not writable");
  }
}

std::vector<uint64_t> CheckpointStore::sequences_on_disk() const {
  std::vector<uint64_t> seqs;
  std::error_code ec;
  for (fs::directory_iterator it(root_ / "ckpt", ec), end; !ec && it != end; it.increment(ec)) {
    uint64_t seq = 0;
    const std::string name = it->path().filename().string();
    if (it->is_directory() && parse_u64(name, &seq) && seq > 0 && std::to_string(seq) == name) {
      seqs.push_back(seq);
    }
  }
  std::sort(seqs.begin(), seqs.end());
  return seqs;
}

uint64_t CheckpointStore::next_sequence() const {
  const auto seqs = sequences_on_disk();
  return seqs.empty() ? 1 : seqs.back() + 1;
}

CheckpointManifest CheckpointStore::write(std::span<const std::byte> payload,
                                          const CheckpointMeta& meta, Instant now,
                                          const CommitHook& hook) {
  auto at = [&hook](CommitStep s) {
    if (hook) hook(s);
  };
  CheckpointManifest m;
  m.sequence = next_sequence();
  m.kind = meta.kind;
  m.attempt_id = meta.attempt_id;
  m.progress_marker = meta.progress_marker;
  m.payload_size = payload.size();
  m.checksum = fnv1a64(payload);
  m.complete = false;
  m.created_at = now;

  const fs::path dir = checkpoint_dir(m.sequence);
  at(CommitStep::kCreateDirectory);
  std::error_code ec;
  if (!fs::create_directory(dir, ec) || ec) {
    throw StoreError("cannot create " + dir.string() + (ec ? ": " + ec.message() : " (exists)"));
  }
  {
    const fs::path path = dir / kPayloadFile;
    Fd fd(path, O_WRONLY | O_CREAT | O_TRUNC);
    const size_t half = payload.size() / 2;
    at(CommitStep::kWritePayloadHead);
    write_all(fd.get(), payload.first(half), path);
    at(CommitStep::kWritePayloadTail);
    write_all(fd.get(), payload.subspan(half), path);
    at(CommitStep::kSyncPayload);
    fd.sync(path);
  }
  {
    const fs::path path = dir / kManifestFile;
    const std::string text = format_manifest(m);
    Fd fd(path, O_WRONLY | O_CREAT | O_TRUNC);
    at(CommitStep::kWriteManifest);
    write_all(fd.get(), std::as_bytes(std::span(text.data(), text.size())), path);
    at(CommitStep::kSyncManifest);
    fd.sync(path);
  }
  at(CommitStep::kWriteCommitMarker);
  {
    Fd fd(dir / kCommitFile, O_WRONLY | O_CREAT | O_TRUNC);
    fd.sync(dir / kCommitFile);
  }
  at(CommitStep::kSyncDirectory);
  sync_directory(dir);
  sync_directory(root_ / "ckpt");
  m.complete = true;
  return m;
}

std::optional<CheckpointManifest> CheckpointStore::read_manifest(uint64_t sequence) const {
  const fs::path dir = checkpoint_dir(sequence);
  std::ifstream f(dir / kManifestFile);
  if (!f) return std::nullopt;
  std::stringstream ss;
  ss << f.rdbuf();
  try {
    CheckpointManifest m = parse_manifest(ss.str());
    if (m.sequence != sequence) {
      spdlog::warn("checkpoint {}: manifest names sequence {}", sequence, m.sequence);
      return std::nullopt;
    }
    m.complete = fs::exists(dir / kCommitFile);
    return m;
  } catch (const std::exception& e) {
    spdlog::warn("checkpoint {}: unreadable manifest: {}", sequence, e.what());
    return std::nullopt;
  }
}

bool CheckpointStore::validate(const CheckpointManifest& manifest) const {
  const fs::path dir = checkpoint_dir(manifest.sequence);
  std::error_code ec;
  if (!fs::exists(dir / kCommitFile, ec)) return false;
  const fs::path payload = dir / kPayloadFile;
  const auto size = fs::file_size(payload, ec);
  if (ec || size != manifest.payload_size) return false;
  try {
    return fnv1a64(read_file_bytes(payload)) == manifest.checksum;
  } catch (const StoreError&) {
    return false;
  }
}

std::vector<CheckpointManifest> CheckpointStore::valid_checkpoints() const {
  std::vector<CheckpointManifest> out;
  auto seqs = sequences_on_disk();
  for (auto it = seqs.rbegin(); it != seqs.rend(); ++it) {
    auto m = read_manifest(*it);
    if (m && m->complete && validate(*m)) out.push_back(std::move(*m));
  }
  return out;
}

std::optional<CheckpointManifest> CheckpointStore::latest_valid() const {
  auto seqs = sequences_on_disk();
  for (auto it = seqs.rbegin(); it != seqs.rend(); ++it) {
    auto m = read_manifest(*it);
    if (m && m->complete && validate(*m)) return m;
  }
  return std::nullopt;
}

std::vector<std::byte> CheckpointStore::read_payload(const CheckpointManifest& manifest) const {
  return read_file_bytes(checkpoint_dir(manifest.sequence) / kPayloadFile);
}

void CheckpointStore::apply_retention(size_t keep) const {
  if (keep == 0) keep = 1;
  const auto valid = valid_checkpoints();
  if (valid.size() <= keep) return;
  const uint64_t oldest_kept = valid[keep - 1].sequence;
  for (uint64_t seq : sequences_on_disk()) {
    if (seq >= oldest_kept) break;
    std::error_code ec;
    fs::remove_all(checkpoint_dir(seq), ec);
    if (ec) spdlog::warn("retention: cannot remove checkpoint {}: {}", seq, ec.message());
  }
}

CheckpointManifest write_checkpoint(std::span<const std::byte> payload, const CheckpointMeta& meta,
                                    const fs::path& store_root, Instant now) {
  CheckpointStore store(store_root);
  store.initialize();
  return store.write(payload, meta, now);
}

std::optional<CheckpointManifest> latest_valid(const fs::path& store_root) {
  return CheckpointStore(store_root).latest_valid();
}

bool validate(const CheckpointManifest& manifest, const fs::path& store_root) {
  return CheckpointStore(store_root).validate(manifest);
}

// ---------------------------------------------------------------------------

std::string_view to_string(CheckpointerKind kind) {
  switch (kind) {
    case CheckpointerKind::kApplication:
      return "application";
    case CheckpointerKind::kTransparent:
      return "transparent";
    case CheckpointerKind::kToy:
      return "toy";
  }
  return "toy";
}

std::optional<CheckpointerKind> parse_checkpointer_kind(std::string_view text) {
  if (text == "application") return CheckpointerKind::kApplication;
  if (text == "transparent") return CheckpointerKind::kTransparent;
  if (text == "toy") return CheckpointerKind::kToy;
  return std::nullopt;
}

Checkpointer::Checkpointer(WorkloadSpec spec, Duration initial_estimate, Clock clock)
    : spec_(std::move(spec)), clock_(clock), initial_estimate_(initial_estimate) {}

Duration Checkpointer::estimate() const {
  std::lock_guard lock(mu_);
  return max_observed_.value_or(initial_estimate_);
}

void Checkpointer::observe_duration(Duration d) {
  std::lock_guard lock(mu_);
  max_observed_ = max_observed_ ? std::max(*max_observed_, d) : d;
}

ToyCheckpointer::ToyCheckpointer(WorkloadSpec spec, Duration initial_estimate,
                                 Duration snapshot_cost, Clock clock)
    : Checkpointer(std::move(spec), initial_estimate, clock), snapshot_cost_(snapshot_cost) {}

Snapshot ToyCheckpointer::snapshot(SnapshotTarget& target) {
  // The reply must arrive well within a poll tick for a live workload.
  const fs::path file = target.request_checkpoint(Duration(30));
  Snapshot snap;
  snap.payload = read_file_bytes(file);
  std::error_code ec;
  fs::remove(file, ec);
  try {
    snap.marker = marker_of(spec(), deserialize(spec(), snap.payload));
  } catch (const PayloadError& e) {
    throw CheckpointFailed(std::string("workload produced a bad image: ") + e.what());
  }
  if (snapshot_cost_.count() > 0) {
    target.freeze();
    clock().sleep_for(snapshot_cost_);
    target.thaw();
  }
  return snap;
}

WorkloadState ToyCheckpointer::restore(std::span<const std::byte> payload, const fs::path&) {
  return deserialize(spec(), payload);
}

bool ApplicationCheckpointer::can_checkpoint_now(const WorkloadState& state) const {
  return at_stage_boundary(spec(), state);
}

Snapshot ApplicationCheckpointer::snapshot(SnapshotTarget& target) {
  const auto file = target.latest_checkpoint_file();
  if (!file) throw CheckpointFailed("no application checkpoint available yet");
  if (last_registered_ && *last_registered_ == *file) {
    throw CheckpointFailed("no new application checkpoint since the last one");
  }
  Snapshot snap;
  snap.payload = read_file_bytes(*file);
  try {
    const WorkloadState s = deserialize(spec(), snap.payload);
    if (!at_stage_boundary(spec(), s)) {
      throw CheckpointFailed("application checkpoint is not at a stage boundary");
    }
    snap.marker = marker_of(spec(), s);
  } catch (const PayloadError& e) {
    throw CheckpointFailed(std::string("bad application checkpoint: ") + e.what());
  }
  last_registered_ = *file;
  return snap;
}

WorkloadState ApplicationCheckpointer::restore(std::span<const std::byte> payload, const fs::path&) {
  return deserialize(spec(), payload);
}

std::string expand_command(std::string_view templ,
                           std::span<const std::pair<std::string, std::string>> values) {
  std::string out(templ);
  for (const auto& [key, value] : values) {
    const std::string token = "{" + key + "}";
    for (size_t pos = out.find(token); pos != std::string::npos;
         pos = out.find(token, pos + value.size())) {
      out.replace(pos, token.size(), value);
    }
  }
  return out;
}

ExternalCheckpointer::ExternalCheckpointer(WorkloadSpec spec, Duration initial_estimate,
                                           std::string snapshot_cmd, std::string restore_cmd,
                                           fs::path work_root, Clock clock)
    : Checkpointer(std::move(spec), initial_estimate, clock),
      snapshot_cmd_(std::move(snapshot_cmd)),
      restore_cmd_(std::move(restore_cmd)),
      work_root_(std::move(work_root)) {}

Snapshot ExternalCheckpointer::snapshot(SnapshotTarget& target) {
  const fs::path dir = work_root_ / ("ext-snapshot-" + std::to_string(::getpid()) + "-" +
                                     std::to_string(counter_++));
  std::error_code ec;
  fs::remove_all(dir, ec);
  fs::create_directories(dir);
  const std::pair<std::string, std::string> values[] = {{"pid", std::to_string(target.pid())},
                                                        {"dir", dir.string()}};
  const ExitStatus status = run_shell(expand_command(snapshot_cmd_, values));
  last_exit_status_ = status.shell_code();
  if (!status.success()) {
    fs::remove_all(dir, ec);
    throw CheckpointFailed("snapshot command exited with status " +
                           std::to_string(status.shell_code()));
  }
  Snapshot snap;
  snap.payload = pack_directory(dir);
  fs::remove_all(dir, ec);
  return snap;
}

WorkloadState ExternalCheckpointer::restore(std::span<const std::byte> payload,
                                            const fs::path& work_dir) {
  const fs::path dir = work_dir / "ext-restore";
  std::error_code ec;
  fs::remove_all(dir, ec);
  unpack_directory(payload, dir);
  const std::pair<std::string, std::string> values[] = {{"dir", dir.string()}};
  const ExitStatus status = run_shell(expand_command(restore_cmd_, values));
  last_exit_status_ = status.shell_code();
  if (!status.success()) {
    throw CheckpointFailed("restore command exited with status " +
                           std::to_string(status.shell_code()));
  }
  const fs::path state_file = dir / "workload.state";
  if (!fs::exists(state_file)) {
    throw CheckpointFailed("restore command left no workload.state in " + dir.string());
  }
  try {
    return deserialize(spec(), read_file_bytes(state_file));
  } catch (const PayloadError& e) {
    throw CheckpointFailed(std::string("restored workload.state is invalid: ") + e.what());
  }
}

// Packed directory: "SPDR", u32 count, then per file: u32 name length, name,
// u64 size, bytes (all little-endian).
namespace {

void put_le(std::vector<std::byte>& out, uint64_t v, int width) {
  for (int i = 0; i < width; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xff));
}

uint64_t take_le(std::span<const std::byte>& in, size_t width) {
  if (in.size() < width) throw PayloadError("packed directory truncated");
  uint64_t v = 0;
  for (size_t i = 0; i < width; ++i) v |= static_cast<uint64_t>(in[i]) << (8 * i);
  in = in.subspan(width);
  return v;
}

}  // namespace

std::vector<std::byte> pack_directory(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file()) files.push_back(fs::relative(entry.path(), dir));
  }
  std::sort(files.begin(), files.end());
  std::vector<std::byte> out;
  for (char c : {'S', 'P', 'D', 'R'}) out.push_back(static_cast<std::byte>(c));
  put_le(out, files.size(), 4);
  for (const auto& rel : files) {
    const std::string name = rel.generic_string();
    put_le(out, name.size(), 4);
    for (char c : name) out.push_back(static_cast<std::byte>(c));
    const auto bytes = read_file_bytes(dir / rel);
    put_le(out, bytes.size(), 8);
    out.insert(out.end(), bytes.begin(), bytes.end());
  }
  return out;
}

void unpack_directory(std::span<const std::byte> payload, const fs::path& dir) {
  if (payload.size() < 8 || std::memcmp(payload.data(), "SPDR", 4) != 0) {
    throw PayloadError("not a packed directory");
  }
  payload = payload.subspan(4);
  const uint64_t count = take_le(payload, 4);
  fs::create_directories(dir);
  for (uint64_t i = 0; i < count; ++i) {
    const uint64_t name_len = take_le(payload, 4);
    if (payload.size() < name_len) throw PayloadError("packed directory truncated");
    std::string name(reinterpret_cast<const char*>(payload.data()), name_len);
    payload = payload.subspan(name_len);
    const fs::path rel(name);
    if (rel.is_absolute() || name.find("..") != std::string::npos) {
      throw PayloadError("packed directory entry escapes its root: " + name);
    }
    const uint64_t size = take_le(payload, 8);
    if (payload.size() < size) throw PayloadError("packed directory truncated");
    const fs::path target = dir / rel;
    fs::create_directories(target.parent_path());
    std::ofstream f(target, std::ios::binary | std::ios::trunc);
    f.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(size));
    payload = payload.subspan(size);
  }
  if (!payload.empty()) throw PayloadError("packed directory has trailing bytes");
}

}  // namespace spoton
