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


#include <gtest/gtest.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "spoton/checkpoint.hpp"
#include "spoton/hash.hpp"

namespace spoton {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("spoton-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter_++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

 private:
  static inline int counter_ = 0;
  fs::path path_;
};

std::vector<std::byte> bytes_of(std::string_view s) {
  const auto b = std::as_bytes(std::span(s.data(), s.size()));
  return {b.begin(), b.end()};
}

CheckpointMeta meta(CheckpointKind kind = CheckpointKind::kPeriodic) {
  return {kind, 1, {"K33", 10}};
}

struct CrashAt {
  CommitStep step;
};

TEST(Store, FirstCheckpointIsSequenceOne) {
  TempDir t;
  CheckpointStore store(t.path());
  store.initialize();
  EXPECT_FALSE(store.latest_valid());
  const auto m = store.write(bytes_of("hello"), meta(), Instant{});
  EXPECT_EQ(m.sequence, 1u);
  EXPECT_TRUE(m.complete);
  EXPECT_TRUE(store.validate(m));
  EXPECT_EQ(store.read_payload(m), bytes_of("hello"));
}

TEST(Store, TerminationAfterPeriodicTakesNextSequence) {
  TempDir t;
  CheckpointStore store(t.path());
  store.initialize();
  for (int i = 0; i < 4; ++i) store.write(bytes_of("p"), meta(), Instant{});
  const auto m = store.write(bytes_of("t"), meta(CheckpointKind::kTermination), Instant{});
  EXPECT_EQ(m.sequence, 5u);
  EXPECT_EQ(store.latest_valid()->kind, CheckpointKind::kTermination);
}

TEST(Store, LatestValidSkipsIncomplete) {
  TempDir t;
  CheckpointStore store(t.path());
  store.initialize();
  store.write(bytes_of("one"), meta(), Instant{});
  store.write(bytes_of("two"), meta(), Instant{});
  const auto three = store.write(bytes_of("three"), meta(), Instant{});
  fs::remove(store.checkpoint_dir(three.sequence) / "COMMIT");
  EXPECT_FALSE(store.validate(three));
  EXPECT_EQ(store.latest_valid()->sequence, 2u);
}

TEST(Store, LatestValidSkipsChecksumMismatch) {
  TempDir t;
  CheckpointStore store(t.path());
  store.initialize();
  store.write(bytes_of("one"), meta(), Instant{});
  const auto two = store.write(bytes_of("two!"), meta(), Instant{});
  {
    std::fstream f(store.checkpoint_dir(2) / "payload.bin", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(1);
    f.put('W');
  }
  EXPECT_FALSE(store.validate(two));
  EXPECT_EQ(store.latest_valid()->sequence, 1u);
  // The free-function forms agree.
  EXPECT_EQ(latest_valid(t.path())->sequence, 1u);
  EXPECT_FALSE(validate(two, t.path()));
}

TEST(Store, UnreadableManifestIsSkipped) {
  TempDir t;
  CheckpointStore store(t.path());
  store.initialize();
  store.write(bytes_of("one"), meta(), Instant{});
  store.write(bytes_of("two"), meta(), Instant{});
  std::ofstream(store.checkpoint_dir(2) / "manifest") << "garbage without equals\n";
  EXPECT_EQ(store.latest_valid()->sequence, 1u);
}

TEST(Store, SequencesNeverReused) {
  TempDir t;
  CheckpointStore store(t.path());
  store.initialize();
  try {
    store.write(bytes_of("x"), meta(), Instant{}, [](CommitStep s) {
      if (s == CommitStep::kWriteManifest) throw CrashAt{s};
    });
  } catch (const CrashAt&) {
  }
  EXPECT_EQ(store.next_sequence(), 2u);
  EXPECT_EQ(store.write(bytes_of("y"), meta(), Instant{}).sequence, 2u);
}

TEST(Store, RetentionKeepsNewestValid) {
  TempDir t;
  CheckpointStore store(t.path());
  store.initialize();
  for (int i = 0; i < 5; ++i) store.write(bytes_of("p" + std::to_string(i)), meta(), Instant{});
  store.apply_retention(2);
  const auto valid = store.valid_checkpoints();
  ASSERT_EQ(valid.size(), 2u);
  EXPECT_EQ(valid[0].sequence, 5u);
  EXPECT_EQ(valid[1].sequence, 4u);
  EXPECT_FALSE(fs::exists(store.checkpoint_dir(3)));
  EXPECT_EQ(store.next_sequence(), 6u);
}

// Crash before every step of the write, for many payloads: latest_valid must
// return either the previous checkpoint or a fully intact new one.
TEST(StoreProperty, CrashAtomicAtEveryStep) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::byte> payload(rng() % 4096);
    for (auto& b : payload) b = static_cast<std::byte>(rng());
    for (int k = 0; k <= kCommitStepCount; ++k) {
      TempDir t;
      CheckpointStore store(t.path());
      store.initialize();
      const auto prior = store.write(bytes_of("prior"), meta(), Instant{});
      bool crashed = false;
      try {
        store.write(payload, meta(), Instant{}, [k](CommitStep s) {
          if (static_cast<int>(s) == k) throw CrashAt{s};
        });
      } catch (const CrashAt&) {
        crashed = true;
      }
      EXPECT_EQ(crashed, k < kCommitStepCount);
      const auto latest = store.latest_valid();
      ASSERT_TRUE(latest);
      ASSERT_TRUE(store.validate(*latest));
      if (latest->sequence == prior.sequence) {
        EXPECT_LT(k, static_cast<int>(CommitStep::kSyncDirectory));
      } else {
        EXPECT_EQ(store.read_payload(*latest), payload);
        EXPECT_GE(k, static_cast<int>(CommitStep::kSyncDirectory));
      }
    }
  }
}

TEST(Manifest, RoundTrip) {
  CheckpointManifest m;
  m.sequence = 12;
  m.kind = CheckpointKind::kTermination;
  m.attempt_id = 3;
  m.progress_marker = {"K 55", 17};
  m.payload_size = 48;
  m.checksum = 0xdeadbeefcafef00dULL;
  m.created_at = from_unix_seconds(1760000000.25);
  EXPECT_EQ(parse_manifest(format_manifest(m)), m);
  EXPECT_THROW(parse_manifest("sequence = 1\n"), std::invalid_argument);
}

TEST(Pack, DirectoryRoundTrip) {
  TempDir src, dst;
  fs::create_directories(src.path() / "sub");
  std::ofstream(src.path() / "a.img") << "alpha";
  std::ofstream(src.path() / "sub" / "b.img") << std::string(1000, 'b');
  const auto packed = pack_directory(src.path());
  unpack_directory(packed, dst.path() / "out");
  EXPECT_EQ(read_file_bytes(dst.path() / "out" / "a.img"), bytes_of("alpha"));
  EXPECT_EQ(read_file_bytes(dst.path() / "out" / "sub" / "b.img").size(), 1000u);
  EXPECT_EQ(pack_directory(dst.path() / "out"), packed);
}

TEST(Command, ExpandsPlaceholders) {
  const std::pair<std::string, std::string> v[] = {{"pid", "42"}, {"dir", "/tmp/x"}};
  EXPECT_EQ(expand_command("dump -t {pid} -D {dir} {pid}", v), "dump -t 42 -D /tmp/x 42");
  EXPECT_EQ(expand_command("{unknown}", v), "{unknown}");
}

class FakeTarget : public SnapshotTarget {
 public:
  int pid() const override { return 4242; }
  fs::path request_checkpoint(Duration) override { throw CheckpointFailed("unused"); }
  std::optional<fs::path> latest_checkpoint_file() const override { return std::nullopt; }
  void freeze() override {}
  void thaw() override {}
};

TEST(ExternalCheckpointer, StubSnapshotAndRestore) {
  TempDir t;
  WorkloadSpec spec;
  spec.stages = {{"a", 5}};
  WorkloadState st = step(spec, initial_state(spec));
  const fs::path state_file = t.path() / "state.bin";
  {
    const auto bytes = serialize(spec, st);
    std::ofstream(state_file, std::ios::binary)
        .write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  ExternalCheckpointer ok(spec, Duration(1),
                          "echo {pid} > {dir}/pid && cp " + state_file.string() + " {dir}/workload.state",
                          "test -f {dir}/pid", t.path(), Clock());
  FakeTarget target;
  const Snapshot snap = ok.snapshot(target);
  EXPECT_EQ(ok.last_exit_status(), 0);
  EXPECT_FALSE(snap.payload.empty());
  EXPECT_EQ(ok.restore(snap.payload, t.path() / "r"), st);

  ExternalCheckpointer fails(spec, Duration(1), "exit 1", "exit 3", t.path(), Clock());
  EXPECT_THROW(fails.snapshot(target), CheckpointFailed);
  EXPECT_EQ(fails.last_exit_status(), 1);
  EXPECT_THROW(fails.restore(snap.payload, t.path() / "r2"), CheckpointFailed);
  EXPECT_EQ(fails.last_exit_status(), 3);
}

TEST(Checkpointer, EstimateTracksLongestObserved) {
  ToyCheckpointer c(WorkloadSpec{}, Duration(5), Duration(1), Clock());
  EXPECT_EQ(c.estimate(), Duration(5));
  c.observe_duration(Duration(2));
  EXPECT_EQ(c.estimate(), Duration(2));
  c.observe_duration(Duration(3));
  c.observe_duration(Duration(1));
  EXPECT_EQ(c.estimate(), Duration(3));
}

TEST(Hash, Fnv1aKnownValues) {
  EXPECT_EQ(fnv1a64(std::string_view("")), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64(std::string_view("a")), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(to_hex64(0xabcULL), "0000000000000abc");
  uint64_t v = 0;
  EXPECT_TRUE(parse_hex64("00000000000000ff", &v));
  EXPECT_EQ(v, 0xffu);
  EXPECT_FALSE(parse_hex64("xyz", &v));
}

}  // namespace
}  // namespace spoton
