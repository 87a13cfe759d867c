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

#include <atomic>
#include <cmath>
#include <random>
#include <thread>

#include "spoton/cloudmock.hpp"
#include "spoton/eviction.hpp"

namespace spoton {
namespace {

using namespace std::chrono_literals;

Instant at(double s) { return from_unix_seconds(s); }

EvictionEvent event(std::string id, EventType type, Instant not_before) {
  EvictionEvent e;
  e.event_id = std::move(id);
  e.event_type = type;
  e.resources = {"vm-0"};
  e.not_before = format_rfc1123(not_before);
  return e;
}

TEST(Rfc1123, RoundTripAndReject) {
  const Instant t = at(1474309787);  // Mon, 19 Sep 2016 18:29:47 GMT
  EXPECT_EQ(format_rfc1123(t), "Mon, 19 Sep 2016 18:29:47 GMT");
  EXPECT_EQ(parse_rfc1123("Mon, 19 Sep 2016 18:29:47 GMT"), t);
  EXPECT_EQ(parse_rfc1123("Mon, 19 Sep 2016 18:29:47"), t);
  EXPECT_FALSE(parse_rfc1123(""));
  EXPECT_FALSE(parse_rfc1123("2016-09-19T18:29:47Z"));
  EXPECT_FALSE(parse_rfc1123("Mon, 32 Sep 2016 18:29:47 GMT"));
}

TEST(Iso8601, RoundTrip) {
  const Instant t = at(1760000000.125);
  EXPECT_EQ(parse_iso8601(format_iso8601(t)), t);
  EXPECT_FALSE(parse_iso8601("yesterday"));
}

TEST(Clock, EmulatedTimeRunsFaster) {
  const Instant anchor = std::chrono::system_clock::now();
  const Clock c(10.0, anchor);
  const Instant a = c.now();
  std::this_thread::sleep_for(100ms);
  const double elapsed = (c.now() - a).count();
  EXPECT_GT(elapsed, 0.9);
  EXPECT_LT(elapsed, 3.0);
  EXPECT_EQ(c.to_real(Duration(10)), std::chrono::nanoseconds(1'000'000'000));
}

TEST(Wire, RoundTripRandomDocuments) {
  std::mt19937_64 rng(77);
  const EventType types[] = {EventType::kPreempt, EventType::kReboot, EventType::kRedeploy,
                             EventType::kFreeze, EventType::kTerminate};
  for (int trial = 0; trial < 200; ++trial) {
    EventsDocument doc;
    doc.document_incarnation = static_cast<int64_t>(rng() % 1000);
    const int n = static_cast<int>(rng() % 4);
    for (int i = 0; i < n; ++i) {
      EvictionEvent e = event("ev-" + std::to_string(rng()), types[rng() % 5],
                              at(1.7e9 + static_cast<double>(rng() % 100000)));
      e.event_status = rng() % 2 ? "Scheduled" : "Started";
      e.resources.push_back("vm \"quoted\" " + std::to_string(i));
      doc.events.push_back(e);
    }
    EXPECT_EQ(parse_events_document(to_json(doc)), doc);
  }
}

TEST(Wire, RejectsMalformed) {
  EXPECT_THROW(parse_events_document("not json"), std::invalid_argument);
  EXPECT_THROW(parse_events_document("{\"Events\": []}"), std::invalid_argument);
  EXPECT_THROW(parse_events_document("{\"DocumentIncarnation\": 1}"), std::invalid_argument);
  EXPECT_THROW(parse_events_document(R"({"DocumentIncarnation":1,"Events":[{"EventType":"Preempt"}]})"),
               std::invalid_argument);
  const auto doc = parse_events_document(
      R"({"DocumentIncarnation":3,"Events":[{"EventId":"x","EventType":"Mystery"}]})");
  EXPECT_EQ(doc.events.at(0).event_type, EventType::kOther);
}

TEST(DetectPreempt, Examples) {
  const Instant now = at(1000);
  EventsDocument doc;
  EXPECT_FALSE(detect_preempt(doc, now));
  doc.events = {event("r", EventType::kReboot, now + Duration(120))};
  EXPECT_FALSE(detect_preempt(doc, now));
  doc.events.push_back(event("p", EventType::kPreempt, now + Duration(60)));
  const auto n = detect_preempt(doc, now);
  ASSERT_TRUE(n);
  EXPECT_EQ(n->event_id, "p");
  EXPECT_EQ(n->deadline, now + Duration(60));
}

TEST(DetectPreempt, EarliestDeadlineRegardlessOfOrder) {
  const Instant now = at(5000);
  std::vector<EvictionEvent> events = {
      event("c", EventType::kPreempt, now + Duration(90)),
      event("b", EventType::kPreempt, now + Duration(40)),
      event("a", EventType::kPreempt, now + Duration(40)),
      event("z", EventType::kFreeze, now + Duration(1)),
  };
  std::sort(events.begin(), events.end(),
            [](const auto& x, const auto& y) { return x.event_id < y.event_id; });
  do {
    EventsDocument doc{1, events};
    const auto n = detect_preempt(doc, now);
    ASSERT_TRUE(n);
    EXPECT_EQ(n->event_id, "a");
  } while (std::next_permutation(events.begin(), events.end(), [](const auto& x, const auto& y) {
    return x.event_id < y.event_id;
  }));
}

TEST(NoticeBudget, Examples) {
  const Instant now = at(100);
  auto budget = [now](double offset) {
    return notice_budget(EvictionNotice{"e", now + Duration(offset), now}, now);
  };
  EXPECT_EQ(budget(45).budget, Duration(45));
  EXPECT_FALSE(budget(45).anomaly);
  EXPECT_EQ(budget(10).budget, Duration(10));
  EXPECT_TRUE(budget(10).anomaly);
  EXPECT_EQ(budget(-5).budget, Duration(0));
}

TEST(Endpoint, Parse) {
  const auto e = parse_endpoint("http://127.0.0.1:8080/metadata/scheduledevents?api-version=2020-07-01");
  EXPECT_EQ(e.host, "127.0.0.1");
  EXPECT_EQ(e.port, 8080);
  EXPECT_EQ(e.target, "/metadata/scheduledevents?api-version=2020-07-01");
  EXPECT_EQ(parse_endpoint("http://169.254.169.254").port, 80);
  EXPECT_THROW(parse_endpoint("https://x"), std::invalid_argument);
  EXPECT_THROW(parse_endpoint("http://x:99999/"), std::invalid_argument);
  EXPECT_THROW(parse_endpoint("x:80"), std::invalid_argument);
}

class MockTest : public ::testing::Test {
 protected:
  void SetUp() override {
    MockOptions o;
    o.kill_at_deadline = false;
    mock_ = std::make_unique<MetadataMock>(o);
    mock_->start();
    endpoint_ = parse_endpoint(mock_->endpoint_url());
  }
  std::unique_ptr<MetadataMock> mock_;
  Endpoint endpoint_;
};

TEST_F(MockTest, EmptyDocument) {
  const auto doc = poll(endpoint_);
  EXPECT_TRUE(doc.events.empty());
  EXPECT_GT(doc.document_incarnation, 0);
}

TEST_F(MockTest, MissingHeaderIsRejected) {
  try {
    poll_without_metadata_header(endpoint_);
    FAIL() << "expected PollError";
  } catch (const PollError& e) {
    EXPECT_EQ(e.status(), 400);
  }
}

TEST_F(MockTest, TriggerIsVisibleAndClamped) {
  const Instant before = std::chrono::system_clock::now();
  const auto id = mock_->trigger_eviction(Duration(5));
  const auto doc = poll(endpoint_);
  ASSERT_EQ(doc.events.size(), 1u);
  EXPECT_EQ(doc.events[0].event_id, id);
  EXPECT_EQ(doc.events[0].event_type, EventType::kPreempt);
  const auto nb = parse_rfc1123(doc.events[0].not_before);
  ASSERT_TRUE(nb);
  const double notice = (*nb - before).count();
  EXPECT_GE(notice, 30.0);
  EXPECT_LE(notice, 31.5);
  EXPECT_EQ(mock_->document(), doc);
}

TEST_F(MockTest, LongerDelayIsKept) {
  const Instant before = std::chrono::system_clock::now();
  mock_->trigger_eviction(Duration(60));
  const auto notice = detect_preempt(poll(endpoint_), before);
  ASSERT_TRUE(notice);
  EXPECT_NEAR((notice->deadline - before).count(), 60.0, 1.5);
}

TEST_F(MockTest, SecondTriggerRejected) {
  mock_->trigger_eviction(Duration(30));
  EXPECT_THROW(mock_->trigger_eviction(Duration(30)), MockError);
  EXPECT_THROW(remote_trigger_eviction(endpoint_, Duration(30)), MockError);
}

TEST_F(MockTest, RemoteTriggerAndIncarnation) {
  const int64_t inc = poll(endpoint_).document_incarnation;
  const auto id = remote_trigger_eviction(endpoint_, Duration(45));
  const auto doc = poll(endpoint_);
  ASSERT_EQ(doc.events.size(), 1u);
  EXPECT_EQ(doc.events[0].event_id, id);
  EXPECT_GT(doc.document_incarnation, inc);
}

TEST(Mock, RefusesNonLoopback) {
  MockOptions o;
  o.bind_address = "0.0.0.0";
  MetadataMock m(o);
  EXPECT_THROW(m.start(), MockError);
}

TEST(Mock, DeadlineClearsPendingUnderEmulatedTime) {
  MockOptions o;
  o.kill_at_deadline = false;
  o.clock = Clock(30.0, std::chrono::system_clock::now());
  MetadataMock m(o);
  m.start();
  m.trigger_eviction(Duration(0));
  EXPECT_TRUE(m.state().pending);
  // 30 emulated seconds (plus rounding) is about 1 real second.
  EXPECT_TRUE(m.wait_until_clear(Duration(120)));
  EXPECT_FALSE(m.state().pending);
}

TEST(Mock, ScheduledPlanFires) {
  MockOptions o;
  o.kill_at_deadline = false;
  o.min_notice = Duration(1);
  o.clock = Clock(20.0, std::chrono::system_clock::now());
  MetadataMock m(o);
  m.start();
  m.schedule_evictions({{Duration(2), Duration(1)}});
  EXPECT_THROW(m.schedule_evictions({{Duration(2), Duration(1)}, {Duration(1), Duration(1)}}),
               MockError);
  const Instant start = std::chrono::system_clock::now();
  while (!m.state().pending && std::chrono::system_clock::now() - start < 5s) {
    std::this_thread::sleep_for(10ms);
  }
  EXPECT_TRUE(m.state().pending);
}

TEST(Poller, DeliversEachNoticeOnce) {
  MockOptions o;
  o.kill_at_deadline = false;
  MetadataMock m(o);
  m.start();
  std::atomic<int> notices{0};
  EvictionPoller poller(parse_endpoint(m.endpoint_url()), Duration(0.02), Clock(),
                        [&](const EvictionNotice&) { ++notices; });
  poller.start();
  m.trigger_eviction(Duration(30));
  std::this_thread::sleep_for(300ms);
  poller.stop();
  EXPECT_EQ(notices.load(), 1);
  EXPECT_GT(poller.successful_polls(), 3u);
}

TEST(Poller, SurvivesDeadEndpoint) {
  std::atomic<int> ticks{0};
  EvictionPoller poller(parse_endpoint("http://127.0.0.1:1/metadata/scheduledevents"),
                        Duration(0.02), Clock(), [](const EvictionNotice&) {}, [&] { ++ticks; });
  poller.start();
  std::this_thread::sleep_for(200ms);
  poller.stop();
  EXPECT_GT(poller.failed_polls(), 1u);
  EXPECT_EQ(poller.successful_polls(), 0u);
  EXPECT_GT(ticks.load(), 1);
}

}  // namespace
}  // namespace spoton
