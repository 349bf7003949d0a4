// Copyright 2026 The shgw Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <doctest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <map>
#include <random>
#include <set>

#include "shgw/probe.hpp"
#include "shgw/qos.hpp"
#include "support.hpp"

using namespace shgw;
using testkit::packet;

namespace {

constexpr Micros kSec = kMicrosPerSecond;
const Ipv4 kServer(203, 0, 113, 200);

AwarenessLabels labels_for(std::uint16_t client_port) {
  AwarenessLabels l;
  l.service = ServiceType::Other;
  l.application = "app" + std::to_string(client_port % 4);
  l.provider = "prov";
  l.location.subnet_tag = "lan";
  l.subscriber.subscriber_id = "sub" + std::to_string(client_port % 3);
  return l;
}

struct SessionPlan {
  std::uint16_t port = 0;
  std::vector<Packet> packets;
  bool syn = false;
  bool established = false;
  Micros syn_ts = 0;
  Micros first() const { return packets.front().ts; }
  Micros last() const { return packets.back().ts; }
};

/// Random sessions with distinct client ports, gaps well under the idle
/// timeout, and a mix of completed and failed TCP handshakes.
std::vector<SessionPlan> plan_trace(std::uint64_t seed, int sessions, Micros span) {
  std::mt19937_64 rng(seed);
  std::vector<SessionPlan> plans;
  for (int i = 0; i < sessions; ++i) {
    SessionPlan sp;
    sp.port = static_cast<std::uint16_t>(20000 + i);
    const Ipv4 client(0x0a000000u | static_cast<std::uint32_t>(1 + i % 200));
    Micros ts = static_cast<Micros>(rng() % static_cast<std::uint64_t>(span));
    const int kind = static_cast<int>(rng() % 3);  // 0 handshake ok, 1 SYN only, 2 no SYN
    auto up = [&](std::uint32_t len, std::uint8_t flags) {
      sp.packets.push_back(packet(ts, client, sp.port, kServer, 443, Transport::TCP, len, flags));
    };
    auto down = [&](std::uint32_t len, std::uint8_t flags) {
      sp.packets.push_back(packet(ts, kServer, 443, client, sp.port, Transport::TCP, len, flags));
    };
    if (kind == 0 || kind == 1) {
      sp.syn = true;
      sp.syn_ts = ts;
      up(74, tcp_flag::kSyn);
      if (kind == 0) {
        ts += 1 + static_cast<Micros>(rng() % 50'000);
        down(74, tcp_flag::kSyn | tcp_flag::kAck);
        ts += 1 + static_cast<Micros>(rng() % 50'000);
        up(66, tcp_flag::kAck);
        sp.established = true;
      }
    }
    const int extra = kind == 1 ? 0 : static_cast<int>(rng() % 20);
    for (int k = 0; k < extra || sp.packets.empty(); ++k) {
      ts += static_cast<Micros>(rng() % 800'000);
      const auto len = static_cast<std::uint32_t>(60 + rng() % 1400);
      if (rng() % 2) up(len, tcp_flag::kAck); else down(len, tcp_flag::kAck);
    }
    plans.push_back(std::move(sp));
  }
  return plans;
}

std::vector<Packet> merged(const std::vector<SessionPlan>& plans) {
  std::vector<Packet> all;
  for (const auto& sp : plans) all.insert(all.end(), sp.packets.begin(), sp.packets.end());
  std::stable_sort(all.begin(), all.end(), [](const Packet& a, const Packet& b) { return a.ts < b.ts; });
  return all;
}

/// Drives flow table and monitor the way the gateway does.
std::vector<QosSnapshot> run_monitor(const std::vector<Packet>& trace, QosConfig cfg) {
  FlowTable table;
  QosMonitor qos(cfg);
  std::vector<QosSnapshot> out;
  auto emit = [&](const std::vector<Session>& ss) {
    // Sessions opened by a downstream packet have the server as initiator.
    for (const auto& s : ss) qos.on_session(s, labels_for(s.initiator.port == 443 ? s.responder.port : s.initiator.port));
  };
  Micros last_sweep = trace.empty() ? 0 : trace.front().ts;
  for (const auto& p : trace) {
    const Session& s = table.upsert(p);
    qos.record_traffic(p, s);
    emit(table.take_closed());
    if (p.ts - last_sweep >= 200'000) {
      last_sweep = p.ts;
      emit(table.expire(p.ts, 2 * kSec));
      for (auto& snap : qos.close_ready(p.ts, table)) out.push_back(std::move(snap));
    }
  }
  emit(table.drain());
  for (auto& snap : qos.close_all()) out.push_back(std::move(snap));
  return out;
}

struct Expected {
  std::uint64_t total = 0;
  std::map<std::pair<std::string, std::string>, std::uint64_t> buckets;
  std::uint32_t peak = 0;
  std::multiset<std::pair<std::string, Micros>> delays;
  std::uint64_t ok = 0, failed = 0;
};

/// Full-scan recomputation straight from the planned sessions.
std::map<Micros, Expected> oracle(const std::vector<SessionPlan>& plans, Micros window) {
  std::map<Micros, Expected> by_window;
  auto start_of = [&](Micros ts) { return ts / window * window; };
  for (const auto& sp : plans) {
    const auto labels = labels_for(sp.port);
    for (const auto& p : sp.packets) {
      auto& e = by_window[start_of(p.ts)];
      e.total += p.wire_len;
      for (const auto& b : label_buckets(labels)) e.buckets[b] += p.wire_len;
    }
  }
  for (const auto& sp : plans) {
    const auto labels = labels_for(sp.port);
    by_window[start_of(sp.last())].delays.insert({labels.application, sp.last() - sp.first()});
    if (sp.syn) (sp.established ? by_window[start_of(sp.syn_ts)].ok : by_window[start_of(sp.syn_ts)].failed)++;
  }
  for (auto& [ws, e] : by_window) {
    // Candidate instants: the window start and every session start inside it.
    std::vector<Micros> instants{ws};
    for (const auto& sp : plans)
      if (sp.first() >= ws && sp.first() < ws + window) instants.push_back(sp.first());
    for (Micros t : instants) {
      std::uint32_t open = 0;
      for (const auto& sp : plans) open += sp.first() <= t && t <= sp.last();
      e.peak = std::max(e.peak, open);
    }
  }
  return by_window;
}

std::size_t windows_with_packets(const std::vector<QosSnapshot>& snaps) {
  return static_cast<std::size_t>(
      std::count_if(snaps.begin(), snaps.end(), [](const QosSnapshot& s) { return s.total_bytes > 0; }));
}

std::uint64_t dimension_sum(const QosSnapshot& s, const std::string& dim) {
  std::uint64_t sum = 0;
  for (const auto& [k, v] : s.bytes_by_dimension)
    if (k.first == dim || k.first == kPendingBucket) sum += v;
  return sum;
}

}  // namespace

TEST_CASE("three 1000-byte packets in a one-second window are 24 kbit/s") {
  QosConfig cfg;
  cfg.window_len = kSec;
  QosMonitor qos(cfg);
  FlowTable t;
  for (int i = 0; i < 3; ++i) {
    const auto p = packet(5 * kSec + i * 1000, Ipv4(10, 0, 0, 1), 1000, kServer, 80, Transport::UDP, 1000);
    qos.record_traffic(p, t.upsert(p));
  }
  const auto snaps = qos.close_all();
  REQUIRE(snaps.size() == 1);
  CHECK(snaps[0].window_start == 5 * kSec);
  CHECK(snaps[0].window_end == 6 * kSec);
  CHECK(snaps[0].total_bandwidth_bps() == doctest::Approx(24'000));
  CHECK(snaps[0].bytes_by_dimension.at({"pending", "pending"}) == 3000);
}

TEST_CASE("an empty window has zero buckets and bandwidth") {
  QosSnapshot s;
  s.window_start = 0;
  s.window_end = 60 * kSec;
  CHECK(s.total_bytes == 0);
  CHECK(s.bytes_by_dimension.empty());
  CHECK(s.total_bandwidth_bps() == 0);
  QosMonitor qos;
  CHECK(qos.close_all().empty());
}

TEST_CASE("session delay is last minus first") {
  FlowTable t;
  t.upsert(packet(1'000'000, Ipv4(10, 0, 0, 1), 1, kServer, 2, Transport::UDP, 60));
  const Session& s = t.upsert(packet(1'350'000, Ipv4(10, 0, 0, 1), 1, kServer, 2, Transport::UDP, 60));
  CHECK(session_delay(s) == 350'000);
  FlowTable single;
  CHECK(session_delay(single.upsert(packet(7, Ipv4(10, 0, 0, 1), 1, kServer, 2, Transport::UDP, 60))) == 0);
}

TEST_CASE("delay sampling at 10% keeps between 60 and 140 of 1000 sessions") {
  for (std::uint64_t seed : {0u, 1u, 2u, 3u}) {
    int kept = 0;
    for (int i = 0; i < 1000; ++i) {
      FlowTable t;
      const Session& s =
          t.upsert(packet(i * 1000, Ipv4(10, 0, 0, 1), static_cast<std::uint16_t>(i), kServer, 53, Transport::UDP, 60));
      kept += sample_delay(s, 0.1, seed);
      CHECK(sample_delay(s, 0.1, seed) == sample_delay(s, 0.1, seed));
      CHECK(sample_delay(s, 1.0, seed));
      CHECK_FALSE(sample_delay(s, 0.0, seed));
    }
    CHECK(kept >= 60);
    CHECK(kept <= 140);
  }
}

TEST_CASE("sweep-line peak over closed intervals") {
  const std::vector<ConnEvent> staircase{{1, true}, {2, true}, {3, true}, {4, false}, {5, false}, {6, false}};
  CHECK(peak_concurrency(staircase) == 3);
  CHECK(peak_concurrency({}) == 0);
  // Close and open at the same instant overlap.
  const std::vector<ConnEvent> touching{{1, true}, {5, false}, {5, true}, {9, false}};
  CHECK(peak_concurrency(touching) == 2);
  const std::vector<ConnEvent> unordered{{5, true}, {1, false}};
  CHECK_THROWS_AS(peak_concurrency(unordered), QosError);
  CHECK_THROWS_AS(concurrent_connections(unordered, 0, 10), QosError);
  CHECK(concurrent_connections({}, 0, 10).empty());
}

TEST_CASE("property: per-window peaks match a per-millisecond brute-force count") {
  std::mt19937_64 rng(2026);
  constexpr int kIntervals = 5000;  // 10,000 events
  constexpr Micros kMs = 1000;
  constexpr Micros kWindow = 500 * kMs;
  std::vector<std::pair<Micros, Micros>> spans;
  std::vector<ConnEvent> events;
  for (int i = 0; i < kIntervals; ++i) {
    const Micros open = static_cast<Micros>(rng() % 20'000) * kMs;
    const Micros close = open + static_cast<Micros>(rng() % 300) * kMs;
    spans.push_back({open, close});
    events.push_back({open, true});
    events.push_back({close, false});
  }
  std::stable_sort(events.begin(), events.end(), [](const ConnEvent& a, const ConnEvent& b) { return a.ts < b.ts; });
  const auto peaks = concurrent_connections(events, 0, kWindow);

  const Micros end = events.back().ts;
  std::vector<std::uint32_t> brute(static_cast<std::size_t>(end / kWindow) + 1, 0);
  std::uint32_t global = 0;
  for (Micros t = 0; t <= end; t += kMs) {
    std::uint32_t open = 0;
    for (const auto& [a, b] : spans) open += a <= t && t <= b;
    auto& w = brute[static_cast<std::size_t>(t / kWindow)];
    w = std::max(w, open);
    global = std::max(global, open);
  }
  CHECK(peaks == brute);
  CHECK(peak_concurrency(events) == global);
}

TEST_CASE("property: monitor output equals a full-scan recomputation") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto plans = plan_trace(seed, 300, 10 * kSec);
    QosConfig cfg;
    cfg.window_len = kSec;
    const auto snaps = run_monitor(merged(plans), cfg);
    const auto want = oracle(plans, kSec);
    REQUIRE(windows_with_packets(snaps) == want.size());
    std::set<Micros> seen;
    for (const auto& s : snaps) {
      CHECK(seen.insert(s.window_start).second);  // each window reported once
      CHECK(s.window_end - s.window_start == kSec);
      auto it = want.find(s.window_start);
      if (it == want.end()) {
        CHECK(s.total_bytes == 0);
        continue;
      }
      const Expected& e = it->second;
      CHECK(s.total_bytes == e.total);
      CHECK(s.bytes_by_dimension == e.buckets);
      CHECK(s.concurrent_sessions == e.peak);
      CHECK(std::multiset<std::pair<std::string, Micros>>(s.delay_samples.begin(), s.delay_samples.end()) == e.delays);
      CHECK(s.connect_success == e.ok);
      CHECK(s.connect_fail == e.failed);
      std::uint64_t attempts = 0;
      for (const auto& [app, c] : s.connect_by_application) attempts += c.attempts;
      CHECK(attempts == s.connect_success + s.connect_fail);
      CHECK(s.handshake_delays.size() == s.connect_success);
    }
  }
}

TEST_CASE("property: a tiny event budget may overcount peaks but changes nothing else") {
  const auto plans = plan_trace(4, 300, 10 * kSec);
  QosConfig cfg;
  cfg.window_len = kSec;
  cfg.max_pending_events = 4;
  const auto snaps = run_monitor(merged(plans), cfg);
  const auto want = oracle(plans, kSec);
  for (const auto& s : snaps) {
    auto it = want.find(s.window_start);
    if (it == want.end()) continue;
    CHECK(s.total_bytes == it->second.total);
    CHECK(s.bytes_by_dimension == it->second.buckets);
    CHECK(s.concurrent_sessions >= it->second.peak);
    CHECK(s.connect_success == it->second.ok);
  }
}

TEST_CASE("bytes are conserved per dimension while sessions are still pending") {
  QosConfig cfg;
  cfg.window_len = kSec;
  QosMonitor qos(cfg);
  FlowTable t;
  std::uint64_t sent = 0;
  for (int i = 0; i < 40; ++i) {
    const auto port = static_cast<std::uint16_t>(3000 + i % 5);
    const auto p = packet(i * 10'000, Ipv4(10, 0, 0, 1), port, kServer, 80, Transport::UDP, 100 + i);
    qos.record_traffic(p, t.upsert(p));
    sent += p.wire_len;
  }
  // Emit two of the five sessions; the rest stay pending.
  auto drained = t.drain();
  for (std::size_t i = 0; i < 2; ++i) qos.on_session(drained[i], labels_for(drained[i].initiator.port));
  const auto snaps = qos.close_all();
  REQUIRE(snaps.size() == 1);
  const auto& s = snaps[0];
  CHECK(s.total_bytes == sent);
  for (const char* dim : {"service", "application", "device_type", "provider", "location", "subscriber"})
    CHECK(dimension_sum(s, dim) == sent);
  std::uint64_t unemitted = 0;
  for (std::size_t i = 2; i < drained.size(); ++i) unemitted += drained[i].byte_count_up;
  CHECK(s.bytes_by_dimension.at({"pending", "pending"}) == unemitted);
}

TEST_CASE("closing is idempotent and late traffic does not reopen a window") {
  QosConfig cfg;
  cfg.window_len = kSec;
  QosMonitor qos(cfg);
  FlowTable t;
  const auto p = packet(100, Ipv4(10, 0, 0, 1), 1, kServer, 2, Transport::UDP, 80);
  qos.record_traffic(p, t.upsert(p));
  for (auto& s : t.drain()) qos.on_session(s, labels_for(1));
  const FlowTable empty;
  CHECK(qos.close_ready(5 * kSec, empty).size() == 1);
  CHECK(qos.close_ready(5 * kSec, empty).empty());
  CHECK(qos.close_all().empty());
  FlowTable t2;
  const auto late = packet(200, Ipv4(10, 0, 0, 9), 1, kServer, 2, Transport::UDP, 80);
  qos.record_traffic(late, t2.upsert(late));
  CHECK(qos.close_all().empty());
}

TEST_CASE("a window with a live session waits, up to the deferral limit") {
  QosConfig cfg;
  cfg.window_len = kSec;
  cfg.max_defer = 10 * kSec;
  QosMonitor qos(cfg);
  FlowTable t;
  const auto p = packet(100, Ipv4(10, 0, 0, 1), 1, kServer, 2, Transport::UDP, 80);
  qos.record_traffic(p, t.upsert(p));
  CHECK(qos.close_ready(2 * kSec, t).empty());
  CHECK(qos.open_windows() == 1);
  const auto forced = qos.close_ready(11 * kSec, t);
  REQUIRE(forced.size() == 1);
  CHECK(forced[0].bytes_by_dimension.count({"pending", "pending"}) == 1);
}

TEST_CASE("sample lists turn into a bounded, deterministic reservoir") {
  auto run = [] {
    QosConfig cfg;
    cfg.window_len = 10 * kSec;
    cfg.max_samples_per_window = 16;
    QosMonitor qos(cfg);
    std::set<Micros> population;
    for (int i = 0; i < 1000; ++i) {
      FlowTable t;
      const Ipv4 c(10, 0, 0, 1);
      const auto port = static_cast<std::uint16_t>(1000 + i);
      const auto a = packet(i * 1000, c, port, kServer, 2, Transport::UDP, 80);
      const auto b = packet(i * 1000 + 1 + i, c, port, kServer, 2, Transport::UDP, 80);
      qos.record_traffic(a, t.upsert(a));
      qos.record_traffic(b, t.upsert(b));
      for (auto& s : t.drain()) {
        population.insert(session_delay(s));
        qos.on_session(s, labels_for(port));
      }
    }
    auto snaps = qos.close_all();
    REQUIRE(snaps.size() == 1);
    for (const auto& [app, d] : snaps[0].delay_samples) CHECK(population.count(d) == 1);
    return snaps[0].delay_samples;
  };
  const auto first = run();
  CHECK(first.size() == 16);
  CHECK(first == run());
  // Not simply the first sixteen sessions.
  CHECK(std::any_of(first.begin(), first.end(), [](const auto& s) { return s.second > 16; }));
}

TEST_CASE("handshake outcomes: success needs SYN, SYN-ACK and ACK") {
  QosConfig cfg;
  cfg.window_len = 10 * kSec;
  QosMonitor qos(cfg);
  FlowTable t;
  const Ipv4 c(10, 0, 0, 1);
  auto feed = [&](Packet p) { qos.record_traffic(p, t.upsert(p)); };
  feed(packet(100, c, 1, kServer, 80, Transport::TCP, 74, tcp_flag::kSyn));
  feed(packet(200, kServer, 80, c, 1, Transport::TCP, 74, tcp_flag::kSyn | tcp_flag::kAck));
  feed(packet(350, c, 1, kServer, 80, Transport::TCP, 66, tcp_flag::kAck));
  feed(packet(400, c, 2, kServer, 80, Transport::TCP, 74, tcp_flag::kSyn));
  feed(packet(500, kServer, 80, c, 2, Transport::TCP, 74, tcp_flag::kSyn | tcp_flag::kAck));
  feed(packet(600, c, 3, kServer, 80, Transport::TCP, 74, tcp_flag::kSyn));
  feed(packet(700, c, 4, kServer, 80, Transport::TCP, 66, tcp_flag::kAck));  // mid-stream, no SYN seen
  for (auto& s : t.drain()) qos.on_session(s, labels_for(s.initiator.port));
  const auto snaps = qos.close_all();
  REQUIRE(snaps.size() == 1);
  CHECK(snaps[0].connect_success == 1);
  CHECK(snaps[0].connect_fail == 2);
  REQUIRE(snaps[0].handshake_delays.size() == 1);
  CHECK(snaps[0].handshake_delays[0].second == 250);
  CHECK(snaps[0].concurrent_sessions == 1);  // the four sessions never overlap
}

namespace {

class Listener {
 public:
  explicit Listener(int backlog = 64) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    REQUIRE(::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0);
    REQUIRE(::listen(fd_, backlog) == 0);
    socklen_t len = sizeof addr;
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
  }
  ~Listener() {
    for (int c : clients_) ::close(c);
    ::close(fd_);
  }
  std::uint16_t port() const { return port_; }

  /// Opens connections that are never accepted, filling the accept queue so
  /// later SYNs are dropped and connects time out.
  void saturate(int n) {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(port_);
    for (int i = 0; i < n; ++i) {
      const int c = ::socket(AF_INET, SOCK_STREAM | SOCK_NONBLOCK, 0);
      ::connect(c, reinterpret_cast<sockaddr*>(&addr), sizeof addr);
      clients_.push_back(c);
    }
    ::usleep(50'000);
  }

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
  std::vector<int> clients_;
};

}  // namespace

TEST_CASE("active probe against a loopback listener") {
  Listener l;
  PolicyDocument policy;
  const ProbeTarget target{"127.0.0.1", l.port()};
  policy.probe_allowlist = {target};
  const auto r = active_probe(policy, target, 5, std::chrono::milliseconds(500));
  CHECK(r.loss == 0);
  REQUIRE(r.rtt);
  CHECK(r.samples.size() == 5);
  CHECK(r.rtt->min > 0);
  CHECK(r.rtt->min <= r.rtt->mean);
  CHECK(r.rtt->mean <= r.rtt->p95);
}

TEST_CASE("probe targets must be allow-listed") {
  PolicyDocument policy;
  try {
    active_probe(policy, {"127.0.0.1", 9}, 1, std::chrono::milliseconds(100));
    FAIL("expected ProbeError");
  } catch (const ProbeError& e) {
    CHECK(e.code() == ProbeError::Code::TargetNotAllowed);
  }
}

TEST_CASE("a target that never answers loses every probe within the timeout") {
  Listener l(0);
  l.saturate(4);
  PolicyDocument policy;
  const ProbeTarget target{"127.0.0.1", l.port()};
  policy.probe_allowlist = {target};
  const auto start = std::chrono::steady_clock::now();
  const auto r = active_probe(policy, target, 3, std::chrono::milliseconds(100));
  const auto elapsed = std::chrono::steady_clock::now() - start;
  CHECK(r.loss == 1.0);
  CHECK(r.all_timed_out());
  CHECK(r.samples.empty());
  CHECK(elapsed < std::chrono::milliseconds(600));
}

TEST_CASE("refused connections count as lost probes") {
  std::uint16_t closed_port;
  {
    Listener gone;
    closed_port = gone.port();
  }
  PolicyDocument policy;
  const ProbeTarget target{"127.0.0.1", closed_port};
  policy.probe_allowlist = {target};
  const auto r = active_probe(policy, target, 2, std::chrono::milliseconds(100));
  CHECK(r.loss == 1.0);
  CHECK_FALSE(r.rtt);
}
