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

#include <map>
#include <random>
#include <set>

#include "shgw/flow.hpp"
#include "support.hpp"

using namespace shgw;
using testkit::packet;

namespace {

const Ipv4 kClient(192, 168, 1, 20);
const Ipv4 kServer(93, 184, 216, 34);
constexpr Micros kSec = kMicrosPerSecond;

Packet up(Micros ts, std::uint32_t len, std::uint8_t flags = 0, std::string payload = {}) {
  return packet(ts, kClient, 50000, kServer, 80, Transport::TCP, len, flags, std::move(payload));
}
Packet down(Micros ts, std::uint32_t len, std::uint8_t flags = 0) {
  return packet(ts, kServer, 80, kClient, 50000, Transport::TCP, len, flags);
}

}  // namespace

TEST_CASE("first packet creates a session owned by its sender") {
  FlowTable t;
  const Session& s = t.upsert(up(10 * kSec, 60));
  CHECK(s.first_ts == 10 * kSec);
  CHECK(s.last_ts == 10 * kSec);
  CHECK(s.pkt_count_up == 1);
  CHECK(s.pkt_count_down == 0);
  CHECK(s.initiator.ip == kClient);
  CHECK(s.responder.ip == kServer);
  CHECK(t.size() == 1);
}

TEST_CASE("reverse direction joins the same session") {
  FlowTable t;
  t.upsert(up(0, 60));
  const Session& s = t.upsert(down(1, 70));
  CHECK(t.size() == 1);
  CHECK(s.pkt_count_down == 1);
  CHECK(s.byte_count_down == 70);
  CHECK(FlowKey::of(up(0, 1)) == FlowKey::of(down(0, 1)));
}

TEST_CASE("upstream bytes accumulate") {
  FlowTable t;
  t.upsert(up(0, 100));
  t.upsert(up(1, 200));
  const Session& s = t.upsert(up(2, 300));
  CHECK(s.byte_count_up == 600);
  CHECK(s.pkt_len_up == std::vector<std::uint32_t>{100, 200, 300});
}

TEST_CASE("idle expiry uses a strict inequality") {
  FlowTable t;
  t.upsert(up(5 * kSec, 60));
  CHECK(t.expire(65 * kSec, 60 * kSec).empty());
  const auto gone = t.expire(70 * kSec, 60 * kSec);
  REQUIRE(gone.size() == 1);
  CHECK(gone[0].state == SessionState::Expired);
  CHECK(t.size() == 0);
}

TEST_CASE("FIN in both directions or RST closes immediately") {
  FlowTable t;
  t.upsert(up(0, 60, tcp_flag::kFin | tcp_flag::kAck));
  CHECK(t.take_closed().empty());
  t.upsert(down(1, 60, tcp_flag::kFin | tcp_flag::kAck));
  auto closed = t.take_closed();
  REQUIRE(closed.size() == 1);
  CHECK(closed[0].state == SessionState::Expired);
  CHECK(t.size() == 0);

  t.upsert(up(2, 60));
  t.upsert(down(3, 60, tcp_flag::kRst));
  CHECK(t.take_closed().size() == 1);
}

TEST_CASE("handshake timing is taken from SYN to the final ACK") {
  FlowTable t;
  t.upsert(up(1000, 74, tcp_flag::kSyn));
  t.upsert(down(1400, 74, tcp_flag::kSyn | tcp_flag::kAck));
  const Session& s = t.upsert(up(1900, 66, tcp_flag::kAck));
  CHECK(s.handshake.succeeded());
  CHECK(s.handshake.delay() == 900);
}

TEST_CASE("a full table evicts its most idle session and keeps the new packet") {
  FlowTableConfig cfg;
  cfg.capacity = 3;
  FlowTable t(cfg);
  for (std::uint16_t i = 0; i < 3; ++i)
    t.upsert(packet(i, kClient, static_cast<std::uint16_t>(1000 + i), kServer, 80, Transport::UDP, 50));
  t.upsert(packet(10, kClient, 1000, kServer, 80, Transport::UDP, 50));  // refresh the first
  const Session& s = t.upsert(packet(11, kClient, 2000, kServer, 80, Transport::UDP, 50));
  CHECK(s.pkt_count_up == 1);
  CHECK(t.size() == 3);
  CHECK(t.evictions() == 1);
  auto evicted = t.take_closed();
  REQUIRE(evicted.size() == 1);
  CHECK(evicted[0].initiator.port == 1001);
}

TEST_CASE("features of a fixed 96-byte upstream session") {
  FlowTable t;
  for (int i = 0; i < 5; ++i) t.upsert(packet(i * kSec, kClient, 5683, kServer, 5683, Transport::UDP, 96));
  const auto s = t.drain().at(0);
  const auto f = features(s);
  CHECK(f.mean_pkt_len_up == 96);
  CHECK(f.pkt_len_mode_up == 96);
  CHECK(f.pkt_len_stddev_up == 0);
  CHECK(f.total_pkts == 5);
  CHECK(f.duration == doctest::Approx(4.0));
  CHECK(f.up_down_byte_ratio == doctest::Approx(480.0));  // 480 / (0 + 1)
}

TEST_CASE("single-packet session has zero duration and inter-arrival") {
  FlowTable t;
  t.upsert(up(3 * kSec, 60));
  const auto f = features(t.drain().at(0));
  CHECK(f.duration == 0);
  CHECK(f.mean_interarrival == 0);
}

TEST_CASE("inter-arrival gaps at t = 0, 1, 3") {
  FlowTable t;
  t.upsert(up(0, 60));
  t.upsert(down(1 * kSec, 60));
  t.upsert(up(3 * kSec, 60));
  const auto s = t.drain().at(0);
  CHECK(s.interarrival == std::vector<Micros>{1 * kSec, 2 * kSec});
  CHECK(features(s).mean_interarrival == doctest::Approx(1.5));
}

TEST_CASE("packet-length mode breaks ties toward the smaller length") {
  FlowTable t;
  for (std::uint32_t len : {300u, 100u, 300u, 100u, 200u}) t.upsert(up(len, len));
  CHECK(features(t.drain().at(0)).pkt_len_mode_up == 100);
}

TEST_CASE("sample lists stop at capacity") {
  FlowTableConfig cfg;
  cfg.sample_capacity = 4;
  FlowTable t(cfg);
  for (int i = 0; i < 20; ++i) t.upsert(i % 2 ? down(i, 70) : up(i, 60));
  const auto s = t.drain().at(0);
  CHECK(s.pkt_len_up.size() == 4);
  CHECK(s.pkt_len_down.size() == 4);
  CHECK(s.interarrival.size() == 4);
  CHECK(s.pkt_count_up == 10);
  CHECK(s.byte_count_down == 700);
}

TEST_CASE("property: expiry matches a full scan over 1000 mixed sessions") {
  std::mt19937_64 rng(7);
  FlowTable t;
  std::map<std::pair<std::uint32_t, std::uint16_t>, Micros> last_seen;  // oracle
  Micros now = 0;
  // Every (host, transport, port) combination once, then random revisits.
  for (int i = 0; i < 5000; ++i) {
    now += static_cast<Micros>(rng() % 40'000);
    const int combo = i < 1000 ? i : static_cast<int>(rng() % 1000);
    const auto host = static_cast<std::uint32_t>(combo % 20);
    const auto transport = (combo / 20) % 2 ? Transport::UDP : Transport::TCP;
    const auto port = static_cast<std::uint16_t>(1000 + combo / 40);
    const Ipv4 src(0x0a000000 | host);
    const bool reverse = i >= 1000 && rng() % 3 == 0;
    auto p = reverse ? packet(now, kServer, 53, src, port, transport, 80) : packet(now, src, port, kServer, 53, transport, 80);
    if (transport == Transport::TCP) p.tcp_flags = tcp_flag::kAck;
    t.upsert(p);
    last_seen[{host * 2 + (transport == Transport::UDP), port}] = now;
  }
  REQUIRE(t.size() == last_seen.size());
  REQUIRE(t.size() == 1000);
  const Micros timeout = 60 * kSec;
  const Micros check_at = now + 5 * kSec;
  std::size_t expected = 0;
  for (const auto& [k, last] : last_seen)
    if (check_at - last > timeout) ++expected;
  REQUIRE(expected > 0);
  REQUIRE(expected < 1000);
  const auto gone = t.expire(check_at, timeout);
  CHECK(gone.size() == expected);
  for (const auto& s : gone) CHECK(check_at - s.last_ts > timeout);
  t.for_each([&](const Session& s) { CHECK(check_at - s.last_ts <= timeout); });
}

TEST_CASE("property: mirrored packets share a key and a session") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 2000; ++i) {
    const Ipv4 a(static_cast<std::uint32_t>(rng()));
    const Ipv4 b(static_cast<std::uint32_t>(rng()));
    const auto pa = static_cast<std::uint16_t>(rng());
    const auto pb = static_cast<std::uint16_t>(rng());
    const auto tr = rng() % 2 ? Transport::TCP : Transport::UDP;
    const auto fwd = packet(1, a, pa, b, pb, tr, 60);
    const auto rev = packet(2, b, pb, a, pa, tr, 60);
    CHECK(FlowKey::of(fwd) == FlowKey::of(rev));
    CHECK(FlowKeyHash{}(FlowKey::of(fwd)) == FlowKeyHash{}(FlowKey::of(rev)));
    FlowTable t;
    t.upsert(fwd);
    t.upsert(rev);
    CHECK(t.size() == 1);
  }
}

TEST_CASE("property: bytes are conserved and the table never exceeds capacity") {
  std::mt19937_64 rng(3);
  FlowTableConfig cfg;
  cfg.capacity = 64;
  cfg.sample_capacity = 8;
  FlowTable t(cfg);
  std::uint64_t input_bytes = 0, session_bytes = 0;
  auto account = [&](const std::vector<Session>& ss) {
    for (const auto& s : ss) {
      session_bytes += s.byte_count_up + s.byte_count_down;
      CHECK(s.first_ts <= s.last_ts);
      CHECK(s.pkt_len_up.size() <= 8);
    }
  };
  Micros now = 0;
  for (int i = 0; i < 20'000; ++i) {
    now += static_cast<Micros>(rng() % 5'000);
    const auto len = static_cast<std::uint32_t>(42 + rng() % 1400);
    const Ipv4 src(0x0a000000 | static_cast<std::uint32_t>(rng() % 500));
    std::uint8_t flags = tcp_flag::kAck;
    if (rng() % 50 == 0) flags |= tcp_flag::kFin;
    if (rng() % 200 == 0) flags |= tcp_flag::kRst;
    t.upsert(packet(now, src, 4000, kServer, 443, Transport::TCP, len, flags));
    input_bytes += len;
    CHECK(t.size() <= cfg.capacity);
    account(t.take_closed());
    if (i % 1000 == 0) account(t.expire(now, 2 * kSec));
  }
  account(t.drain());
  CHECK(session_bytes == input_bytes);
}
