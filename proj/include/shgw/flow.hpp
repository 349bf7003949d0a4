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

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <list>
#include <optional>
#include <unordered_map>
#include <vector>

#include "shgw/capture.hpp"
#include "shgw/http.hpp"
#include "shgw/net.hpp"

namespace shgw {

/// Bidirectional 5-tuple with the lower (ip, port) endpoint first.
struct FlowKey {
  Ipv4 lo_ip;
  std::uint16_t lo_port = 0;
  Ipv4 hi_ip;
  std::uint16_t hi_port = 0;
  Transport transport = Transport::OTHER;

  static FlowKey of(const Packet& pkt);
  bool operator==(const FlowKey&) const = default;
};

struct FlowKeyHash {
  std::size_t operator()(const FlowKey& k) const noexcept;
};

struct Endpoint {
  Ipv4 ip;
  std::uint16_t port = 0;
  MacAddr mac{};

  bool operator==(const Endpoint&) const = default;
};

enum class SessionState { Active, Expired };

struct Handshake {
  std::optional<Micros> syn_ts;
  bool syn_ack = false;
  std::optional<Micros> established_ts;

  bool attempted() const { return syn_ts.has_value(); }
  bool succeeded() const { return established_ts.has_value(); }
  Micros delay() const { return succeeded() ? *established_ts - *syn_ts : 0; }
};

struct Session {
  FlowKey key;
  Endpoint initiator;
  Endpoint responder;
  Transport transport = Transport::OTHER;
  Micros first_ts = 0;
  Micros last_ts = 0;
  std::uint64_t pkt_count_up = 0;
  std::uint64_t pkt_count_down = 0;
  std::uint64_t byte_count_up = 0;
  std::uint64_t byte_count_down = 0;
  // First `sample_capacity` observations only.
  std::vector<std::uint32_t> pkt_len_up;
  std::vector<std::uint32_t> pkt_len_down;
  std::vector<Micros> interarrival;
  SessionState state = SessionState::Active;
  HttpStream http;
  Handshake handshake;
  bool fin_up = false;
  bool fin_down = false;
  bool rst = false;

  std::uint64_t total_packets() const { return pkt_count_up + pkt_count_down; }
  const HttpGetInfo* http_info() const { return http.info(); }
  std::size_t approx_bytes() const;
};

/// Per-session feature vector for the encrypted-session classifier.
struct SessionFeatures {
  double duration = 0;  // seconds
  double total_pkts = 0;
  double mean_pkt_len_up = 0;
  double mean_pkt_len_down = 0;
  double pkt_len_mode_up = 0;
  double pkt_len_stddev_up = 0;
  double mean_interarrival = 0;  // seconds
  double up_down_byte_ratio = 0;

  static constexpr std::size_t kCount = 8;
  static const std::array<const char*, kCount>& names();

  std::array<double, kCount> as_array() const;
  static SessionFeatures from_array(const std::array<double, kCount>& v);
  bool operator==(const SessionFeatures&) const = default;
};

SessionFeatures features(const Session& s);

struct FlowTableConfig {
  std::size_t capacity = 65'536;
  std::size_t sample_capacity = 64;
  std::size_t http_max_scan = kDefaultMaxScan;
};

constexpr Micros kDefaultIdleTimeout = 60 * kMicrosPerSecond;

class FlowTable {
 public:
  explicit FlowTable(FlowTableConfig cfg = {});

  /// Adds the packet to its session, creating one when needed. When the table
  /// is full the oldest-idle session is force-expired into the closed list.
  /// The returned reference is valid until the next call on the table.
  Session& upsert(const Packet& pkt);

  /// Sessions finished by FIN in both directions, RST, or capacity eviction.
  std::vector<Session> take_closed();

  /// Removes and returns every session with now - last_ts > idle_timeout.
  std::vector<Session> expire(Micros now, Micros idle_timeout = kDefaultIdleTimeout);

  /// Removes and returns everything still live (end of input).
  std::vector<Session> drain();

  std::size_t size() const { return index_.size(); }
  std::size_t capacity() const { return cfg_.capacity; }
  std::uint64_t evictions() const { return evictions_; }
  std::size_t approx_bytes() const;
  std::optional<Micros> oldest_first_ts() const;

  void for_each(const std::function<void(const Session&)>& fn) const;

 private:
  using Lru = std::list<Session>;

  Session finish(Lru::iterator it);

  FlowTableConfig cfg_;
  Lru lru_;  // front = least recently active
  std::unordered_map<FlowKey, Lru::iterator, FlowKeyHash> index_;
  std::vector<Session> closed_;
  std::uint64_t evictions_ = 0;
};

}  // namespace shgw
