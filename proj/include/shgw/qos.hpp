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

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "shgw/capture.hpp"
#include "shgw/flow.hpp"
#include "shgw/mda.hpp"

namespace shgw {

inline constexpr std::string_view kPendingBucket = "pending";

struct ConnectStats {
  std::uint64_t attempts = 0;
  std::uint64_t success = 0;
  bool operator==(const ConnectStats&) const = default;
};

/// Passive QoS measurements for one capture-time window.
struct QosSnapshot {
  Micros window_start = 0;
  Micros window_end = 0;
  std::uint64_t total_bytes = 0;
  // (dimension, label) -> bytes. Unlabeled traffic sits under (pending, pending).
  std::map<std::pair<std::string, std::string>, std::uint64_t> bytes_by_dimension;
  std::uint32_t concurrent_sessions = 0;
  std::vector<std::pair<std::string, Micros>> delay_samples;     // (application, delay)
  std::vector<std::pair<std::string, Micros>> handshake_delays;  // (application, SYN->ACK)
  std::uint64_t connect_success = 0;
  std::uint64_t connect_fail = 0;
  std::map<std::string, ConnectStats> connect_by_application;

  double bandwidth_bps(std::uint64_t bytes) const;
  double total_bandwidth_bps() const { return bandwidth_bps(total_bytes); }
  bool operator==(const QosSnapshot&) const = default;
};

/// Dimensions under which traffic bytes are bucketed.
std::vector<std::pair<std::string, std::string>> label_buckets(const AwarenessLabels& labels);

/// last_ts - first_ts.
Micros session_delay(const Session& s);

/// Deterministic per-session Bernoulli draw used for delay sampling.
bool sample_delay(const Session& s, double rate, std::uint64_t seed);

struct ConnEvent {
  Micros ts = 0;
  bool open = true;
};

class QosError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Sweep-line peak of simultaneously open connections. Intervals are closed,
/// so at equal timestamps opens are applied before closes. Throws QosError
/// (UnorderedEvents) when events are not time-ordered.
std::uint32_t peak_concurrency(std::span<const ConnEvent> events);

/// Peak per window [origin + k*len, origin + (k+1)*len); connections open
/// across a boundary count in both windows.
std::vector<std::uint32_t> concurrent_connections(std::span<const ConnEvent> events, Micros origin,
                                                  Micros window_len);

struct QosConfig {
  Micros window_len = 60 * kMicrosPerSecond;
  double delay_sampling_rate = 1.0;
  std::uint64_t sampling_seed = 0;
  // A window whose sessions are still live is force-closed after this lag.
  Micros max_defer = 5 * 60 * kMicrosPerSecond;
  // Per window and per list; beyond this the lists are a uniform reservoir.
  std::size_t max_samples_per_window = 4096;
  // Unresolved concurrency events kept before live sessions are assumed open.
  std::size_t max_pending_events = 65'536;
};

/// Accumulates per-window QoS state. Windows are epoch-aligned in capture time and
/// close once every session that started inside them has been emitted, so
/// pending bytes can be reassigned to the session's labels first.
///
/// Every packet of a session must pass through record_traffic (with the
/// session as updated by the flow table) before on_session sees it emitted.
class QosMonitor {
 public:
  explicit QosMonitor(QosConfig cfg = {});

  void record_traffic(const Packet& pkt, const Session& s, const AwarenessLabels* labels = nullptr);
  void on_session(const Session& s, const AwarenessLabels& labels);

  /// Closes windows that ended before `now` and have no live session started
  /// inside them (or are older than max_defer).
  std::vector<QosSnapshot> close_ready(Micros now, const FlowTable& live);
  std::vector<QosSnapshot> close_all();

  void set_sampling_rate(double rate) { cfg_.delay_sampling_rate = rate; }
  std::size_t open_windows() const { return windows_.size(); }
  std::size_t approx_bytes() const;

 private:
  struct Window {
    QosSnapshot snap;
    std::unordered_map<FlowKey, std::uint64_t, FlowKeyHash> pending_by_flow;
    std::int64_t peak = 0;
    std::uint64_t delays_seen = 0;
    std::uint64_t handshakes_seen = 0;
  };

  std::int64_t index_of(Micros ts) const;
  Window& window_at(std::int64_t index);
  void add_event(Micros ts, std::int64_t delta);
  /// Applies every concurrency event before `limit`.
  void fold_to(Micros limit);
  void carry_into(std::int64_t through);
  void keep_sample(std::vector<std::pair<std::string, Micros>>& list, std::uint64_t& seen,
                   const std::string& app, Micros value);
  QosSnapshot finalize(Window& w);

  QosConfig cfg_;
  std::map<std::int64_t, Window> windows_;
  std::optional<std::int64_t> closed_through_;  // highest index already emitted
  // Concurrency sweep: +1 at a session's first packet, -1 just after its last.
  std::map<Micros, std::int64_t> events_;
  std::optional<Micros> folded_until_;  // events before this are applied
  std::int64_t open_ = 0;               // open sessions at folded_until_
  std::optional<std::int64_t> carried_through_;
};

}  // namespace shgw
