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

#include "shgw/qos.hpp"

#include <algorithm>

namespace shgw {

double QosSnapshot::bandwidth_bps(std::uint64_t bytes) const {
  const Micros span = window_end - window_start;
  if (span <= 0) return 0;
  return static_cast<double>(bytes) * 8.0 / to_seconds(span);
}

std::vector<std::pair<std::string, std::string>> label_buckets(const AwarenessLabels& labels) {
  return {
      {"service", std::string(to_string(labels.service))},
      {"application", labels.application},
      {"device_type", std::string(to_string(labels.device_type))},
      {"provider", labels.provider},
      {"location", labels.location.subnet_tag},
      {"subscriber", labels.subscriber.subscriber_id},
  };
}

Micros session_delay(const Session& s) { return s.last_ts - s.first_ts; }

bool sample_delay(const Session& s, double rate, std::uint64_t seed) {
  if (rate >= 1.0) return true;
  if (rate <= 0.0) return false;
  std::uint64_t h = FlowKeyHash{}(s.key) ^ (static_cast<std::uint64_t>(s.first_ts) * 0x9e3779b97f4a7c15ULL) ^ seed;
  h += 0x9e3779b97f4a7c15ULL;
  h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ULL;
  h = (h ^ (h >> 27)) * 0x94d049bb133111ebULL;
  h ^= h >> 31;
  const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
  return u < rate;
}

namespace {

void check_ordered(std::span<const ConnEvent> events) {
  for (std::size_t i = 1; i < events.size(); ++i) {
    if (events[i].ts < events[i - 1].ts) {
      throw QosError("UnorderedEvents: event " + std::to_string(i) + " precedes its predecessor");
    }
  }
}

}  // namespace

std::uint32_t peak_concurrency(std::span<const ConnEvent> events) {
  check_ordered(events);
  std::int64_t open = 0, peak = 0;
  std::size_t i = 0;
  while (i < events.size()) {
    // Apply every open at this instant before any close.
    const Micros t = events[i].ts;
    std::size_t j = i;
    std::int64_t closes = 0;
    for (; j < events.size() && events[j].ts == t; ++j) {
      if (events[j].open) ++open; else ++closes;
    }
    peak = std::max(peak, open);
    open -= closes;
    i = j;
  }
  return static_cast<std::uint32_t>(std::max<std::int64_t>(peak, 0));
}

std::vector<std::uint32_t> concurrent_connections(std::span<const ConnEvent> events, Micros origin,
                                                  Micros window_len) {
  check_ordered(events);
  std::vector<std::uint32_t> peaks;
  if (events.empty() || window_len <= 0) return peaks;
  auto window_of = [&](Micros ts) {
    const Micros d = ts - origin;
    return static_cast<std::size_t>(d >= 0 ? d / window_len : 0);
  };
  peaks.assign(window_of(events.back().ts) + 1, 0);
  std::int64_t open = 0;
  std::size_t current = 0;
  std::size_t i = 0;
  while (i < events.size()) {
    const Micros t = events[i].ts;
    const std::size_t w = window_of(t);
    // Connections still open carry into each window they span.
    for (std::size_t k = current + 1; k <= w; ++k)
      peaks[k] = static_cast<std::uint32_t>(std::max<std::int64_t>(open, 0));
    current = std::max(current, w);
    std::int64_t closes = 0;
    for (; i < events.size() && events[i].ts == t; ++i) {
      if (events[i].open) ++open; else ++closes;
    }
    peaks[w] = std::max<std::uint32_t>(peaks[w], static_cast<std::uint32_t>(std::max<std::int64_t>(open, 0)));
    open -= closes;
  }
  return peaks;
}

QosMonitor::QosMonitor(QosConfig cfg) : cfg_(cfg) {
  if (cfg_.window_len <= 0) cfg_.window_len = 60 * kMicrosPerSecond;
}

std::int64_t QosMonitor::index_of(Micros ts) const {
  std::int64_t idx = ts / cfg_.window_len;
  if (ts < 0 && ts % cfg_.window_len != 0) --idx;
  return idx;
}

QosMonitor::Window& QosMonitor::window_at(std::int64_t index) {
  auto [it, inserted] = windows_.try_emplace(index);
  if (inserted) {
    it->second.snap.window_start = index * cfg_.window_len;
    it->second.snap.window_end = (index + 1) * cfg_.window_len;
  }
  return it->second;
}

void QosMonitor::record_traffic(const Packet& pkt, const Session& s, const AwarenessLabels* labels) {
  if (s.total_packets() == 1) add_event(s.first_ts, +1);
  const std::int64_t idx = index_of(pkt.ts);
  if (closed_through_ && idx <= *closed_through_) return;  // window already reported
  Window& w = window_at(idx);
  w.snap.total_bytes += pkt.wire_len;
  if (labels) {
    for (auto& bucket : label_buckets(*labels)) w.snap.bytes_by_dimension[bucket] += pkt.wire_len;
  } else {
    w.snap.bytes_by_dimension[{std::string(kPendingBucket), std::string(kPendingBucket)}] += pkt.wire_len;
    w.pending_by_flow[s.key] += pkt.wire_len;
  }
}

void QosMonitor::add_event(Micros ts, std::int64_t delta) {
  if (folded_until_ && ts < *folded_until_) {
    // Already swept: the session was assumed open until now.
    open_ += delta;
    return;
  }
  auto [it, inserted] = events_.try_emplace(ts, 0);
  it->second += delta;
  if (it->second == 0) events_.erase(it);
}

void QosMonitor::carry_into(std::int64_t through) {
  // Sessions open at a window's start count toward its peak.
  auto it = carried_through_ ? windows_.upper_bound(*carried_through_) : windows_.begin();
  for (; it != windows_.end() && it->first <= through; ++it) it->second.peak = std::max(it->second.peak, open_);
  if (!carried_through_ || through > *carried_through_) carried_through_ = through;
}

void QosMonitor::fold_to(Micros limit) {
  while (!events_.empty() && events_.begin()->first < limit) {
    const auto [ts, delta] = *events_.begin();
    events_.erase(events_.begin());
    const std::int64_t idx = index_of(ts);
    if (!carried_through_ || idx > *carried_through_) carry_into(idx);
    open_ += delta;
    if (auto w = windows_.find(idx); w != windows_.end()) w->second.peak = std::max(w->second.peak, open_);
  }
  if (!folded_until_ || limit > *folded_until_) {
    folded_until_ = limit;
    carry_into(index_of(limit - 1));
  }
}

void QosMonitor::keep_sample(std::vector<std::pair<std::string, Micros>>& list, std::uint64_t& seen,
                             const std::string& app, Micros value) {
  ++seen;
  if (list.size() < cfg_.max_samples_per_window) {
    list.emplace_back(app, value);
    return;
  }
  if (list.empty()) return;
  std::uint64_t h = seen * 0x9e3779b97f4a7c15ULL ^ cfg_.sampling_seed;
  h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ULL;
  h = (h ^ (h >> 27)) * 0x94d049bb133111ebULL;
  h ^= h >> 31;
  const std::uint64_t slot = h % seen;
  if (slot < list.size()) list[slot] = {app, value};
}

void QosMonitor::on_session(const Session& s, const AwarenessLabels& labels) {
  const auto buckets = label_buckets(labels);
  const std::pair<std::string, std::string> pending{std::string(kPendingBucket),
                                                    std::string(kPendingBucket)};
  for (auto it = windows_.lower_bound(index_of(s.first_ts));
       it != windows_.end() && it->first <= index_of(s.last_ts); ++it) {
    Window& w = it->second;
    if (auto p = w.pending_by_flow.find(s.key); p != w.pending_by_flow.end()) {
      const std::uint64_t bytes = p->second;
      w.pending_by_flow.erase(p);
      auto& pending_bytes = w.snap.bytes_by_dimension[pending];
      pending_bytes -= bytes;
      if (pending_bytes == 0) w.snap.bytes_by_dimension.erase(pending);
      for (const auto& b : buckets) w.snap.bytes_by_dimension[b] += bytes;
    }
  }
  add_event(s.last_ts + 1, -1);

  auto open_window = [&](Micros ts) -> Window* {
    const std::int64_t idx = index_of(ts);
    if (closed_through_ && idx <= *closed_through_) return nullptr;
    return &window_at(idx);
  };
  if (s.handshake.attempted()) {
    if (Window* w = open_window(*s.handshake.syn_ts)) {
      auto& per_app = w->snap.connect_by_application[labels.application];
      ++per_app.attempts;
      if (s.handshake.succeeded()) {
        ++per_app.success;
        ++w->snap.connect_success;
        keep_sample(w->snap.handshake_delays, w->handshakes_seen, labels.application, s.handshake.delay());
      } else {
        ++w->snap.connect_fail;
      }
    }
  }
  if (sample_delay(s, cfg_.delay_sampling_rate, cfg_.sampling_seed)) {
    if (Window* w = open_window(s.last_ts)) {
      keep_sample(w->snap.delay_samples, w->delays_seen, labels.application, session_delay(s));
    }
  }
}

QosSnapshot QosMonitor::finalize(Window& w) {
  fold_to(w.snap.window_end);
  w.snap.concurrent_sessions = static_cast<std::uint32_t>(std::max<std::int64_t>(w.peak, 0));
  return std::move(w.snap);
}

std::vector<QosSnapshot> QosMonitor::close_ready(Micros now, const FlowTable& live) {
  // Events are final up to the earliest point a live session could still end.
  Micros limit = now;
  std::optional<Micros> oldest;
  live.for_each([&](const Session& s) {
    limit = std::min(limit, s.last_ts + 1);
    if (!oldest || s.first_ts < *oldest) oldest = s.first_ts;
  });
  fold_to(limit);
  if (events_.size() > cfg_.max_pending_events) fold_to(now);

  std::vector<QosSnapshot> out;
  while (!windows_.empty()) {
    auto it = windows_.begin();
    const Micros end = it->second.snap.window_end;
    if (now < end) break;
    const bool blocked = oldest && *oldest < end;
    if (blocked && now - end < cfg_.max_defer) break;
    out.push_back(finalize(it->second));
    closed_through_ = it->first;
    windows_.erase(it);
  }
  return out;
}

std::vector<QosSnapshot> QosMonitor::close_all() {
  std::vector<QosSnapshot> out;
  if (!events_.empty()) fold_to(events_.rbegin()->first + 1);
  for (auto& [idx, w] : windows_) {
    out.push_back(finalize(w));
    closed_through_ = idx;
  }
  windows_.clear();
  return out;
}

std::size_t QosMonitor::approx_bytes() const {
  std::size_t total = events_.size() * 48;
  for (const auto& [idx, w] : windows_) {
    total += sizeof(Window) + w.snap.bytes_by_dimension.size() * 96 + w.pending_by_flow.size() * 48 +
             (w.snap.delay_samples.capacity() + w.snap.handshake_delays.capacity()) * 48;
  }
  return total;
}

}  // namespace shgw
