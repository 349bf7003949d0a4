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

#include "shgw/flow.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace shgw {

FlowKey FlowKey::of(const Packet& pkt) {
  FlowKey k;
  k.transport = pkt.transport;
  const bool src_low = std::pair(pkt.src_ip, pkt.src_port) <= std::pair(pkt.dst_ip, pkt.dst_port);
  if (src_low) {
    k.lo_ip = pkt.src_ip; k.lo_port = pkt.src_port;
    k.hi_ip = pkt.dst_ip; k.hi_port = pkt.dst_port;
  } else {
    k.lo_ip = pkt.dst_ip; k.lo_port = pkt.dst_port;
    k.hi_ip = pkt.src_ip; k.hi_port = pkt.src_port;
  }
  return k;
}

std::size_t FlowKeyHash::operator()(const FlowKey& k) const noexcept {
  std::uint64_t h = (std::uint64_t{k.lo_ip.value} << 32) | k.hi_ip.value;
  h ^= (std::uint64_t{k.lo_port} << 24) ^ (std::uint64_t{k.hi_port} << 8) ^
       static_cast<std::uint64_t>(k.transport);
  // splitmix64 finalizer
  h += 0x9e3779b97f4a7c15ULL;
  h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ULL;
  h = (h ^ (h >> 27)) * 0x94d049bb133111ebULL;
  return static_cast<std::size_t>(h ^ (h >> 31));
}

std::size_t Session::approx_bytes() const {
  return sizeof(Session) + pkt_len_up.capacity() * sizeof(std::uint32_t) +
         pkt_len_down.capacity() * sizeof(std::uint32_t) +
         interarrival.capacity() * sizeof(Micros) + http.buffered_bytes();
}

const std::array<const char*, SessionFeatures::kCount>& SessionFeatures::names() {
  static const std::array<const char*, kCount> kNames = {
      "duration",          "total_pkts",        "mean_pkt_len_up",   "mean_pkt_len_down",
      "pkt_len_mode_up",   "pkt_len_stddev_up", "mean_interarrival", "up_down_byte_ratio"};
  return kNames;
}

std::array<double, SessionFeatures::kCount> SessionFeatures::as_array() const {
  return {duration,        total_pkts,        mean_pkt_len_up,   mean_pkt_len_down,
          pkt_len_mode_up, pkt_len_stddev_up, mean_interarrival, up_down_byte_ratio};
}

SessionFeatures SessionFeatures::from_array(const std::array<double, kCount>& v) {
  return {v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7]};
}

SessionFeatures features(const Session& s) {
  SessionFeatures f;
  f.duration = to_seconds(s.last_ts - s.first_ts);
  f.total_pkts = static_cast<double>(s.total_packets());
  if (s.pkt_count_up > 0)
    f.mean_pkt_len_up = static_cast<double>(s.byte_count_up) / static_cast<double>(s.pkt_count_up);
  if (s.pkt_count_down > 0)
    f.mean_pkt_len_down =
        static_cast<double>(s.byte_count_down) / static_cast<double>(s.pkt_count_down);

  if (!s.pkt_len_up.empty()) {
    std::map<std::uint32_t, std::size_t> counts;
    double sum = 0;
    for (auto len : s.pkt_len_up) {
      ++counts[len];
      sum += len;
    }
    // std::map iterates ascending, so ">" keeps the smaller length on ties.
    std::uint32_t mode = 0;
    std::size_t best = 0;
    for (auto [len, n] : counts) {
      if (n > best) {
        best = n;
        mode = len;
      }
    }
    f.pkt_len_mode_up = mode;
    const double mean = sum / static_cast<double>(s.pkt_len_up.size());
    double var = 0;
    for (auto len : s.pkt_len_up) var += (len - mean) * (len - mean);
    f.pkt_len_stddev_up = std::sqrt(var / static_cast<double>(s.pkt_len_up.size()));
  }

  if (!s.interarrival.empty()) {
    Micros total = 0;
    for (auto gap : s.interarrival) total += gap;
    f.mean_interarrival = to_seconds(total) / static_cast<double>(s.interarrival.size());
  }
  f.up_down_byte_ratio =
      static_cast<double>(s.byte_count_up) / (static_cast<double>(s.byte_count_down) + 1.0);
  return f;
}

FlowTable::FlowTable(FlowTableConfig cfg) : cfg_(cfg) {
  if (cfg_.capacity == 0) cfg_.capacity = 1;
  index_.reserve(std::min<std::size_t>(cfg_.capacity, 4096));
}

Session FlowTable::finish(Lru::iterator it) {
  Session s = std::move(*it);
  index_.erase(s.key);
  lru_.erase(it);
  s.state = SessionState::Expired;
  return s;
}

Session& FlowTable::upsert(const Packet& pkt) {
  const FlowKey key = FlowKey::of(pkt);
  auto found = index_.find(key);
  Lru::iterator it;
  if (found == index_.end()) {
    if (index_.size() >= cfg_.capacity) {
      closed_.push_back(finish(lru_.begin()));
      ++evictions_;
    }
    Session s;
    s.key = key;
    s.transport = pkt.transport;
    s.initiator = {pkt.src_ip, pkt.src_port, pkt.src_mac};
    s.responder = {pkt.dst_ip, pkt.dst_port, pkt.dst_mac};
    s.first_ts = s.last_ts = pkt.ts;
    s.http = HttpStream(cfg_.http_max_scan);
    lru_.push_back(std::move(s));
    it = std::prev(lru_.end());
    index_.emplace(key, it);
  } else {
    it = found->second;
    if (std::next(it) != lru_.end()) lru_.splice(lru_.end(), lru_, it);
    Session& s = *it;
    if (s.interarrival.size() < cfg_.sample_capacity) s.interarrival.push_back(pkt.ts - s.last_ts);
    s.last_ts = std::max(s.last_ts, pkt.ts);
  }

  Session& s = *it;
  const bool up = pkt.src_ip == s.initiator.ip && pkt.src_port == s.initiator.port;
  if (up) {
    ++s.pkt_count_up;
    s.byte_count_up += pkt.wire_len;
    if (s.pkt_len_up.size() < cfg_.sample_capacity) s.pkt_len_up.push_back(pkt.wire_len);
  } else {
    ++s.pkt_count_down;
    s.byte_count_down += pkt.wire_len;
    if (s.pkt_len_down.size() < cfg_.sample_capacity) s.pkt_len_down.push_back(pkt.wire_len);
  }

  if (pkt.transport == Transport::TCP) {
    const bool syn = pkt.has_flag(tcp_flag::kSyn);
    const bool ack = pkt.has_flag(tcp_flag::kAck);
    Handshake& hs = s.handshake;
    if (up && syn && !ack && !hs.syn_ts) {
      hs.syn_ts = pkt.ts;
    } else if (!up && syn && ack && hs.syn_ts) {
      hs.syn_ack = true;
    } else if (up && ack && !syn && hs.syn_ack && !hs.established_ts) {
      hs.established_ts = pkt.ts;
    }
    if (up && !pkt.payload.empty()) s.http.feed(pkt.payload_view());
    if (pkt.has_flag(tcp_flag::kFin)) (up ? s.fin_up : s.fin_down) = true;
    if (pkt.has_flag(tcp_flag::kRst)) s.rst = true;
    if (s.rst || (s.fin_up && s.fin_down)) {
      closed_.push_back(finish(it));
      return closed_.back();
    }
  }
  return s;
}

std::vector<Session> FlowTable::take_closed() {
  std::vector<Session> out;
  out.swap(closed_);
  return out;
}

std::vector<Session> FlowTable::expire(Micros now, Micros idle_timeout) {
  std::vector<Session> out;
  // Activity is monotone in capture time, so the LRU front is the most idle.
  while (!lru_.empty() && now - lru_.front().last_ts > idle_timeout) {
    out.push_back(finish(lru_.begin()));
  }
  return out;
}

std::vector<Session> FlowTable::drain() {
  std::vector<Session> out;
  while (!lru_.empty()) out.push_back(finish(lru_.begin()));
  return out;
}

std::size_t FlowTable::approx_bytes() const {
  // Node overhead for the list and hash map is estimated at four pointers.
  std::size_t total = index_.bucket_count() * sizeof(void*);
  for (const auto& s : lru_) total += s.approx_bytes() + 4 * sizeof(void*) + sizeof(FlowKey);
  return total;
}

std::optional<Micros> FlowTable::oldest_first_ts() const {
  std::optional<Micros> best;
  for (const auto& s : lru_)
    if (!best || s.first_ts < *best) best = s.first_ts;
  return best;
}

void FlowTable::for_each(const std::function<void(const Session&)>& fn) const {
  for (const auto& s : lru_) fn(s);
}

}  // namespace shgw
