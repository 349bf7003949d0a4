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
#include <filesystem>
#include <memory>
#include <optional>
#include <queue>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "shgw/capture.hpp"
#include "shgw/shdr.hpp"

namespace shgw {

// --- frame construction ----------------------------------------------------

struct FrameSpec {
  MacAddr src_mac{};
  MacAddr dst_mac{};
  Ipv4 src_ip;
  Ipv4 dst_ip;
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  Transport transport = Transport::TCP;
  std::uint8_t tcp_flags = 0;
  std::uint32_t seq = 0;
  std::uint32_t ack = 0;
  std::string payload;
};

/// Serializes Ethernet II + IPv4 + TCP/UDP headers and the payload.
std::vector<std::uint8_t> build_frame(const FrameSpec& spec);

/// Header bytes preceding the payload on the wire.
std::uint32_t header_overhead(Transport t);

// --- scenarios ---------------------------------------------------------------

class TrafficGenError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Session counts per profile. The default scenario exercises every rule in
/// data/signatures.json.
struct ScenarioSpec {
  std::uint64_t smartphone_browse = 0;
  std::uint64_t pad_browse = 0;
  std::uint64_t pc_download = 0;
  std::uint64_t tv_stream = 0;
  std::uint64_t upnp_http = 0;  // GET on TCP 49152
  std::uint64_t console_browse = 0;
  std::uint64_t smart_light = 0;
  std::uint64_t smart_light_failed = 0;  // SYN without answer
  std::uint64_t smoke_alarm = 0;
  std::uint64_t iot_telemetry = 0;  // variable-length proprietary sessions
  std::uint64_t dns = 0;
  std::uint64_t p2p = 0;
  std::uint64_t ad_fraction_pct = 10;        // share of browse sessions fetching ads
  std::uint64_t resource_fraction_pct = 40;  // share fetching js/css/images
  double time_span = 600.0;                  // seconds
  Micros start = 1'700'000'000LL * kMicrosPerSecond;

  std::uint64_t total() const;
  /// Throws TrafficGenError on an empty scenario or a bad time span/fraction.
  void validate() const;
  static ScenarioSpec parse(std::string_view json_text);
  static ScenarioSpec load(const std::filesystem::path& path);
  /// Default mix scaled so total() is close to `sessions`.
  static ScenarioSpec default_mix(std::uint64_t sessions);
  /// Two-class corpus: fixed 96-byte smoke-alarm vs variable-length telemetry.
  static ScenarioSpec encrypted_pair(std::uint64_t per_class);
  /// Mix where `blocked_pct` percent of sessions fetch cleansable resources.
  static ScenarioSpec cleansing_mix(std::uint64_t sessions, std::uint64_t blocked_pct);
};

struct Corpus {
  std::vector<RawFrame> frames;    // strictly increasing timestamps
  std::vector<ShdrRecord> truth;   // one per session, ordered by ts_first
};

/// Deterministic for a given spec and seed.
Corpus generate_corpus(const ScenarioSpec& spec, std::uint64_t seed);

void write_pcap(const std::vector<RawFrame>& frames, const std::filesystem::path& path);
void write_truth(const std::vector<ShdrRecord>& truth, const std::filesystem::path& path);
std::vector<ShdrRecord> read_truth(const std::filesystem::path& path);

/// Identity of a session for matching against truth records.
struct SessionId {
  Ipv4 src_ip;
  std::uint16_t src_port = 0;
  Ipv4 dst_ip;
  std::uint16_t dst_port = 0;
  Transport transport = Transport::OTHER;
  Micros ts_first = 0;
  auto operator<=>(const SessionId&) const = default;
};

SessionId session_id(const ShdrRecord& r);

/// Replays in-memory frames through the same contract as a pcap file.
class VectorFrameSource : public FrameSource {
 public:
  explicit VectorFrameSource(std::vector<RawFrame> frames) : frames_(std::move(frames)) {}
  std::optional<RawFrame> next_frame() override;
  CaptureSource info() const override { return {SourceKind::Synthetic}; }

 private:
  std::vector<RawFrame> frames_;
  std::size_t next_ = 0;
};

// --- load ------------------------------------------------------------------

struct LoadSpec {
  double rate = 10'000;  // GET sessions per second
  double duration = 60;  // seconds
  Micros start = 1'700'000'000LL * kMicrosPerSecond;
  std::uint64_t seed = 1;
};

/// Streams single-GET sessions with jittered arrivals in timestamp order.
/// Produces exactly round(rate * duration) sessions.
class LoadFrameSource : public FrameSource {
 public:
  explicit LoadFrameSource(LoadSpec spec);
  std::optional<RawFrame> next_frame() override;
  CaptureSource info() const override { return {SourceKind::Synthetic}; }

  std::uint64_t sessions_total() const { return total_; }
  std::uint64_t sessions_started() const { return started_; }

 private:
  struct Pending {
    Micros ts;
    std::uint64_t session;
    int step;
    Micros start;
    bool operator>(const Pending& o) const { return ts != o.ts ? ts > o.ts : session > o.session; }
  };
  void start_session(std::uint64_t index);
  RawFrame frame_for(const Pending& p) const;
  Micros arrival_of(std::uint64_t index) const;

  LoadSpec spec_;
  std::uint64_t total_ = 0;
  std::uint64_t started_ = 0;
  double period_us_ = 0;
  std::priority_queue<Pending, std::vector<Pending>, std::greater<>> heap_;
  Micros last_ts_ = 0;
};

}  // namespace shgw
