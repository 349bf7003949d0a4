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
#include <fstream>
#include <istream>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "shgw/net.hpp"

namespace shgw {

/// One decoded Ethernet/IPv4 frame. Immutable once produced by a reader.
struct Packet {
  Micros ts = 0;
  MacAddr src_mac{};
  MacAddr dst_mac{};
  Ipv4 src_ip;
  Ipv4 dst_ip;
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  Transport transport = Transport::OTHER;
  std::uint32_t wire_len = 0;
  std::vector<std::uint8_t> payload;
  std::optional<std::uint8_t> tcp_flags;

  bool has_flag(std::uint8_t f) const { return tcp_flags && (*tcp_flags & f) != 0; }
  std::string_view payload_view() const {
    return {reinterpret_cast<const char*>(payload.data()), payload.size()};
  }
};

enum class SourceKind { PcapFile, Synthetic };
enum class Endianness { Big, Little };

constexpr std::uint32_t kPcapMagic = 0xa1b2c3d4;
constexpr std::uint32_t kLinkTypeEthernet = 1;

struct CaptureSource {
  SourceKind kind = SourceKind::PcapFile;
  std::uint32_t link_type = kLinkTypeEthernet;
  Endianness endianness = Endianness::Little;
  std::uint32_t snap_len = 65535;
};

class CaptureError : public std::runtime_error {
 public:
  enum class Code { FileNotFound, BadMagic, UnsupportedLinkType, CorruptRecordHeader };

  CaptureError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

enum class SkipReason { NonIpv4, Ipv6, Fragment, Truncated };

struct CaptureCounters {
  std::uint64_t records = 0;
  std::uint64_t returned = 0;
  std::uint64_t skipped_non_ipv4 = 0;
  std::uint64_t skipped_ipv6 = 0;
  std::uint64_t skipped_fragment = 0;
  std::uint64_t skipped_truncated = 0;
  std::uint64_t skipped_bytes = 0;  // wire bytes of skipped frames
  std::uint64_t ts_clamped = 0;

  std::uint64_t skipped() const {
    return skipped_non_ipv4 + skipped_ipv6 + skipped_fragment + skipped_truncated;
  }
};

/// A captured link-layer frame before decoding.
struct RawFrame {
  Micros ts = 0;
  std::uint32_t orig_len = 0;
  std::vector<std::uint8_t> data;
};

using DecodeResult = std::variant<Packet, SkipReason>;

/// Decodes an Ethernet II frame carrying IPv4 and, when present, TCP or UDP.
DecodeResult decode_frame(Micros ts, std::span<const std::uint8_t> frame, std::uint32_t orig_len);

class FrameSource {
 public:
  virtual ~FrameSource() = default;
  virtual std::optional<RawFrame> next_frame() = 0;
  virtual CaptureSource info() const = 0;
};

/// Streams records out of a classic pcap file (either byte order).
class PcapFrameSource : public FrameSource {
 public:
  explicit PcapFrameSource(const std::filesystem::path& path);
  explicit PcapFrameSource(std::unique_ptr<std::istream> in);

  std::optional<RawFrame> next_frame() override;
  CaptureSource info() const override { return info_; }

 private:
  void read_global_header();
  std::uint32_t load32(const std::uint8_t* p) const;

  std::unique_ptr<std::istream> in_;
  std::uint64_t length_ = 0;
  std::uint64_t offset_ = 0;
  CaptureSource info_;
};

/// Pulls frames from a FrameSource, decodes them and keeps the skip counters.
/// Regressing timestamps are clamped to previous + 1 us.
class PacketReader {
 public:
  explicit PacketReader(std::unique_ptr<FrameSource> source);

  std::optional<Packet> next_packet();

  const CaptureSource& source() const { return info_; }
  const CaptureCounters& counters() const { return counters_; }

 private:
  std::unique_ptr<FrameSource> source_;
  CaptureSource info_;
  CaptureCounters counters_;
  std::optional<Micros> last_ts_;
};

PacketReader open_capture(const std::filesystem::path& path);

class PcapWriter {
 public:
  PcapWriter(std::ostream& out, Endianness endianness = Endianness::Little,
             std::uint32_t snap_len = 65535);

  void write(Micros ts, std::span<const std::uint8_t> frame, std::uint32_t orig_len = 0);
  std::uint64_t records() const { return records_; }

 private:
  void put32(std::uint32_t v);
  void put16(std::uint16_t v);

  std::ostream& out_;
  Endianness endianness_;
  std::uint64_t records_ = 0;
};

}  // namespace shgw
