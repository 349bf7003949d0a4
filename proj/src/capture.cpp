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

#include "shgw/capture.hpp"

#include <algorithm>
#include <cstring>
#include <sstream>

namespace shgw {

namespace {

constexpr std::size_t kEthHeader = 14;
constexpr std::size_t kGlobalHeader = 24;
constexpr std::size_t kRecordHeader = 16;
constexpr std::uint32_t kMaxRecord = 256 * 1024;
constexpr std::uint16_t kEtherIpv4 = 0x0800;
constexpr std::uint16_t kEtherIpv6 = 0x86dd;

std::uint16_t be16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>((p[0] << 8) | p[1]);
}

std::uint32_t be32(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) |
         (std::uint32_t{p[2]} << 8) | std::uint32_t{p[3]};
}

}  // namespace

DecodeResult decode_frame(Micros ts, std::span<const std::uint8_t> frame, std::uint32_t orig_len) {
  if (frame.size() < kEthHeader) return SkipReason::Truncated;
  const std::uint16_t ether_type = be16(frame.data() + 12);
  if (ether_type == kEtherIpv6) return SkipReason::Ipv6;
  if (ether_type != kEtherIpv4) return SkipReason::NonIpv4;

  auto ip = frame.subspan(kEthHeader);
  if (ip.size() < 20) return SkipReason::Truncated;
  if ((ip[0] >> 4) != 4) return SkipReason::NonIpv4;
  const std::size_t ihl = std::size_t{ip[0] & 0x0fu} * 4;
  if (ihl < 20 || ip.size() < ihl) return SkipReason::Truncated;

  const std::uint16_t frag = be16(ip.data() + 6);
  if ((frag & 0x1fff) != 0) return SkipReason::Fragment;

  // Bound the L4 view by both the captured bytes and the IP total length.
  const std::size_t total_len = be16(ip.data() + 2);
  const std::size_t ip_end = std::min<std::size_t>(ip.size(), std::max(total_len, ihl));
  auto l4 = ip.subspan(ihl, ip_end - ihl);

  Packet pkt;
  pkt.ts = ts;
  std::copy_n(frame.data(), 6, pkt.dst_mac.begin());
  std::copy_n(frame.data() + 6, 6, pkt.src_mac.begin());
  pkt.src_ip = Ipv4{be32(ip.data() + 12)};
  pkt.dst_ip = Ipv4{be32(ip.data() + 16)};
  pkt.wire_len = std::max<std::uint32_t>(orig_len, static_cast<std::uint32_t>(frame.size()));

  const std::uint8_t proto = ip[9];
  if (proto == 6) {
    if (l4.size() < 20) return SkipReason::Truncated;
    const std::size_t data_off = std::size_t{static_cast<std::uint8_t>(l4[12] >> 4)} * 4;
    if (data_off < 20 || l4.size() < data_off) return SkipReason::Truncated;
    pkt.transport = Transport::TCP;
    pkt.src_port = be16(l4.data());
    pkt.dst_port = be16(l4.data() + 2);
    pkt.tcp_flags = l4[13];
    pkt.payload.assign(l4.begin() + static_cast<std::ptrdiff_t>(data_off), l4.end());
  } else if (proto == 17) {
    if (l4.size() < 8) return SkipReason::Truncated;
    pkt.transport = Transport::UDP;
    pkt.src_port = be16(l4.data());
    pkt.dst_port = be16(l4.data() + 2);
    const std::size_t udp_len = be16(l4.data() + 4);
    const std::size_t end = std::clamp<std::size_t>(udp_len, 8, l4.size());
    pkt.payload.assign(l4.begin() + 8, l4.begin() + static_cast<std::ptrdiff_t>(end));
  } else {
    pkt.transport = Transport::OTHER;
  }
  return pkt;
}

PcapFrameSource::PcapFrameSource(const std::filesystem::path& path) {
  auto file = std::make_unique<std::ifstream>(path, std::ios::binary);
  if (!*file) {
    throw CaptureError(CaptureError::Code::FileNotFound, "cannot open capture " + path.string());
  }
  in_ = std::move(file);
  read_global_header();
}

PcapFrameSource::PcapFrameSource(std::unique_ptr<std::istream> in) : in_(std::move(in)) {
  read_global_header();
}

std::uint32_t PcapFrameSource::load32(const std::uint8_t* p) const {
  if (info_.endianness == Endianness::Big) return be32(p);
  return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) |
         (std::uint32_t{p[3]} << 24);
}

void PcapFrameSource::read_global_header() {
  in_->seekg(0, std::ios::end);
  length_ = static_cast<std::uint64_t>(in_->tellg());
  in_->seekg(0, std::ios::beg);

  std::uint8_t hdr[kGlobalHeader];
  if (length_ < 4 || !in_->read(reinterpret_cast<char*>(hdr), 4)) {
    throw CaptureError(CaptureError::Code::BadMagic, "capture shorter than pcap magic");
  }
  const std::uint32_t magic = be32(hdr);
  if (magic == kPcapMagic) {
    info_.endianness = Endianness::Big;
  } else if (magic == 0xd4c3b2a1) {
    info_.endianness = Endianness::Little;
  } else {
    throw CaptureError(CaptureError::Code::BadMagic, "not a pcap file (bad magic)");
  }
  if (length_ < kGlobalHeader ||
      !in_->read(reinterpret_cast<char*>(hdr + 4), kGlobalHeader - 4)) {
    throw CaptureError(CaptureError::Code::BadMagic, "truncated pcap global header");
  }
  info_.kind = SourceKind::PcapFile;
  info_.snap_len = load32(hdr + 16);
  info_.link_type = load32(hdr + 20);
  if (info_.snap_len == 0) info_.snap_len = 65535;
  if (info_.link_type != kLinkTypeEthernet) {
    throw CaptureError(CaptureError::Code::UnsupportedLinkType,
                       "unsupported link type " + std::to_string(info_.link_type));
  }
  offset_ = kGlobalHeader;
}

std::optional<RawFrame> PcapFrameSource::next_frame() {
  if (offset_ == length_) return std::nullopt;
  std::uint8_t rec[kRecordHeader];
  if (length_ - offset_ < kRecordHeader || !in_->read(reinterpret_cast<char*>(rec), kRecordHeader)) {
    throw CaptureError(CaptureError::Code::CorruptRecordHeader,
                       "truncated record header at offset " + std::to_string(offset_));
  }
  offset_ += kRecordHeader;
  const std::uint32_t ts_sec = load32(rec);
  const std::uint32_t ts_usec = load32(rec + 4);
  const std::uint32_t incl_len = load32(rec + 8);
  const std::uint32_t orig_len = load32(rec + 12);
  if (incl_len > kMaxRecord || incl_len > length_ - offset_ || ts_usec >= 1'000'000) {
    throw CaptureError(CaptureError::Code::CorruptRecordHeader,
                       "record header inconsistent with file at offset " +
                           std::to_string(offset_ - kRecordHeader));
  }
  RawFrame frame;
  frame.ts = Micros{ts_sec} * kMicrosPerSecond + ts_usec;
  frame.orig_len = orig_len;
  frame.data.resize(incl_len);
  if (incl_len > 0 && !in_->read(reinterpret_cast<char*>(frame.data.data()), incl_len)) {
    throw CaptureError(CaptureError::Code::CorruptRecordHeader, "short read in record body");
  }
  offset_ += incl_len;
  return frame;
}

PacketReader::PacketReader(std::unique_ptr<FrameSource> source)
    : source_(std::move(source)), info_(source_->info()) {
  if (info_.link_type != kLinkTypeEthernet) {
    throw CaptureError(CaptureError::Code::UnsupportedLinkType,
                       "unsupported link type " + std::to_string(info_.link_type));
  }
}

std::optional<Packet> PacketReader::next_packet() {
  while (auto frame = source_->next_frame()) {
    ++counters_.records;
    Micros ts = frame->ts;
    if (last_ts_ && ts < *last_ts_) {
      ts = *last_ts_ + 1;
      ++counters_.ts_clamped;
    }
    last_ts_ = ts;

    auto result = decode_frame(ts, frame->data, frame->orig_len);
    if (auto* pkt = std::get_if<Packet>(&result)) {
      ++counters_.returned;
      return std::move(*pkt);
    }
    counters_.skipped_bytes +=
        std::max<std::uint64_t>(frame->orig_len, frame->data.size());
    switch (std::get<SkipReason>(result)) {
      case SkipReason::NonIpv4: ++counters_.skipped_non_ipv4; break;
      case SkipReason::Ipv6: ++counters_.skipped_ipv6; break;
      case SkipReason::Fragment: ++counters_.skipped_fragment; break;
      case SkipReason::Truncated: ++counters_.skipped_truncated; break;
    }
  }
  return std::nullopt;
}

PacketReader open_capture(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw CaptureError(CaptureError::Code::FileNotFound, "no such capture: " + path.string());
  }
  return PacketReader(std::make_unique<PcapFrameSource>(path));
}

PcapWriter::PcapWriter(std::ostream& out, Endianness endianness, std::uint32_t snap_len)
    : out_(out), endianness_(endianness) {
  put32(kPcapMagic);
  put16(2);
  put16(4);
  put32(0);  // thiszone
  put32(0);  // sigfigs
  put32(snap_len);
  put32(kLinkTypeEthernet);
}

void PcapWriter::put32(std::uint32_t v) {
  char b[4];
  if (endianness_ == Endianness::Big) {
    b[0] = static_cast<char>(v >> 24); b[1] = static_cast<char>(v >> 16);
    b[2] = static_cast<char>(v >> 8);  b[3] = static_cast<char>(v);
  } else {
    b[0] = static_cast<char>(v);       b[1] = static_cast<char>(v >> 8);
    b[2] = static_cast<char>(v >> 16); b[3] = static_cast<char>(v >> 24);
  }
  out_.write(b, 4);
}

void PcapWriter::put16(std::uint16_t v) {
  char b[2];
  if (endianness_ == Endianness::Big) {
    b[0] = static_cast<char>(v >> 8); b[1] = static_cast<char>(v);
  } else {
    b[0] = static_cast<char>(v); b[1] = static_cast<char>(v >> 8);
  }
  out_.write(b, 2);
}

void PcapWriter::write(Micros ts, std::span<const std::uint8_t> frame, std::uint32_t orig_len) {
  put32(static_cast<std::uint32_t>(ts / kMicrosPerSecond));
  put32(static_cast<std::uint32_t>(ts % kMicrosPerSecond));
  put32(static_cast<std::uint32_t>(frame.size()));
  put32(orig_len == 0 ? static_cast<std::uint32_t>(frame.size()) : orig_len);
  out_.write(reinterpret_cast<const char*>(frame.data()), static_cast<std::streamsize>(frame.size()));
  ++records_;
}

}  // namespace shgw
