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

// Test-side helpers. Frames and pcap files are assembled byte by byte here,
// independently of the library's own writer, so decode tests compare against
// values the test chose rather than values the library produced.

#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "shgw/capture.hpp"

namespace testkit {

using Bytes = std::vector<std::uint8_t>;

inline void put16be(Bytes& b, std::uint16_t v) {
  b.push_back(static_cast<std::uint8_t>(v >> 8));
  b.push_back(static_cast<std::uint8_t>(v));
}
inline void put32be(Bytes& b, std::uint32_t v) {
  put16be(b, static_cast<std::uint16_t>(v >> 16));
  put16be(b, static_cast<std::uint16_t>(v));
}

struct L4 {
  std::uint8_t proto = 6;  // 6 TCP, 17 UDP, anything else raw
  std::uint16_t sport = 0;
  std::uint16_t dport = 0;
  std::uint8_t flags = 0;
  std::string payload;
};

struct FrameParts {
  std::array<std::uint8_t, 6> dst_mac{0x02, 0, 0, 0, 0, 0x01};
  std::array<std::uint8_t, 6> src_mac{0x02, 0, 0, 0, 0, 0x02};
  std::uint16_t ether_type = 0x0800;
  std::uint32_t src_ip = 0xc0a80102;  // 192.168.1.2
  std::uint32_t dst_ip = 0x08080808;
  std::uint16_t frag = 0;             // flags + offset field
  L4 l4;
};

inline Bytes frame(const FrameParts& p) {
  Bytes b(p.dst_mac.begin(), p.dst_mac.end());
  b.insert(b.end(), p.src_mac.begin(), p.src_mac.end());
  put16be(b, p.ether_type);
  if (p.ether_type != 0x0800) {
    b.resize(b.size() + 28, 0);  // opaque body (ARP-sized)
    return b;
  }
  Bytes l4;
  if (p.l4.proto == 6) {
    put16be(l4, p.l4.sport);
    put16be(l4, p.l4.dport);
    put32be(l4, 1000);
    put32be(l4, 0);
    l4.push_back(5 << 4);
    l4.push_back(p.l4.flags);
    put16be(l4, 65535);
    put16be(l4, 0);
    put16be(l4, 0);
  } else if (p.l4.proto == 17) {
    put16be(l4, p.l4.sport);
    put16be(l4, p.l4.dport);
    put16be(l4, static_cast<std::uint16_t>(8 + p.l4.payload.size()));
    put16be(l4, 0);
  }
  l4.insert(l4.end(), p.l4.payload.begin(), p.l4.payload.end());
  b.push_back(0x45);
  b.push_back(0);
  put16be(b, static_cast<std::uint16_t>(20 + l4.size()));
  put16be(b, 0x1234);
  put16be(b, p.frag);
  b.push_back(64);
  b.push_back(p.l4.proto);
  put16be(b, 0);
  put32be(b, p.src_ip);
  put32be(b, p.dst_ip);
  b.insert(b.end(), l4.begin(), l4.end());
  return b;
}

struct Record {
  std::uint32_t ts_sec = 0;
  std::uint32_t ts_usec = 0;
  Bytes data;
  std::uint32_t orig_len = 0;  // 0: same as data
};

/// Serializes a classic pcap file in the requested byte order.
inline std::string pcap_bytes(const std::vector<Record>& recs, bool big_endian, std::uint32_t link_type = 1,
                              std::uint32_t magic = 0xa1b2c3d4) {
  std::string out;
  auto put32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
      const int shift = big_endian ? 24 - 8 * i : 8 * i;
      out.push_back(static_cast<char>((v >> shift) & 0xff));
    }
  };
  auto put16 = [&](std::uint16_t v) {
    if (big_endian) {
      out.push_back(static_cast<char>(v >> 8));
      out.push_back(static_cast<char>(v & 0xff));
    } else {
      out.push_back(static_cast<char>(v & 0xff));
      out.push_back(static_cast<char>(v >> 8));
    }
  };
  put32(magic);
  put16(2);
  put16(4);
  put32(0);
  put32(0);
  put32(65535);
  put32(link_type);
  for (const auto& r : recs) {
    put32(r.ts_sec);
    put32(r.ts_usec);
    put32(static_cast<std::uint32_t>(r.data.size()));
    put32(r.orig_len ? r.orig_len : static_cast<std::uint32_t>(r.data.size()));
    out.append(r.data.begin(), r.data.end());
  }
  return out;
}

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("shgw-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Directly constructed packet, bypassing the decoder.
inline shgw::Packet packet(shgw::Micros ts, shgw::Ipv4 src, std::uint16_t sport, shgw::Ipv4 dst,
                           std::uint16_t dport, shgw::Transport t, std::uint32_t wire_len,
                           std::uint8_t flags = 0, std::string payload = {}) {
  shgw::Packet p;
  p.ts = ts;
  p.src_ip = src;
  p.dst_ip = dst;
  p.src_port = sport;
  p.dst_port = dport;
  p.transport = t;
  p.wire_len = wire_len;
  p.payload.assign(payload.begin(), payload.end());
  if (t == shgw::Transport::TCP) p.tcp_flags = flags;
  return p;
}

}  // namespace testkit
