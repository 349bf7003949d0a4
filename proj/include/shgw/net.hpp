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
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace shgw {

// Capture-clock time in integer microseconds since the epoch.
using Micros = std::int64_t;

constexpr Micros kMicrosPerSecond = 1'000'000;

constexpr double to_seconds(Micros us) { return static_cast<double>(us) / 1e6; }
Micros from_seconds(double s);

using MacAddr = std::array<std::uint8_t, 6>;

std::string to_string(const MacAddr& mac);
std::optional<MacAddr> parse_mac(std::string_view text);

// IPv4 address in host byte order.
struct Ipv4 {
  std::uint32_t value = 0;

  constexpr Ipv4() = default;
  constexpr explicit Ipv4(std::uint32_t v) : value(v) {}
  constexpr Ipv4(std::uint8_t a, std::uint8_t b, std::uint8_t c, std::uint8_t d)
      : value((std::uint32_t{a} << 24) | (std::uint32_t{b} << 16) |
              (std::uint32_t{c} << 8) | std::uint32_t{d}) {}

  auto operator<=>(const Ipv4&) const = default;
};

std::string to_string(Ipv4 ip);
std::optional<Ipv4> parse_ipv4(std::string_view text);

// "a.b.c.d/len" or a bare address (treated as /32).
struct Cidr {
  Ipv4 network;
  int prefix_len = 32;

  bool contains(Ipv4 ip) const;
  auto operator<=>(const Cidr&) const = default;
};

std::optional<Cidr> parse_cidr(std::string_view text);
std::string to_string(const Cidr& c);

enum class Transport : std::uint8_t { TCP, UDP, OTHER };

std::string_view to_string(Transport t);
std::optional<Transport> parse_transport(std::string_view text);

namespace tcp_flag {
constexpr std::uint8_t kFin = 0x01;
constexpr std::uint8_t kSyn = 0x02;
constexpr std::uint8_t kRst = 0x04;
constexpr std::uint8_t kPsh = 0x08;
constexpr std::uint8_t kAck = 0x10;
}  // namespace tcp_flag

std::string to_lower(std::string_view s);
bool iequals(std::string_view a, std::string_view b);

}  // namespace shgw
