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
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <regex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "shgw/decision_tree.hpp"
#include "shgw/flow.hpp"
#include "shgw/net.hpp"

namespace shgw {

enum class ServiceType { Http, P2p, Dns, ProprietaryIot, Other };
enum class DeviceType { Smartphone, Pad, Pc, TvBox, GameConsole, IotSensor, Unknown };
enum class SubscriberDerivation { AccountMap, DhcpSegment, IpFallback };

std::string_view to_string(ServiceType s);
std::string_view to_string(DeviceType d);
std::string_view to_string(SubscriberDerivation d);
std::optional<ServiceType> parse_service(std::string_view s);
std::optional<DeviceType> parse_device_type(std::string_view s);
std::optional<SubscriberDerivation> parse_derivation(std::string_view s);

inline constexpr std::string_view kUnknownApp = "unknown";

struct LocationInfo {
  std::string subnet_tag;
  std::string dhcp_segment;
  std::string access_point;
  bool operator==(const LocationInfo&) const = default;
};

struct SubscriberInfo {
  std::string subscriber_id;
  SubscriberDerivation derivation = SubscriberDerivation::IpFallback;
  bool operator==(const SubscriberInfo&) const = default;
};

/// Per-dimension confidence; 1.0 for a deterministic rule hit, 0.0 when the
/// dimension fell through to its unknown value.
struct Confidence {
  double service = 0;
  double application = 0;
  double device = 0;
  double provider = 0;
  double location = 0;
  double subscriber = 0;
  bool operator==(const Confidence&) const = default;
};

struct AwarenessLabels {
  ServiceType service = ServiceType::Other;
  std::string application{kUnknownApp};
  std::string action{kUnknownApp};
  DeviceType device_type = DeviceType::Unknown;
  std::string device_brand;
  std::string device_os;
  std::string provider;
  LocationInfo location;
  SubscriberInfo subscriber;
  Confidence confidence;
  bool operator==(const AwarenessLabels&) const = default;
};

// --- signature database ----------------------------------------------------

struct ActionRule {
  std::string keyword;  // matched as a substring of the URL path
  std::string action;
};

struct HostRule {
  std::string suffix;  // "example.com" matches itself and any subdomain
  std::string application;
  std::string provider;
  std::vector<ActionRule> actions;
};

struct IpSetRule {
  std::string name;
  std::vector<Cidr> members;
  std::string application;
  std::string provider;
};

struct UaRule {
  enum class Kind { Substring, Regex };
  Kind kind = Kind::Substring;
  std::string pattern;
  std::regex compiled;  // Regex kind only; matched against the whole UA
  DeviceType device_type = DeviceType::Unknown;
  std::string brand;
  std::string os;

  bool matches(std::string_view user_agent) const;
};

using Oui = std::array<std::uint8_t, 3>;

struct OuiRule {
  DeviceType device_type = DeviceType::Unknown;
  std::string brand;
};

enum class Direction { Up, Down };

/// Every packet in `direction` is exactly `length` wire bytes and there are
/// at least `min_packets` of them.
struct FixedLenRule {
  Direction direction = Direction::Up;
  std::uint32_t length = 0;
  std::uint32_t min_packets = 1;
  std::string application;
  std::string provider;
};

struct SubnetTag {
  Cidr subnet;
  std::string tag;
};

struct DhcpLease {
  Cidr range;
  std::string segment;
  std::string access_point;
};

struct ProviderRange {
  Cidr range;
  std::string provider;
};

/// Tables for the location, subscriber and provider-fallback dimensions.
struct ContextConfig {
  std::vector<SubnetTag> subnets;
  std::vector<DhcpLease> dhcp_leases;
  std::map<std::string, std::string> accounts;  // IPv4 text or MAC text -> account id
  std::vector<ProviderRange> provider_ips;
};

class SignatureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SignatureDb {
  std::int64_t version = 0;
  std::map<std::pair<Transport, std::uint16_t>, ServiceType> port_map;
  std::map<std::string, std::string> ext_map;
  std::vector<HostRule> host_patterns;
  std::vector<IpSetRule> ip_sets;
  std::vector<UaRule> ua_patterns;
  std::map<Oui, OuiRule> mac_oui;
  std::vector<FixedLenRule> fixed_len_rules;
  ContextConfig context;

  /// Parses the JSON signature file. Throws SignatureError on schema errors,
  /// duplicate port keys or a missing/non-positive version.
  static SignatureDb parse(std::string_view text);
  static SignatureDb load(const std::filesystem::path& path);
};

// --- classification --------------------------------------------------------

ServiceType classify_service(const Session& s, const SignatureDb& db);

struct ApplicationResult {
  std::string application{kUnknownApp};
  std::string provider;
  std::string action{kUnknownApp};
  bool hit = false;
};

ApplicationResult classify_application(const Session& s, const SignatureDb& db);

struct DeviceResult {
  DeviceType device_type = DeviceType::Unknown;
  std::string brand;
  std::string os;
  bool hit = false;
};

DeviceResult classify_device(const Session& s, const SignatureDb& db);

struct ContextResult {
  LocationInfo location;
  SubscriberInfo subscriber;
  std::string provider_fallback;
};

ContextResult classify_context(const Session& s, const ContextConfig& cfg);

/// Runs every dimension. Rule hits win for the application dimension; the
/// tree (when given) is consulted only for PROPRIETARY_IOT/OTHER sessions
/// whose application is still unknown. Never throws.
AwarenessLabels classify_all(const Session& s, const SignatureDb& db,
                             const DecisionTreeModel* model = nullptr);

}  // namespace shgw
