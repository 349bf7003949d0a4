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

#include "shgw/mda.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace shgw {

namespace {

using nlohmann::json;

template <typename E, std::size_t N>
std::optional<E> lookup(const std::array<std::pair<E, std::string_view>, N>& table,
                        std::string_view text) {
  for (const auto& [e, name] : table)
    if (iequals(name, text)) return e;
  return std::nullopt;
}

template <typename E, std::size_t N>
std::string_view name_of(const std::array<std::pair<E, std::string_view>, N>& table, E e) {
  for (const auto& [v, name] : table)
    if (v == e) return name;
  return "UNKNOWN";
}

constexpr std::array<std::pair<ServiceType, std::string_view>, 5> kServices{{
    {ServiceType::Http, "HTTP"},
    {ServiceType::P2p, "P2P"},
    {ServiceType::Dns, "DNS"},
    {ServiceType::ProprietaryIot, "PROPRIETARY_IOT"},
    {ServiceType::Other, "OTHER"},
}};

constexpr std::array<std::pair<DeviceType, std::string_view>, 7> kDevices{{
    {DeviceType::Smartphone, "SMARTPHONE"},
    {DeviceType::Pad, "PAD"},
    {DeviceType::Pc, "PC"},
    {DeviceType::TvBox, "TV_BOX"},
    {DeviceType::GameConsole, "GAME_CONSOLE"},
    {DeviceType::IotSensor, "IOT_SENSOR"},
    {DeviceType::Unknown, "UNKNOWN"},
}};

constexpr std::array<std::pair<SubscriberDerivation, std::string_view>, 3> kDerivations{{
    {SubscriberDerivation::AccountMap, "ACCOUNT_MAP"},
    {SubscriberDerivation::DhcpSegment, "DHCP_SEGMENT"},
    {SubscriberDerivation::IpFallback, "IP_FALLBACK"},
}};

[[noreturn]] void bad(const std::string& what) { throw SignatureError("signature db: " + what); }

Cidr cidr_of(const json& j, std::string_view where) {
  auto c = parse_cidr(j.get<std::string>());
  if (!c) bad("invalid address/prefix in " + std::string(where) + ": " + j.get<std::string>());
  return *c;
}

void check_keys(const json& obj, std::initializer_list<std::string_view> allowed,
                std::string_view where) {
  if (!obj.is_object()) bad(std::string(where) + " must be an object");
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    if (!ok) bad("unknown key '" + key + "' in " + std::string(where));
  }
}

DeviceType device_of(const json& j) {
  auto d = parse_device_type(j.get<std::string>());
  if (!d) bad("unknown device_type " + j.get<std::string>());
  return *d;
}

bool host_matches(std::string_view host, std::string_view suffix) {
  if (host.size() < suffix.size()) return false;
  if (!iequals(host.substr(host.size() - suffix.size()), suffix)) return false;
  return host.size() == suffix.size() || host[host.size() - suffix.size() - 1] == '.';
}

std::string strip_port(std::string_view host) {
  return std::string(host.substr(0, host.find(':')));
}

std::string path_of(std::string_view url) { return std::string(url.substr(0, url.find('?'))); }

}  // namespace

std::string_view to_string(ServiceType s) { return name_of(kServices, s); }
std::string_view to_string(DeviceType d) { return name_of(kDevices, d); }
std::string_view to_string(SubscriberDerivation d) { return name_of(kDerivations, d); }
std::optional<ServiceType> parse_service(std::string_view s) { return lookup(kServices, s); }
std::optional<DeviceType> parse_device_type(std::string_view s) { return lookup(kDevices, s); }
std::optional<SubscriberDerivation> parse_derivation(std::string_view s) {
  return lookup(kDerivations, s);
}

bool UaRule::matches(std::string_view user_agent) const {
  if (kind == Kind::Regex) {
    return std::regex_match(user_agent.begin(), user_agent.end(), compiled);
  }
  return user_agent.find(pattern) != std::string_view::npos;
}

SignatureDb SignatureDb::parse(std::string_view text) {
  SignatureDb db;
  try {
    const json j = json::parse(text);
    check_keys(j, {"version", "ports", "extensions", "hosts", "ip_sets", "ua_rules", "oui",
                   "fixed_len", "context", "comment"},
               "document");
    if (!j.contains("version")) bad("missing mandatory 'version'");
    db.version = j.at("version").get<std::int64_t>();
    if (db.version <= 0) bad("version must be positive");

    for (const auto& p : j.value("ports", json::array())) {
      check_keys(p, {"transport", "port", "service"}, "ports[]");
      auto t = parse_transport(p.at("transport").get<std::string>());
      auto svc = parse_service(p.at("service").get<std::string>());
      if (!t || !svc) bad("invalid port rule " + p.dump());
      const auto key = std::pair(*t, p.at("port").get<std::uint16_t>());
      if (!db.port_map.emplace(key, *svc).second) bad("duplicate port rule " + p.dump());
    }
    const json extensions = j.value("extensions", json::object());
    for (const auto& [ext, app] : extensions.items()) {
      db.ext_map[to_lower(ext)] = app.get<std::string>();
    }
    for (const auto& h : j.value("hosts", json::array())) {
      check_keys(h, {"suffix", "application", "provider", "actions"}, "hosts[]");
      HostRule rule;
      rule.suffix = to_lower(h.at("suffix").get<std::string>());
      rule.application = h.at("application").get<std::string>();
      rule.provider = h.value("provider", "");
      for (const auto& a : h.value("actions", json::array())) {
        check_keys(a, {"keyword", "action"}, "hosts[].actions[]");
        rule.actions.push_back({a.at("keyword").get<std::string>(), a.at("action").get<std::string>()});
      }
      db.host_patterns.push_back(std::move(rule));
    }
    for (const auto& s : j.value("ip_sets", json::array())) {
      check_keys(s, {"name", "members", "application", "provider"}, "ip_sets[]");
      IpSetRule rule;
      rule.name = s.at("name").get<std::string>();
      for (const auto& m : s.at("members")) rule.members.push_back(cidr_of(m, "ip_sets"));
      rule.application = s.at("application").get<std::string>();
      rule.provider = s.value("provider", "");
      db.ip_sets.push_back(std::move(rule));
    }
    for (const auto& u : j.value("ua_rules", json::array())) {
      check_keys(u, {"match", "pattern", "device_type", "brand", "os"}, "ua_rules[]");
      UaRule rule;
      const std::string match = u.value("match", "substring");
      rule.pattern = u.at("pattern").get<std::string>();
      if (match == "regex") {
        rule.kind = UaRule::Kind::Regex;
        try {
          rule.compiled = std::regex(rule.pattern, std::regex::ECMAScript | std::regex::optimize);
        } catch (const std::regex_error& e) {
          bad("bad UA regex '" + rule.pattern + "': " + e.what());
        }
      } else if (match != "substring") {
        bad("ua rule match must be 'substring' or 'regex'");
      }
      rule.device_type = device_of(u.at("device_type"));
      rule.brand = u.value("brand", "");
      rule.os = u.value("os", "");
      db.ua_patterns.push_back(std::move(rule));
    }
    for (const auto& o : j.value("oui", json::array())) {
      check_keys(o, {"prefix", "device_type", "brand"}, "oui[]");
      const std::string prefix = o.at("prefix").get<std::string>();
      auto mac = parse_mac(prefix + ":00:00:00");
      if (!mac) bad("invalid OUI prefix " + prefix);
      db.mac_oui[Oui{(*mac)[0], (*mac)[1], (*mac)[2]}] =
          OuiRule{device_of(o.at("device_type")), o.value("brand", "")};
    }
    for (const auto& f : j.value("fixed_len", json::array())) {
      check_keys(f, {"direction", "length", "min_packets", "application", "provider"},
                 "fixed_len[]");
      FixedLenRule rule;
      const std::string dir = f.value("direction", "up");
      if (dir != "up" && dir != "down") bad("fixed_len direction must be up or down");
      rule.direction = dir == "up" ? Direction::Up : Direction::Down;
      rule.length = f.at("length").get<std::uint32_t>();
      rule.min_packets = f.value("min_packets", 1u);
      rule.application = f.at("application").get<std::string>();
      rule.provider = f.value("provider", "");
      db.fixed_len_rules.push_back(std::move(rule));
    }
    if (j.contains("context")) {
      const json& c = j.at("context");
      check_keys(c, {"subnets", "dhcp_leases", "accounts", "provider_ips"}, "context");
      for (const auto& s : c.value("subnets", json::array()))
        db.context.subnets.push_back({cidr_of(s.at("cidr"), "subnets"), s.at("tag").get<std::string>()});
      for (const auto& l : c.value("dhcp_leases", json::array()))
        db.context.dhcp_leases.push_back({cidr_of(l.at("range"), "dhcp_leases"),
                                          l.at("segment").get<std::string>(),
                                          l.value("access_point", "")});
      const json accounts = c.value("accounts", json::object());
      for (const auto& [who, account] : accounts.items())
        db.context.accounts[to_lower(who)] = account.get<std::string>();
      for (const auto& p : c.value("provider_ips", json::array()))
        db.context.provider_ips.push_back({cidr_of(p.at("range"), "provider_ips"),
                                           p.at("provider").get<std::string>()});
    }
  } catch (const json::exception& e) {
    bad(e.what());
  }
  return db;
}

SignatureDb SignatureDb::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SignatureError("cannot open signature db " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

ServiceType classify_service(const Session& s, const SignatureDb& db) {
  if (s.http_info()) return ServiceType::Http;
  if (auto it = db.port_map.find({s.transport, s.responder.port}); it != db.port_map.end())
    return it->second;
  return ServiceType::Other;
}

namespace {

bool fixed_len_matches(const Session& s, const FixedLenRule& rule) {
  const bool up = rule.direction == Direction::Up;
  const std::uint64_t pkts = up ? s.pkt_count_up : s.pkt_count_down;
  const std::uint64_t bytes = up ? s.byte_count_up : s.byte_count_down;
  const auto& samples = up ? s.pkt_len_up : s.pkt_len_down;
  if (pkts < rule.min_packets || bytes != pkts * rule.length) return false;
  for (auto len : samples)
    if (len != rule.length) return false;
  return true;
}

}  // namespace

ApplicationResult classify_application(const Session& s, const SignatureDb& db) {
  ApplicationResult r;
  const HttpGetInfo* http = s.http_info();
  if (http) {
    const std::string host = strip_port(http->host);
    for (const auto& rule : db.host_patterns) {
      if (host.empty() || !host_matches(host, rule.suffix)) continue;
      r.application = rule.application;
      r.provider = rule.provider;
      r.hit = true;
      const std::string path = path_of(http->url);
      for (const auto& a : rule.actions) {
        if (path.find(a.keyword) != std::string::npos) {
          r.action = a.action;
          break;
        }
      }
      return r;
    }
    if (auto it = db.ext_map.find(url_extension(http->url)); it != db.ext_map.end()) {
      r.application = it->second;
      r.hit = true;
      return r;
    }
  }
  for (const auto& set : db.ip_sets) {
    for (const auto& member : set.members) {
      if (member.contains(s.responder.ip)) {
        r.application = set.application;
        r.provider = set.provider;
        r.hit = true;
        return r;
      }
    }
  }
  for (const auto& rule : db.fixed_len_rules) {
    if (fixed_len_matches(s, rule)) {
      r.application = rule.application;
      r.provider = rule.provider;
      r.hit = true;
      return r;
    }
  }
  return r;
}

DeviceResult classify_device(const Session& s, const SignatureDb& db) {
  DeviceResult r;
  if (const HttpGetInfo* http = s.http_info(); http && !http->user_agent.empty()) {
    for (const auto& rule : db.ua_patterns) {
      if (rule.matches(http->user_agent)) {
        return {rule.device_type, rule.brand, rule.os, true};
      }
    }
  }
  const Oui oui{s.initiator.mac[0], s.initiator.mac[1], s.initiator.mac[2]};
  if (auto it = db.mac_oui.find(oui); it != db.mac_oui.end()) {
    return {it->second.device_type, it->second.brand, {}, true};
  }
  return r;
}

ContextResult classify_context(const Session& s, const ContextConfig& cfg) {
  ContextResult r;
  const Ipv4 src = s.initiator.ip;

  const SubnetTag* best = nullptr;
  for (const auto& entry : cfg.subnets) {
    if (entry.subnet.contains(src) && (!best || entry.subnet.prefix_len > best->subnet.prefix_len))
      best = &entry;
  }
  if (best) {
    r.location.subnet_tag = best->tag;
  } else {
    r.location.subnet_tag = to_string(Cidr{Ipv4{src.value & 0xffffff00u}, 24});
  }
  const DhcpLease* lease = nullptr;
  for (const auto& l : cfg.dhcp_leases) {
    if (l.range.contains(src) && (!lease || l.range.prefix_len > lease->range.prefix_len)) lease = &l;
  }
  if (lease) {
    r.location.dhcp_segment = lease->segment;
    r.location.access_point = lease->access_point;
  }

  const std::string ip_text = to_string(src);
  auto account = cfg.accounts.find(ip_text);
  if (account == cfg.accounts.end()) account = cfg.accounts.find(to_string(s.initiator.mac));
  if (account != cfg.accounts.end()) {
    r.subscriber = {account->second, SubscriberDerivation::AccountMap};
  } else if (lease) {
    r.subscriber = {lease->segment, SubscriberDerivation::DhcpSegment};
  } else {
    r.subscriber = {ip_text, SubscriberDerivation::IpFallback};
  }

  const ProviderRange* provider = nullptr;
  for (const auto& p : cfg.provider_ips) {
    if (p.range.contains(s.responder.ip) && (!provider || p.range.prefix_len > provider->range.prefix_len))
      provider = &p;
  }
  if (provider) r.provider_fallback = provider->provider;
  return r;
}

AwarenessLabels classify_all(const Session& s, const SignatureDb& db, const DecisionTreeModel* model) {
  AwarenessLabels labels;

  labels.service = classify_service(s, db);
  labels.confidence.service = s.http_info() || labels.service != ServiceType::Other ? 1.0 : 0.0;

  ApplicationResult app = classify_application(s, db);
  labels.application = app.application;
  labels.action = app.action;
  labels.provider = app.provider;
  labels.confidence.application = app.hit ? 1.0 : 0.0;
  if (!app.hit && model &&
      (labels.service == ServiceType::ProprietaryIot || labels.service == ServiceType::Other)) {
    try {
      const Prediction p = classify_encrypted(features(s), *model);
      labels.application = p.label;
      labels.confidence.application = p.confidence;
    } catch (const TreeError&) {
      // An invalid model leaves the application unknown.
    }
  }

  DeviceResult dev = classify_device(s, db);
  labels.device_type = dev.device_type;
  labels.device_brand = dev.brand;
  labels.device_os = dev.os;
  labels.confidence.device = dev.hit ? 1.0 : 0.0;

  ContextResult ctx = classify_context(s, db.context);
  labels.location = std::move(ctx.location);
  labels.subscriber = std::move(ctx.subscriber);
  if (labels.provider.empty()) labels.provider = std::move(ctx.provider_fallback);
  labels.confidence.provider = labels.provider.empty() ? 0.0 : 1.0;
  labels.confidence.location = labels.location.dhcp_segment.empty() &&
                                       std::none_of(db.context.subnets.begin(), db.context.subnets.end(),
                                                    [&](const SubnetTag& t) {
                                                      return t.subnet.contains(s.initiator.ip);
                                                    })
                                   ? 0.0
                                   : 1.0;
  labels.confidence.subscriber =
      labels.subscriber.derivation == SubscriberDerivation::IpFallback ? 0.0 : 1.0;
  return labels;
}

}  // namespace shgw
