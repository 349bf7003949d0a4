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

#include "shgw/trafficgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "json.hpp"

namespace shgw {

namespace {

constexpr std::uint32_t kEthLen = 14;
constexpr std::uint32_t kIpLen = 20;
constexpr std::uint32_t kTcpLen = 20;
constexpr std::uint32_t kUdpLen = 8;

void put16(std::vector<std::uint8_t>& b, std::size_t at, std::uint16_t v) {
  b[at] = static_cast<std::uint8_t>(v >> 8);
  b[at + 1] = static_cast<std::uint8_t>(v);
}

void put32(std::vector<std::uint8_t>& b, std::size_t at, std::uint32_t v) {
  put16(b, at, static_cast<std::uint16_t>(v >> 16));
  put16(b, at + 2, static_cast<std::uint16_t>(v));
}

std::uint16_t ip_checksum(const std::uint8_t* p, std::size_t n) {
  std::uint32_t sum = 0;
  for (std::size_t i = 0; i + 1 < n; i += 2) sum += (std::uint32_t{p[i]} << 8) | p[i + 1];
  while (sum >> 16) sum = (sum & 0xffff) + (sum >> 16);
  return static_cast<std::uint16_t>(~sum);
}

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

MacAddr mac(std::uint8_t a, std::uint8_t b, std::uint8_t c, std::uint8_t d, std::uint8_t e, std::uint8_t f) {
  return {a, b, c, d, e, f};
}

const MacAddr kGatewayMac = mac(0xa0, 0xb1, 0xc2, 0x00, 0x00, 0x01);

// Expected labels of a device, split by whether the session carries a UA.
struct Device {
  MacAddr mac;
  Ipv4 ip;
  std::string user_agent;
  DeviceType ua_type = DeviceType::Unknown;
  std::string ua_brand;
  std::string ua_os;
  DeviceType oui_type = DeviceType::Unknown;
  std::string oui_brand;
  LocationInfo location;
  SubscriberInfo subscriber;
  std::uint16_t next_port = 20000;

  std::uint16_t take_port() {
    const std::uint16_t p = next_port;
    next_port = next_port >= 60999 ? 20000 : static_cast<std::uint16_t>(next_port + 1);
    return p;
  }
};

LocationInfo lan(std::string tag) { return {std::move(tag), "lan-1", "ap-living"}; }
LocationInfo iot() { return {"iot-vlan", "iot-1", "ap-hall"}; }

std::vector<Device> home_devices() {
  const SubscriberInfo lan_seg{"lan-1", SubscriberDerivation::DhcpSegment};
  const SubscriberInfo iot_seg{"iot-1", SubscriberDerivation::DhcpSegment};
  std::vector<Device> d;
  // 0 iPhone
  d.push_back({mac(0x3c, 0x22, 0xfb, 0x10, 0x00, 0x01), Ipv4(192, 168, 1, 10),
               "Mozilla/5.0 (iPhone; CPU iPhone OS 14_4 like Mac OS X) AppleWebKit/605.1.15 (KHTML, like Gecko) "
               "Version/14.0 Mobile/15E148 Safari/604.1",
               DeviceType::Smartphone, "Apple", "iOS", DeviceType::Smartphone, "Apple", lan("home-lan"),
               {"alice", SubscriberDerivation::AccountMap}});
  // 1 Huawei phone
  d.push_back({mac(0x00, 0xe0, 0xfc, 0x10, 0x00, 0x02), Ipv4(192, 168, 1, 11),
               "Mozilla/5.0 (Linux; Android 10; HUAWEI P30 Build/HUAWEIELE-L29) AppleWebKit/537.36 (KHTML, like "
               "Gecko) Chrome/88.0.4324.93 Mobile Safari/537.36",
               DeviceType::Smartphone, "Huawei", "Android", DeviceType::Smartphone, "Huawei", lan("home-lan"),
               lan_seg});
  // 2 generic Android phone, unregistered OUI
  d.push_back({mac(0x02, 0x11, 0x22, 0x10, 0x00, 0x03), Ipv4(192, 168, 1, 12),
               "Mozilla/5.0 (Linux; Android 11; Pixel 5) AppleWebKit/537.36 (KHTML, like Gecko) "
               "Chrome/90.0.4430.91 Mobile Safari/537.36",
               DeviceType::Smartphone, "", "Android", DeviceType::Unknown, "", lan("home-lan"), lan_seg});
  // 3 iPad on the 5 GHz half of the LAN
  d.push_back({mac(0xf0, 0xd1, 0xa9, 0x10, 0x00, 0x04), Ipv4(192, 168, 1, 140),
               "Mozilla/5.0 (iPad; CPU OS 13_2 like Mac OS X) AppleWebKit/605.1.15 (KHTML, like Gecko) "
               "Version/13.0 Mobile/15E148 Safari/604.1",
               DeviceType::Pad, "Apple", "iOS", DeviceType::Pad, "Apple", lan("wifi-5g"), lan_seg});
  // 4 Android tablet
  d.push_back({mac(0x02, 0x11, 0x22, 0x10, 0x00, 0x05), Ipv4(192, 168, 1, 141),
               "Mozilla/5.0 (Linux; Android 9; SM-T510) AppleWebKit/537.36 (KHTML, like Gecko) "
               "Chrome/89.0.4389.105 Safari/537.36",
               DeviceType::Pad, "", "Android", DeviceType::Unknown, "", lan("wifi-5g"), lan_seg});
  // 5 Windows PC, account keyed by MAC
  d.push_back({mac(0x00, 0x1b, 0x21, 0x3a, 0x4f, 0x01), Ipv4(192, 168, 1, 20),
               "Mozilla/5.0 (Windows NT 10.0; Win64; x64) AppleWebKit/537.36 (KHTML, like Gecko) "
               "Chrome/91.0.4472.124 Safari/537.36",
               DeviceType::Pc, "", "Windows", DeviceType::Pc, "Intel", lan("home-lan"),
               {"bob", SubscriberDerivation::AccountMap}});
  // 6 MacBook on the guest network (no subnet tag, no lease)
  d.push_back({mac(0xa4, 0x83, 0xe7, 0x10, 0x00, 0x07), Ipv4(10, 0, 0, 5),
               "Mozilla/5.0 (Macintosh; Intel Mac OS X 10_15_7) AppleWebKit/605.1.15 (KHTML, like Gecko) "
               "Version/14.1 Safari/605.1.15",
               DeviceType::Pc, "Apple", "macOS", DeviceType::Pc, "Apple", {"10.0.0.0/24", "", ""},
               {"10.0.0.5", SubscriberDerivation::IpFallback}});
  // 7 TV box
  d.push_back({mac(0xf0, 0xb4, 0x29, 0x10, 0x00, 0x08), Ipv4(192, 168, 1, 30),
               "Dalvik/2.1.0 (Linux; U; Android 9; MiBOX4 Build/PI)", DeviceType::TvBox, "Xiaomi", "Android",
               DeviceType::TvBox, "Xiaomi", lan("home-lan"), lan_seg});
  // 8 game console
  d.push_back({mac(0x00, 0xd9, 0xd1, 0x10, 0x00, 0x09), Ipv4(192, 168, 1, 31),
               "Mozilla/5.0 (PlayStation 4 7.02) AppleWebKit/605.1.15 (KHTML, like Gecko)", DeviceType::GameConsole,
               "Sony", "Orbis", DeviceType::GameConsole, "Sony", lan("home-lan"), lan_seg});
  // 9 smart light
  d.push_back({mac(0x00, 0x17, 0x88, 0x10, 0x00, 0x0a), Ipv4(192, 168, 2, 50), "", DeviceType::Unknown, "", "",
               DeviceType::IotSensor, "Philips", iot(), iot_seg});
  // 10 smoke detector
  d.push_back({mac(0x18, 0xb4, 0x30, 0x10, 0x00, 0x0b), Ipv4(192, 168, 2, 51), "", DeviceType::Unknown, "", "",
               DeviceType::IotSensor, "Nest", iot(), iot_seg});
  // 11 telemetry sensor, unregistered OUI
  d.push_back({mac(0x02, 0xaa, 0xbb, 0x10, 0x00, 0x0c), Ipv4(192, 168, 2, 52), "", DeviceType::Unknown, "", "",
               DeviceType::Unknown, "", iot(), iot_seg});
  return d;
}

enum DeviceIndex : std::size_t {
  kIphone, kHuawei, kAndroidPhone, kIpad, kAndroidPad, kWindowsPc, kMacBook,
  kTvBox, kConsole, kSmartLight, kSmokeDetector, kTelemetry
};

struct Server {
  Ipv4 ip;
  std::string host;
};

// A concrete GET plus the labels the rules must assign to it.
struct Request {
  Server server;
  std::uint16_t port = 80;
  std::string path;
  std::string application;
  std::string provider;
  std::string action{kUnknownApp};
  std::string referer;
  std::uint32_t response_packets = 2;
};

struct GenFrame {
  Micros ts;
  std::uint64_t session;
  std::uint32_t order;
  std::vector<std::uint8_t> bytes;
  bool up;
};

// Accumulates one session's frames and its expected record.
class SessionWriter {
 public:
  SessionWriter(std::vector<GenFrame>& sink, std::uint64_t id, const Device& dev, Ipv4 server_ip,
                std::uint16_t server_port, Transport t, std::uint16_t client_port, Micros start, std::mt19937_64& rng)
      : sink_(sink), id_(id), now_(start) {
    spec_up_.src_mac = dev.mac;
    spec_up_.dst_mac = kGatewayMac;
    spec_up_.src_ip = dev.ip;
    spec_up_.dst_ip = server_ip;
    spec_up_.src_port = client_port;
    spec_up_.dst_port = server_port;
    spec_up_.transport = t;
    spec_down_ = spec_up_;
    std::swap(spec_down_.src_mac, spec_down_.dst_mac);
    std::swap(spec_down_.src_ip, spec_down_.dst_ip);
    std::swap(spec_down_.src_port, spec_down_.dst_port);
    cseq_ = static_cast<std::uint32_t>(rng());
    sseq_ = static_cast<std::uint32_t>(rng());
  }

  void wait(Micros us) { now_ += std::max<Micros>(us, 1); }

  void up(std::uint8_t flags, std::string payload = {}) { emit(true, flags, std::move(payload)); }
  void down(std::uint8_t flags, std::string payload = {}) { emit(false, flags, std::move(payload)); }

  void handshake(Micros rtt) {
    using namespace tcp_flag;
    up(kSyn);
    wait(rtt);
    down(kSyn | kAck);
    wait(rtt / 10 + 20);
    up(kAck);
  }

 private:
  void emit(bool is_up, std::uint8_t flags, std::string payload) {
    FrameSpec spec = is_up ? spec_up_ : spec_down_;
    spec.tcp_flags = flags;
    std::uint32_t& seq = is_up ? cseq_ : sseq_;
    spec.seq = seq;
    spec.ack = is_up ? sseq_ : cseq_;
    spec.payload = std::move(payload);
    seq += static_cast<std::uint32_t>(spec.payload.size()) +
           ((flags & (tcp_flag::kSyn | tcp_flag::kFin)) ? 1u : 0u);
    sink_.push_back({now_, id_, order_++, build_frame(spec), is_up});
  }

  std::vector<GenFrame>& sink_;
  std::uint64_t id_;
  Micros now_;
  FrameSpec spec_up_;
  FrameSpec spec_down_;
  std::uint32_t cseq_ = 0;
  std::uint32_t sseq_ = 0;
  std::uint32_t order_ = 0;
};

std::string filler(std::size_t n, char c = 'x') { return std::string(n, c); }

std::string get_request(const Request& r, const std::string& user_agent) {
  std::string host = r.server.host;
  if (r.port != 80) host += ":" + std::to_string(r.port);
  std::string req = "GET " + r.path + " HTTP/1.1\r\nHost: " + host + "\r\n";
  if (!user_agent.empty()) req += "User-Agent: " + user_agent + "\r\n";
  if (!r.referer.empty()) req += "Referer: " + r.referer + "\r\n";
  req += "Accept: */*\r\nConnection: keep-alive\r\n\r\n";
  return req;
}

class Generator {
 public:
  Generator(const ScenarioSpec& spec, std::uint64_t seed) : spec_(spec), rng_(seed), devices_(home_devices()) {}

  Corpus run();

 private:
  using Dist = std::uniform_int_distribution<std::int64_t>;

  std::int64_t uniform(std::int64_t lo, std::int64_t hi) { return Dist(lo, hi)(rng_); }
  Micros session_start() {
    const auto span = static_cast<Micros>(spec_.time_span * 1e6);
    return spec_.start + uniform(0, std::max<Micros>(span - 1, 0));
  }

  ShdrRecord& expect(Device& dev, ServiceType service, std::string application, std::string provider,
                     bool has_ua, RecordType type = RecordType::Session) {
    ShdrRecord r;
    r.record_type = type;
    r.gateway_id = "truth";
    auto& l = r.labels;
    l.service = service;
    l.application = std::move(application);
    l.provider = std::move(provider);
    if (has_ua) {
      l.device_type = dev.ua_type;
      l.device_brand = dev.ua_brand;
      l.device_os = dev.ua_os;
    } else {
      l.device_type = dev.oui_type;
      l.device_brand = dev.oui_brand;
    }
    l.location = dev.location;
    l.subscriber = dev.subscriber;
    truth_.push_back(std::move(r));
    return truth_.back();
  }

  Request browse_request(std::size_t device, std::uint64_t nth);
  void http_session(std::size_t device, const Request& req, Micros start);
  void aborted_http(std::size_t device, const Server& server, const std::string& provider, Micros start);
  void smart_light(bool failed, Micros start);
  void datagram_iot(bool smoke, Micros start);
  void dns(std::size_t device, std::uint64_t nth, Micros start);
  void p2p(std::uint64_t nth, Micros start);

  const ScenarioSpec& spec_;
  std::mt19937_64 rng_;
  std::vector<Device> devices_;
  std::vector<GenFrame> frames_;
  std::vector<ShdrRecord> truth_;
  std::uint64_t browse_seen_ = 0;
};

const Server kTaobao{Ipv4(140, 205, 0, 10), "www.taobao.com"};
const Server kTaobaoItem{Ipv4(140, 205, 0, 11), "item.taobao.com"};
const Server kYouku{Ipv4(106, 11, 0, 20), "www.youku.com"};
const Server kWeibo{Ipv4(180, 149, 0, 30), "weibo.com"};
const Server kBaidu{Ipv4(220, 181, 0, 40), "www.baidu.com"};
const Server kAds{Ipv4(203, 0, 113, 200), "ads.adnet.example"};
const Server kStatic{Ipv4(203, 0, 113, 210), "static.cdnhub.example"};
const Server kPsn{Ipv4(203, 0, 113, 220), "store.playstation.example"};
const Server kTvCdn{Ipv4(203, 0, 113, 70), "vod.tvcdn.example"};
const Server kSoftHub{Ipv4(198, 51, 100, 150), "dl.softhub.example"};
const Server kRouter{Ipv4(192, 168, 1, 1), "192.168.1.1"};
const Ipv4 kLightCloud(203, 0, 113, 5);
const Ipv4 kSmokeCloud(198, 51, 100, 20);
const Ipv4 kTelemetryCloud(198, 51, 100, 21);

Request Generator::browse_request(std::size_t device, std::uint64_t nth) {
  (void)device;
  const std::uint64_t slot = browse_seen_++ % 100;
  const std::string id = std::to_string(uniform(1000, 999999));
  Request r;
  r.response_packets = static_cast<std::uint32_t>(uniform(1, 6));
  if (slot < spec_.resource_fraction_pct) {
    static const char* kExts[] = {"js", "css", "png", "jpg", "jpeg", "gif", "ico"};
    const char* ext = kExts[nth % 7];
    r.server = kStatic;
    r.path = std::string("/assets/") + id + "." + ext;
    r.application = "static_cdn";
    r.provider = "CdnHub";
    return r;
  }
  if (slot < spec_.resource_fraction_pct + spec_.ad_fraction_pct) {
    r.server = kAds;
    r.path = "/ad/banner?slot=" + id;
    r.application = "advertising";
    r.provider = "AdNet";
    return r;
  }
  switch (nth % 8) {
    case 0:
      r = {kTaobao, 80, "/search?q=shoes" + id, "taobao", "Alibaba", "search"};
      break;
    case 1:
      r = {kTaobaoItem, 80, "/item/" + id + ".htm", "taobao", "Alibaba", "browse_item"};
      break;
    case 2:
      r = {kTaobao, 80, "/cart/add?id=" + id, "taobao", "Alibaba", "add_to_cart"};
      break;
    case 3:
      r = {kYouku, 80, "/v_show/id_" + id + ".html", "youku", "Youku", "play_video"};
      break;
    case 4:
      r = {kWeibo, 80, "/comment/" + id, "weibo", "Sina", "comment"};
      break;
    case 5:
      r = {kWeibo, 80, "/u/" + id, "weibo", "Sina", std::string(kUnknownApp)};
      break;
    case 6:
      r = {kBaidu, 80, "/s?wd=weather" + id, "baidu", "Baidu", "search"};
      break;
    default:
      r = {kBaidu, 80, "/index.html", "baidu", "Baidu", std::string(kUnknownApp)};
      break;
  }
  if (nth % 3 == 0) r.referer = "http://www.baidu.com/s?wd=" + id;
  r.response_packets = static_cast<std::uint32_t>(uniform(1, 6));
  return r;
}

void Generator::http_session(std::size_t device, const Request& req, Micros start) {
  using namespace tcp_flag;
  Device& dev = devices_[device];
  const std::uint16_t port = dev.take_port();
  SessionWriter w(frames_, truth_.size(), dev, req.server.ip, req.port, Transport::TCP, port, start, rng_);
  const Micros rtt = uniform(2'000, 60'000);
  w.handshake(rtt);
  w.wait(uniform(50, 500));
  w.up(kPsh | kAck, get_request(req, dev.user_agent));
  w.wait(rtt);
  for (std::uint32_t i = 0; i < req.response_packets; ++i) {
    w.down(kAck, filler(static_cast<std::size_t>(uniform(200, 1448))));
    w.wait(uniform(100, 3'000));
    if (i % 2 == 1) {
      w.up(kAck);
      w.wait(uniform(50, 500));
    }
  }
  w.wait(uniform(1'000, 200'000));
  w.up(kFin | kAck);
  w.wait(rtt);
  w.down(kFin | kAck);

  auto& r = expect(dev, ServiceType::Http, req.application, req.provider, !dev.user_agent.empty());
  r.labels.action = req.action;
  std::string host = req.server.host;
  if (req.port != 80) host += ":" + std::to_string(req.port);
  r.http = HttpFields{req.path, host, dev.user_agent, req.referer};
}

void Generator::aborted_http(std::size_t device, const Server& server, const std::string& provider, Micros start) {
  using namespace tcp_flag;
  Device& dev = devices_[device];
  SessionWriter w(frames_, truth_.size(), dev, server.ip, 80, Transport::TCP, dev.take_port(), start, rng_);
  w.handshake(uniform(2'000, 30'000));
  w.wait(uniform(1'000, 50'000));
  w.up(kRst);
  expect(dev, ServiceType::Http, std::string(kUnknownApp), provider, false);
}

void Generator::smart_light(bool failed, Micros start) {
  using namespace tcp_flag;
  Device& dev = devices_[kSmartLight];
  // A quarter of the working lamps talk datagrams to the secure CoAP port.
  if (!failed && uniform(0, 3) == 0) {
    SessionWriter w(frames_, truth_.size(), dev, kLightCloud, 5684, Transport::UDP, dev.take_port(), start, rng_);
    const auto exchanges = uniform(2, 6);
    for (std::int64_t i = 0; i < exchanges; ++i) {
      if (i > 0) w.wait(uniform(1'000, 400'000));
      w.up(0, filler(static_cast<std::size_t>(uniform(60, 120)), 'L'));
      w.wait(uniform(5'000, 80'000));
      w.down(0, filler(static_cast<std::size_t>(uniform(40, 120)), 'l'));
    }
    expect(dev, ServiceType::ProprietaryIot, "smart_light", "LightCo", false);
    return;
  }
  SessionWriter w(frames_, truth_.size(), dev, kLightCloud, 8883, Transport::TCP, dev.take_port(), start, rng_);
  if (failed) {
    w.up(kSyn);
    w.wait(1'000'000);
    w.up(kSyn);
    w.wait(2'000'000);
    w.up(kSyn);
  } else {
    const Micros rtt = uniform(5'000, 80'000);
    w.handshake(rtt);
    const auto exchanges = uniform(2, 6);
    for (std::int64_t i = 0; i < exchanges; ++i) {
      w.wait(uniform(1'000, 400'000));
      w.up(kPsh | kAck, filler(static_cast<std::size_t>(uniform(60, 200)), 'L'));
      w.wait(rtt);
      w.down(kPsh | kAck, filler(static_cast<std::size_t>(uniform(60, 200)), 'l'));
    }
    w.wait(uniform(1'000, 50'000));
    w.up(kFin | kAck);
    w.wait(rtt);
    w.down(kFin | kAck);
  }
  expect(dev, ServiceType::ProprietaryIot, "smart_light", "LightCo", false);
}

void Generator::datagram_iot(bool smoke, Micros start) {
  Device& dev = devices_[smoke ? kSmokeDetector : kTelemetry];
  const std::uint16_t server_port = smoke ? 5683 : 5684;
  SessionWriter w(frames_, truth_.size(), dev, smoke ? kSmokeCloud : kTelemetryCloud, server_port, Transport::UDP,
                  dev.take_port(), start, rng_);
  const auto ups = uniform(3, 8);
  const std::uint32_t overhead = header_overhead(Transport::UDP);
  for (std::int64_t i = 0; i < ups; ++i) {
    if (i > 0) w.wait(uniform(50'000, 2'000'000));
    const std::size_t wire = smoke ? 96 : static_cast<std::size_t>(uniform(300, 500));
    w.up(0, filler(wire - overhead, smoke ? 'S' : 'T'));
    if (uniform(0, 9) < 6) {
      w.wait(uniform(5'000, 50'000));
      w.down(0, filler(static_cast<std::size_t>(uniform(20, 80)), 'a'));
    }
  }
  if (smoke) {
    expect(dev, ServiceType::ProprietaryIot, "smoke_alarm", "Nest", false, RecordType::Alert);
  } else {
    expect(dev, ServiceType::ProprietaryIot, "iot_telemetry", "", false);
  }
}

void Generator::dns(std::size_t device, std::uint64_t nth, Micros start) {
  using namespace tcp_flag;
  static const char* kNames[] = {"www.taobao.com", "weibo.com", "www.youku.com", "www.baidu.com",
                                 "ads.adnet.example", "time.apple.com"};
  const std::string name = kNames[nth % 6];
  std::string query = filler(12, '\0');
  query[0] = static_cast<char>(nth >> 8);
  query[1] = static_cast<char>(nth);
  query[5] = 1;
  std::size_t from = 0;
  while (from <= name.size()) {
    const auto dot = std::min(name.find('.', from), name.size());
    query += static_cast<char>(dot - from);
    query += name.substr(from, dot - from);
    from = dot + 1;
  }
  query += std::string("\0\0\x01\0\x01", 5);
  const bool google = nth % 4 == 0;
  const Ipv4 resolver = google ? Ipv4(8, 8, 8, 8) : Ipv4(114, 114, 114, 114);
  const bool over_tcp = nth % 20 == 7;
  Device& dev = devices_[device];
  SessionWriter w(frames_, truth_.size(), dev, resolver, 53, over_tcp ? Transport::TCP : Transport::UDP,
                  dev.take_port(), start, rng_);
  const Micros rtt = uniform(3'000, 40'000);
  const std::string answer = query + filler(16, 'r');
  if (over_tcp) {
    w.handshake(rtt);
    w.wait(100);
    w.up(kPsh | kAck, std::string{static_cast<char>(query.size() >> 8), static_cast<char>(query.size())} + query);
    w.wait(rtt);
    w.down(kPsh | kAck, std::string{static_cast<char>(answer.size() >> 8), static_cast<char>(answer.size())} + answer);
    w.wait(500);
    w.up(kFin | kAck);
    w.wait(rtt);
    w.down(kFin | kAck);
  } else {
    w.up(0, query);
    w.wait(rtt);
    w.down(0, answer);
  }
  expect(dev, ServiceType::Dns, std::string(kUnknownApp), google ? "Google" : "114DNS", false);
}

void Generator::p2p(std::uint64_t nth, Micros start) {
  using namespace tcp_flag;
  Device& dev = devices_[kWindowsPc];
  const Ipv4 peer(61, static_cast<std::uint8_t>(uniform(0, 255)), static_cast<std::uint8_t>(uniform(0, 255)),
                  static_cast<std::uint8_t>(uniform(1, 254)));
  const bool udp = nth % 5 == 2;
  SessionWriter w(frames_, truth_.size(), dev, peer, 6881, udp ? Transport::UDP : Transport::TCP, dev.take_port(),
                  start, rng_);
  if (udp) {
    w.up(0, "d1:ad2:id20:" + filler(20, 'i') + "e1:q4:ping1:t2:aa1:y1:qe");
    w.wait(uniform(10'000, 200'000));
    w.down(0, "d1:rd2:id20:" + filler(20, 'p') + "e1:t2:aa1:y1:re");
  } else {
    const Micros rtt = uniform(20'000, 200'000);
    w.handshake(rtt);
    w.up(kPsh | kAck, std::string("\x13" "BitTorrent protocol") + filler(48, '\0'));
    w.wait(rtt);
    w.down(kPsh | kAck, std::string("\x13" "BitTorrent protocol") + filler(48, '\0'));
    const auto pieces = uniform(2, 20);
    for (std::int64_t i = 0; i < pieces; ++i) {
      w.wait(uniform(1'000, 50'000));
      w.down(kAck, filler(1448, 'P'));
      if (i % 4 == 3) w.up(kAck);
    }
    w.wait(uniform(1'000, 50'000));
    w.up(kFin | kAck);
    w.wait(rtt);
    w.down(kFin | kAck);
  }
  expect(dev, ServiceType::P2p, std::string(kUnknownApp), "", false);
}

Corpus Generator::run() {
  spec_.validate();
  // Sessions are emitted profile by profile; start times are random, so the
  // merge below interleaves them.
  for (std::uint64_t i = 0; i < spec_.smartphone_browse; ++i) {
    static const std::size_t kPhones[] = {kIphone, kIphone, kIphone, kIphone, kIphone,
                                          kHuawei, kHuawei, kHuawei, kAndroidPhone, kAndroidPhone};
    const std::size_t dev = kPhones[i % 10];
    http_session(dev, browse_request(dev, i), session_start());
  }
  for (std::uint64_t i = 0; i < spec_.pad_browse; ++i) {
    const std::size_t dev = i % 3 == 2 ? kAndroidPad : kIpad;
    http_session(dev, browse_request(dev, i), session_start());
  }
  for (std::uint64_t i = 0; i < spec_.console_browse; ++i) {
    Request r{kPsn, 80, "/game/" + std::to_string(uniform(1, 99999)), "psn", "Sony", "browse_game"};
    if (i % 2 == 1) r = {kPsn, 80, "/home", "psn", "Sony", std::string(kUnknownApp)};
    r.response_packets = static_cast<std::uint32_t>(uniform(1, 4));
    http_session(kConsole, r, session_start());
  }
  for (std::uint64_t i = 0; i < spec_.pc_download; ++i) {
    const std::size_t dev = i % 4 == 3 ? kMacBook : kWindowsPc;
    if (i % 20 == 19) {
      aborted_http(dev, kSoftHub, "SoftHub", session_start());
      continue;
    }
    static const std::pair<const char*, const char*> kFiles[] = {
        {"exe", "software_download"}, {"apk", "app_download"}, {"zip", "archive_download"}};
    const auto& [ext, app] = kFiles[i % 3];
    Request r{kSoftHub, 80, "/files/pkg" + std::to_string(uniform(1, 9999)) + "." + ext, app, "SoftHub"};
    r.response_packets = static_cast<std::uint32_t>(uniform(40, 200));
    http_session(dev, r, session_start());
  }
  for (std::uint64_t i = 0; i < spec_.tv_stream; ++i) {
    static const std::pair<const char*, const char*> kMedia[] = {
        {"swf", "flash_video"}, {"mov", "quicktime_video"}, {"asf", "asf_video"}, {"3gp", "mobile_video"}};
    const auto& [ext, app] = kMedia[i % 4];
    Request r{kTvCdn, 80, "/vod/" + std::to_string(uniform(1, 99999)) + "." + ext, app, "TVCDN"};
    r.response_packets = static_cast<std::uint32_t>(uniform(20, 120));
    http_session(kTvBox, r, session_start());
  }
  for (std::uint64_t i = 0; i < spec_.upnp_http; ++i) {
    Request r{kRouter, 49152, "/rootDesc.xml", std::string(kUnknownApp), ""};
    r.response_packets = 2;
    http_session(kTvBox, r, session_start());
  }
  for (std::uint64_t i = 0; i < spec_.smart_light; ++i) smart_light(false, session_start());
  for (std::uint64_t i = 0; i < spec_.smart_light_failed; ++i) smart_light(true, session_start());
  for (std::uint64_t i = 0; i < spec_.smoke_alarm; ++i) datagram_iot(true, session_start());
  for (std::uint64_t i = 0; i < spec_.iot_telemetry; ++i) datagram_iot(false, session_start());
  for (std::uint64_t i = 0; i < spec_.dns; ++i) {
    static const std::size_t kAskers[] = {kIphone, kHuawei, kAndroidPhone, kIpad, kWindowsPc, kMacBook, kTvBox};
    dns(kAskers[i % 7], i, session_start());
  }
  for (std::uint64_t i = 0; i < spec_.p2p; ++i) p2p(i, session_start());

  std::sort(frames_.begin(), frames_.end(), [](const GenFrame& a, const GenFrame& b) {
    if (a.ts != b.ts) return a.ts < b.ts;
    if (a.session != b.session) return a.session < b.session;
    return a.order < b.order;
  });

  Corpus out;
  out.frames.reserve(frames_.size());
  std::vector<bool> seen(truth_.size(), false);
  Micros last = std::numeric_limits<Micros>::min();
  for (auto& f : frames_) {
    const Micros ts = std::max(f.ts, last + 1);
    last = ts;
    ShdrRecord& r = truth_[f.session];
    const auto len = static_cast<std::uint32_t>(f.bytes.size());
    if (!seen[f.session]) {
      seen[f.session] = true;
      r.ts_first = ts;
      const auto pkt = std::get<Packet>(decode_frame(ts, f.bytes, len));
      r.src_mac = pkt.src_mac;
      r.dst_mac = pkt.dst_mac;
      r.src_ip = pkt.src_ip;
      r.dst_ip = pkt.dst_ip;
      r.src_port = pkt.src_port;
      r.dst_port = pkt.dst_port;
      r.transport = pkt.transport;
    }
    r.ts_last = ts;
    if (f.up) {
      r.byte_count_up += len;
      ++r.pkt_count_up;
    } else {
      r.byte_count_down += len;
      ++r.pkt_count_down;
    }
    out.frames.push_back({ts, len, std::move(f.bytes)});
  }
  std::stable_sort(truth_.begin(), truth_.end(),
                   [](const ShdrRecord& a, const ShdrRecord& b) { return a.ts_first < b.ts_first; });
  out.truth = std::move(truth_);
  return out;
}

}  // namespace

std::vector<std::uint8_t> build_frame(const FrameSpec& spec) {
  const bool tcp = spec.transport == Transport::TCP;
  const std::uint32_t l4 = tcp ? kTcpLen : kUdpLen;
  const std::size_t total = kEthLen + kIpLen + l4 + spec.payload.size();
  std::vector<std::uint8_t> b(total, 0);
  std::copy(spec.dst_mac.begin(), spec.dst_mac.end(), b.begin());
  std::copy(spec.src_mac.begin(), spec.src_mac.end(), b.begin() + 6);
  put16(b, 12, 0x0800);
  const std::size_t ip = kEthLen;
  b[ip] = 0x45;
  put16(b, ip + 2, static_cast<std::uint16_t>(kIpLen + l4 + spec.payload.size()));
  put16(b, ip + 6, 0x4000);  // DF
  b[ip + 8] = 64;
  b[ip + 9] = tcp ? 6 : 17;
  put32(b, ip + 12, spec.src_ip.value);
  put32(b, ip + 16, spec.dst_ip.value);
  put16(b, ip + 10, ip_checksum(&b[ip], kIpLen));
  const std::size_t l4_at = ip + kIpLen;
  put16(b, l4_at, spec.src_port);
  put16(b, l4_at + 2, spec.dst_port);
  if (tcp) {
    put32(b, l4_at + 4, spec.seq);
    put32(b, l4_at + 8, spec.ack);
    b[l4_at + 12] = 5 << 4;
    b[l4_at + 13] = spec.tcp_flags;
    put16(b, l4_at + 14, 65535);
  } else {
    put16(b, l4_at + 4, static_cast<std::uint16_t>(kUdpLen + spec.payload.size()));
  }
  std::copy(spec.payload.begin(), spec.payload.end(), b.begin() + static_cast<std::ptrdiff_t>(l4_at + l4));
  return b;
}

std::uint32_t header_overhead(Transport t) {
  return kEthLen + kIpLen + (t == Transport::TCP ? kTcpLen : kUdpLen);
}

// --- scenario spec -----------------------------------------------------------

std::uint64_t ScenarioSpec::total() const {
  return smartphone_browse + pad_browse + pc_download + tv_stream + upnp_http + console_browse + smart_light +
         smart_light_failed + smoke_alarm + iot_telemetry + dns + p2p;
}

void ScenarioSpec::validate() const {
  if (total() == 0) throw TrafficGenError("scenario has no sessions");
  if (total() > 200'000) throw TrafficGenError("scenario exceeds 200000 sessions");
  if (!(time_span > 0)) throw TrafficGenError("time_span must be > 0");
  if (resource_fraction_pct + ad_fraction_pct > 100)
    throw TrafficGenError("resource_fraction_pct + ad_fraction_pct must not exceed 100");
}

namespace {

#define SHGW_SCENARIO_FIELDS(X)                                                                         \
  X(smartphone_browse) X(pad_browse) X(pc_download) X(tv_stream) X(upnp_http) X(console_browse)         \
  X(smart_light) X(smart_light_failed) X(smoke_alarm) X(iot_telemetry) X(dns) X(p2p) X(ad_fraction_pct) \
  X(resource_fraction_pct)

}  // namespace

ScenarioSpec ScenarioSpec::parse(std::string_view json_text) {
  using nlohmann::json;
  ScenarioSpec s;
  try {
    const json j = json::parse(json_text);
    if (!j.is_object()) throw TrafficGenError("scenario must be a JSON object");
    for (const auto& [key, v] : j.items()) {
#define SHGW_READ(name)                    \
  if (key == #name) {                      \
    s.name = v.get<std::uint64_t>();       \
    continue;                              \
  }
      SHGW_SCENARIO_FIELDS(SHGW_READ)
#undef SHGW_READ
      if (key == "time_span") {
        s.time_span = v.get<double>();
      } else if (key == "start") {
        s.start = from_seconds(v.get<double>());
      } else if (key != "comment") {
        throw TrafficGenError("unknown scenario key '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw TrafficGenError(std::string("invalid scenario: ") + e.what());
  }
  s.validate();
  return s;
}

ScenarioSpec ScenarioSpec::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw TrafficGenError("cannot open scenario " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

ScenarioSpec ScenarioSpec::default_mix(std::uint64_t sessions) {
  ScenarioSpec s;
  auto part = [&](std::uint64_t pct) { return std::max<std::uint64_t>(1, sessions * pct / 100); };
  s.pad_browse = part(12);
  s.pc_download = part(8);
  s.tv_stream = part(8);
  s.upnp_http = part(2);
  s.console_browse = part(4);
  s.smart_light = part(5);
  s.smart_light_failed = part(1);
  s.smoke_alarm = part(4);
  s.dns = part(12);
  s.p2p = part(6);
  const std::uint64_t used = s.total();
  s.smartphone_browse = sessions > used ? sessions - used : 1;
  s.time_span = std::max(60.0, static_cast<double>(sessions) / 10.0);
  return s;
}

ScenarioSpec ScenarioSpec::encrypted_pair(std::uint64_t per_class) {
  ScenarioSpec s;
  s.smoke_alarm = per_class;
  s.iot_telemetry = per_class;
  s.time_span = std::max(60.0, static_cast<double>(per_class));
  return s;
}

ScenarioSpec ScenarioSpec::cleansing_mix(std::uint64_t sessions, std::uint64_t blocked_pct) {
  ScenarioSpec s;
  s.pad_browse = sessions / 4;
  s.smartphone_browse = sessions - s.pad_browse;
  s.resource_fraction_pct = blocked_pct;
  s.ad_fraction_pct = 0;
  s.time_span = std::max(60.0, static_cast<double>(sessions) / 10.0);
  return s;
}

Corpus generate_corpus(const ScenarioSpec& spec, std::uint64_t seed) { return Generator(spec, seed).run(); }

void write_pcap(const std::vector<RawFrame>& frames, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw TrafficGenError("cannot create " + path.string());
  PcapWriter writer(out);
  for (const auto& f : frames) writer.write(f.ts, f.data, f.orig_len);
  out.flush();
  if (!out) throw TrafficGenError("write failed for " + path.string());
}

void write_truth(const std::vector<ShdrRecord>& truth, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw TrafficGenError("cannot create " + path.string());
  for (const auto& r : truth) out << encode(r);
  out.flush();
  if (!out) throw TrafficGenError("write failed for " + path.string());
}

std::vector<ShdrRecord> read_truth(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw TrafficGenError("cannot open truth file " + path.string());
  std::vector<ShdrRecord> out;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(decode(line));
    } catch (const ShdrError& e) {
      throw TrafficGenError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

SessionId session_id(const ShdrRecord& r) {
  return {r.src_ip, r.src_port, r.dst_ip, r.dst_port, r.transport, r.ts_first};
}

std::optional<RawFrame> VectorFrameSource::next_frame() {
  if (next_ >= frames_.size()) return std::nullopt;
  return std::move(frames_[next_++]);
}

// --- load generator ----------------------------------------------------------

namespace {

struct LoadTarget {
  Server server;
  const char* path;
};

const LoadTarget kLoadTargets[] = {
    {kTaobao, "/search?q=phone"}, {kTaobaoItem, "/item/5521.htm"}, {kYouku, "/v_show/id_881.html"},
    {kWeibo, "/u/1024"},          {kBaidu, "/s?wd=news"},          {kPsn, "/game/4417"},
};

const char* const kLoadAgents[] = {
    "Mozilla/5.0 (iPhone; CPU iPhone OS 14_4 like Mac OS X) AppleWebKit/605.1.15 (KHTML, like Gecko) Mobile/15E148",
    "Mozilla/5.0 (Linux; Android 10; HUAWEI P30) AppleWebKit/537.36 (KHTML, like Gecko) Mobile Safari/537.36",
    "Mozilla/5.0 (Windows NT 10.0; Win64; x64) AppleWebKit/537.36 (KHTML, like Gecko) Chrome/91.0 Safari/537.36",
    "Mozilla/5.0 (iPad; CPU OS 13_2 like Mac OS X) AppleWebKit/605.1.15 (KHTML, like Gecko) Mobile/15E148",
};

constexpr int kLoadSteps = 7;

}  // namespace

LoadFrameSource::LoadFrameSource(LoadSpec spec) : spec_(spec) {
  if (!(spec_.rate > 0) || !(spec_.duration > 0)) throw TrafficGenError("load rate and duration must be > 0");
  total_ = static_cast<std::uint64_t>(std::llround(spec_.rate * spec_.duration));
  period_us_ = 1e6 / spec_.rate;
}

Micros LoadFrameSource::arrival_of(std::uint64_t index) const {
  const double jitter = static_cast<double>(mix64(spec_.seed ^ (index * 0x2545f4914f6cdd1dULL)) >> 11) * 0x1.0p-53;
  return spec_.start + static_cast<Micros>((static_cast<double>(index) + jitter) * period_us_);
}

void LoadFrameSource::start_session(std::uint64_t index) {
  heap_.push({arrival_of(index), index, 0, arrival_of(index)});
  ++started_;
}

RawFrame LoadFrameSource::frame_for(const Pending& p) const {
  using namespace tcp_flag;
  const std::uint64_t h = mix64(spec_.seed * 0x9e3779b97f4a7c15ULL + p.session);
  const LoadTarget& target = kLoadTargets[h % std::size(kLoadTargets)];
  const std::uint32_t client = static_cast<std::uint32_t>(p.session % 1000);
  FrameSpec up;
  up.src_mac = mac(0x3c, 0x22, 0xfb, 0x20, static_cast<std::uint8_t>(client >> 8), static_cast<std::uint8_t>(client));
  up.dst_mac = kGatewayMac;
  up.src_ip = Ipv4(10, 20, static_cast<std::uint8_t>(client / 250), static_cast<std::uint8_t>(client % 250 + 1));
  up.dst_ip = target.server.ip;
  up.src_port = static_cast<std::uint16_t>(20000 + (p.session / 1000) % 40000);
  up.dst_port = 80;
  up.transport = Transport::TCP;
  const auto cseq = static_cast<std::uint32_t>(h);
  const auto sseq = static_cast<std::uint32_t>(h >> 32);
  const std::string request = "GET " + std::string(target.path) + " HTTP/1.1\r\nHost: " + target.server.host +
                              "\r\nUser-Agent: " + kLoadAgents[(h >> 8) % std::size(kLoadAgents)] +
                              "\r\nAccept: */*\r\n\r\n";
  const std::uint32_t resp_len = 400 + static_cast<std::uint32_t>((h >> 16) % 1000);
  const auto req_len = static_cast<std::uint32_t>(request.size());
  FrameSpec f = up;
  auto reverse = [&] {
    std::swap(f.src_mac, f.dst_mac);
    std::swap(f.src_ip, f.dst_ip);
    std::swap(f.src_port, f.dst_port);
  };
  switch (p.step) {
    case 0:
      f.tcp_flags = kSyn;
      f.seq = cseq;
      break;
    case 1:
      reverse();
      f.tcp_flags = kSyn | kAck;
      f.seq = sseq;
      f.ack = cseq + 1;
      break;
    case 2:
      f.tcp_flags = kAck;
      f.seq = cseq + 1;
      f.ack = sseq + 1;
      break;
    case 3:
      f.tcp_flags = kPsh | kAck;
      f.seq = cseq + 1;
      f.ack = sseq + 1;
      f.payload = request;
      break;
    case 4:
      reverse();
      f.tcp_flags = kPsh | kAck;
      f.seq = sseq + 1;
      f.ack = cseq + 1 + req_len;
      f.payload.assign(resp_len, 'x');
      break;
    case 5:
      f.tcp_flags = kFin | kAck;
      f.seq = cseq + 1 + req_len;
      f.ack = sseq + 1 + resp_len;
      break;
    default:
      reverse();
      f.tcp_flags = kFin | kAck;
      f.seq = sseq + 1 + resp_len;
      f.ack = cseq + 2 + req_len;
      break;
  }
  RawFrame out;
  out.data = build_frame(f);
  out.orig_len = static_cast<std::uint32_t>(out.data.size());
  return out;
}

std::optional<RawFrame> LoadFrameSource::next_frame() {
  while (started_ < total_ && (heap_.empty() || arrival_of(started_) <= heap_.top().ts)) start_session(started_);
  if (heap_.empty()) return std::nullopt;
  const Pending p = heap_.top();
  heap_.pop();
  if (p.step + 1 < kLoadSteps) {
    const std::uint64_t h = mix64(spec_.seed ^ (p.session * 0xd6e8feb86659fd93ULL));
    const Micros rtt = 2'000 + static_cast<Micros>(h % 38'000);
    static constexpr Micros kGapAfter[kLoadSteps] = {-1, 50, 50, -1, 1'000, -1, 0};
    Micros gap = kGapAfter[p.step];
    if (gap < 0) gap = rtt;
    heap_.push({p.ts + gap, p.session, p.step + 1, p.start});
  }
  RawFrame f = frame_for(p);
  f.ts = std::max(p.ts, last_ts_ + 1);
  last_ts_ = f.ts;
  return f;
}

}  // namespace shgw
