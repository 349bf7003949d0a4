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

#include "shgw/shdr.hpp"

#include <cmath>
#include <fstream>
#include <initializer_list>

#include "json.hpp"

namespace shgw {

namespace {

using ojson = nlohmann::ordered_json;
using nlohmann::json;

[[noreturn]] void violation(const std::string& what) {
  throw ShdrError(ShdrError::Code::SchemaViolation, "schema violation: " + what);
}

std::string dump_line(const ojson& j) {
  return j.dump(-1, ' ', false, json::error_handler_t::replace) + "\n";
}

// Strict accessor over one JSON object that remembers which keys it used.
class Fields {
 public:
  Fields(const json& obj, std::string_view where) : obj_(obj), where_(where) {
    if (!obj_.is_object()) violation(std::string(where_) + " is not an object");
  }

  const json& at(const char* key) {
    auto it = obj_.find(key);
    if (it == obj_.end()) violation("missing " + std::string(where_) + "." + key);
    ++used_;
    return *it;
  }
  const json* find(const char* key) {
    auto it = obj_.find(key);
    if (it == obj_.end()) return nullptr;
    ++used_;
    return &*it;
  }
  std::string str(const char* key) {
    const json& v = at(key);
    if (!v.is_string()) violation(std::string(where_) + "." + key + " is not a string");
    return v.get<std::string>();
  }
  std::uint64_t u64(const char* key) {
    const json& v = at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
      violation(std::string(where_) + "." + key + " is not a non-negative integer");
    return v.get<std::uint64_t>();
  }
  std::int64_t i64(const char* key) {
    const json& v = at(key);
    if (!v.is_number_integer()) violation(std::string(where_) + "." + key + " is not an integer");
    return v.get<std::int64_t>();
  }
  double num(const char* key) {
    const json& v = at(key);
    if (!v.is_number()) violation(std::string(where_) + "." + key + " is not a number");
    return v.get<double>();
  }
  Micros seconds(const char* key) { return from_seconds(num(key)); }

  std::uint64_t unknown() const { return obj_.size() - used_; }

 private:
  const json& obj_;
  std::string_view where_;
  std::size_t used_ = 0;
};

template <typename T, typename Parse>
T parse_enum(const std::string& text, Parse parse, const char* what) {
  auto v = parse(text);
  if (!v) violation(std::string("bad ") + what + " '" + text + "'");
  return *v;
}

ojson encode_labels(const AwarenessLabels& l) {
  ojson j;
  j["service"] = to_string(l.service);
  j["application"] = l.application;
  j["action"] = l.action;
  j["device_type"] = to_string(l.device_type);
  j["device_brand"] = l.device_brand;
  j["device_os"] = l.device_os;
  j["provider"] = l.provider;
  j["location"] = {{"subnet_tag", l.location.subnet_tag},
                   {"dhcp_segment", l.location.dhcp_segment},
                   {"access_point", l.location.access_point}};
  j["subscriber"] = {{"id", l.subscriber.subscriber_id},
                     {"derivation", to_string(l.subscriber.derivation)}};
  j["confidence"] = {{"service", l.confidence.service},
                     {"application", l.confidence.application},
                     {"device", l.confidence.device},
                     {"provider", l.confidence.provider},
                     {"location", l.confidence.location},
                     {"subscriber", l.confidence.subscriber}};
  return j;
}

AwarenessLabels decode_labels(const json& j, DecodeStats& stats) {
  Fields f(j, "labels");
  AwarenessLabels l;
  l.service = parse_enum<ServiceType>(f.str("service"), parse_service, "service");
  l.application = f.str("application");
  l.action = f.str("action");
  l.device_type = parse_enum<DeviceType>(f.str("device_type"), parse_device_type, "device_type");
  l.device_brand = f.str("device_brand");
  l.device_os = f.str("device_os");
  l.provider = f.str("provider");
  {
    Fields loc(f.at("location"), "labels.location");
    l.location.subnet_tag = loc.str("subnet_tag");
    l.location.dhcp_segment = loc.str("dhcp_segment");
    l.location.access_point = loc.str("access_point");
    stats.unknown_fields += loc.unknown();
  }
  {
    Fields sub(f.at("subscriber"), "labels.subscriber");
    l.subscriber.subscriber_id = sub.str("id");
    l.subscriber.derivation =
        parse_enum<SubscriberDerivation>(sub.str("derivation"), parse_derivation, "derivation");
    stats.unknown_fields += sub.unknown();
  }
  {
    Fields c(f.at("confidence"), "labels.confidence");
    l.confidence.service = c.num("service");
    l.confidence.application = c.num("application");
    l.confidence.device = c.num("device");
    l.confidence.provider = c.num("provider");
    l.confidence.location = c.num("location");
    l.confidence.subscriber = c.num("subscriber");
    stats.unknown_fields += c.unknown();
  }
  stats.unknown_fields += f.unknown();
  return l;
}

ojson encode_samples(const std::vector<std::pair<std::string, Micros>>& samples) {
  ojson arr = ojson::array();
  for (const auto& [app, d] : samples) arr.push_back(ojson::array({app, to_seconds(d)}));
  return arr;
}

std::vector<std::pair<std::string, Micros>> decode_samples(const json& j) {
  if (!j.is_array()) violation("samples must be an array");
  std::vector<std::pair<std::string, Micros>> out;
  for (const auto& e : j) {
    if (!e.is_array() || e.size() != 2 || !e[0].is_string() || !e[1].is_number())
      violation("sample entries must be [application, seconds]");
    out.emplace_back(e[0].get<std::string>(), from_seconds(e[1].get<double>()));
  }
  return out;
}

ojson encode_qos(const QosSnapshot& q) {
  ojson j;
  j["window_start"] = to_seconds(q.window_start);
  j["window_end"] = to_seconds(q.window_end);
  j["total_bytes"] = q.total_bytes;
  j["bandwidth_bps"] = q.total_bandwidth_bps();
  ojson buckets = ojson::array();
  for (const auto& [key, bytes] : q.bytes_by_dimension) {
    buckets.push_back({{"dimension", key.first},
                       {"label", key.second},
                       {"bytes", bytes},
                       {"bps", q.bandwidth_bps(bytes)}});
  }
  j["bytes"] = std::move(buckets);
  j["concurrent_sessions"] = q.concurrent_sessions;
  j["delay_samples"] = encode_samples(q.delay_samples);
  j["handshake_delays"] = encode_samples(q.handshake_delays);
  j["connect_success"] = q.connect_success;
  j["connect_fail"] = q.connect_fail;
  ojson per_app = ojson::object();
  for (const auto& [app, c] : q.connect_by_application)
    per_app[app] = {{"attempts", c.attempts}, {"success", c.success}};
  j["connect_by_application"] = std::move(per_app);
  return j;
}

QosSnapshot decode_qos(const json& j, DecodeStats& stats) {
  Fields f(j, "qos");
  QosSnapshot q;
  q.window_start = f.seconds("window_start");
  q.window_end = f.seconds("window_end");
  if (q.window_end <= q.window_start) violation("qos window_end <= window_start");
  q.total_bytes = f.u64("total_bytes");
  f.find("bandwidth_bps");  // derived
  const json& buckets = f.at("bytes");
  if (!buckets.is_array()) violation("qos.bytes must be an array");
  for (const auto& b : buckets) {
    Fields bf(b, "qos.bytes[]");
    const std::string dim = bf.str("dimension");
    const std::string label = bf.str("label");
    q.bytes_by_dimension[{dim, label}] = bf.u64("bytes");
    bf.find("bps");
    stats.unknown_fields += bf.unknown();
  }
  q.concurrent_sessions = static_cast<std::uint32_t>(f.u64("concurrent_sessions"));
  q.delay_samples = decode_samples(f.at("delay_samples"));
  q.handshake_delays = decode_samples(f.at("handshake_delays"));
  q.connect_success = f.u64("connect_success");
  q.connect_fail = f.u64("connect_fail");
  const json& per_app = f.at("connect_by_application");
  if (!per_app.is_object()) violation("qos.connect_by_application must be an object");
  for (const auto& [app, c] : per_app.items()) {
    Fields cf(c, "qos.connect_by_application");
    q.connect_by_application[app] = {cf.u64("attempts"), cf.u64("success")};
    stats.unknown_fields += cf.unknown();
  }
  stats.unknown_fields += f.unknown();
  return q;
}

}  // namespace

std::string_view to_string(RecordType t) {
  switch (t) {
    case RecordType::Session: return "SESSION";
    case RecordType::Qos: return "QOS";
    case RecordType::Alert: return "ALERT";
  }
  return "SESSION";
}

std::optional<RecordType> parse_record_type(std::string_view s) {
  if (s == "SESSION") return RecordType::Session;
  if (s == "QOS") return RecordType::Qos;
  if (s == "ALERT") return RecordType::Alert;
  return std::nullopt;
}

ShdrRecord build_record(const Session& s, const AwarenessLabels& labels, std::int64_t policy_version,
                        const std::string& gateway_id, const AlertSet& alert_apps) {
  ShdrRecord r;
  r.record_type = alert_apps.contains(labels.application) ? RecordType::Alert : RecordType::Session;
  r.ts_first = s.first_ts;
  r.ts_last = s.last_ts;
  r.src_mac = s.initiator.mac;
  r.dst_mac = s.responder.mac;
  r.src_ip = s.initiator.ip;
  r.dst_ip = s.responder.ip;
  r.src_port = s.initiator.port;
  r.dst_port = s.responder.port;
  r.transport = s.transport;
  r.byte_count_up = s.byte_count_up;
  r.byte_count_down = s.byte_count_down;
  r.pkt_count_up = s.pkt_count_up;
  r.pkt_count_down = s.pkt_count_down;
  r.labels = labels;
  if (const HttpGetInfo* http = s.http_info(); http && http->complete) {
    r.http = HttpFields{http->url, http->host, http->user_agent, http->referer};
  }
  r.policy_version = policy_version;
  r.gateway_id = gateway_id;
  return r;
}

ShdrRecord build_qos_record(const QosSnapshot& snap, std::int64_t policy_version,
                            const std::string& gateway_id) {
  ShdrRecord r;
  r.record_type = RecordType::Qos;
  r.ts_first = snap.window_start;
  r.ts_last = snap.window_end;
  r.policy_version = policy_version;
  r.gateway_id = gateway_id;
  r.qos = snap;
  return r;
}

std::size_t approx_footprint(const ShdrRecord& r) {
  std::size_t n = sizeof(ShdrRecord);
  const auto& l = r.labels;
  for (const std::string* str : {&l.application, &l.action, &l.device_brand, &l.device_os, &l.provider,
                                 &l.location.subnet_tag, &l.location.dhcp_segment, &l.location.access_point,
                                 &l.subscriber.subscriber_id, &r.gateway_id}) {
    n += str->capacity();
  }
  if (r.http) n += r.http->url.capacity() + r.http->host.capacity() + r.http->user_agent.capacity() + r.http->referer.capacity();
  if (r.qos) n += sizeof(QosSnapshot) + r.qos->bytes_by_dimension.size() * 96 + r.qos->delay_samples.size() * 48;
  return n;
}

std::string encode(const ShdrRecord& r) {
  ojson j;
  j["type"] = to_string(r.record_type);
  j["ts_first"] = to_seconds(r.ts_first);
  j["ts_last"] = to_seconds(r.ts_last);
  j["src_mac"] = to_string(r.src_mac);
  j["dst_mac"] = to_string(r.dst_mac);
  j["src_ip"] = to_string(r.src_ip);
  j["dst_ip"] = to_string(r.dst_ip);
  j["src_port"] = r.src_port;
  j["dst_port"] = r.dst_port;
  j["transport"] = to_string(r.transport);
  j["bytes_up"] = r.byte_count_up;
  j["bytes_down"] = r.byte_count_down;
  j["pkts_up"] = r.pkt_count_up;
  j["pkts_down"] = r.pkt_count_down;
  j["labels"] = encode_labels(r.labels);
  if (r.http) {
    j["http"] = {{"url", r.http->url},
                 {"host", r.http->host},
                 {"user_agent", r.http->user_agent},
                 {"referer", r.http->referer}};
  }
  j["policy_version"] = r.policy_version;
  j["gateway_id"] = r.gateway_id;
  if (r.qos) j["qos"] = encode_qos(*r.qos);
  return dump_line(j);
}

ShdrRecord decode(std::string_view line, DecodeStats* stats) {
  DecodeStats local;
  DecodeStats& st = stats ? *stats : local;
  while (!line.empty() && (line.back() == '\n' || line.back() == '\r')) line.remove_suffix(1);
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ShdrError(ShdrError::Code::MalformedLine, std::string("malformed SHDR line: ") + e.what());
  }
  try {
    Fields f(j, "record");
    ShdrRecord r;
    r.record_type = parse_enum<RecordType>(f.str("type"), parse_record_type, "record type");
    r.ts_first = f.seconds("ts_first");
    r.ts_last = f.seconds("ts_last");
    if (r.ts_first > r.ts_last) violation("ts_first > ts_last");
    auto mac = [&](const char* key) {
      auto m = parse_mac(f.str(key));
      if (!m) violation(std::string("bad ") + key);
      return *m;
    };
    auto ip = [&](const char* key) {
      auto a = parse_ipv4(f.str(key));
      if (!a) violation(std::string("bad ") + key);
      return *a;
    };
    auto port = [&](const char* key) {
      const auto v = f.u64(key);
      if (v > 65535) violation(std::string(key) + " out of range");
      return static_cast<std::uint16_t>(v);
    };
    r.src_mac = mac("src_mac");
    r.dst_mac = mac("dst_mac");
    r.src_ip = ip("src_ip");
    r.dst_ip = ip("dst_ip");
    r.src_port = port("src_port");
    r.dst_port = port("dst_port");
    r.transport = parse_enum<Transport>(f.str("transport"), parse_transport, "transport");
    r.byte_count_up = f.u64("bytes_up");
    r.byte_count_down = f.u64("bytes_down");
    r.pkt_count_up = f.u64("pkts_up");
    r.pkt_count_down = f.u64("pkts_down");
    r.labels = decode_labels(f.at("labels"), st);
    if (const json* h = f.find("http")) {
      Fields hf(*h, "http");
      r.http = HttpFields{hf.str("url"), hf.str("host"), hf.str("user_agent"), hf.str("referer")};
      st.unknown_fields += hf.unknown();
    }
    r.policy_version = f.i64("policy_version");
    r.gateway_id = f.str("gateway_id");
    if (const json* q = f.find("qos")) r.qos = decode_qos(*q, st);
    if (r.record_type == RecordType::Qos && !r.qos) violation("QOS record without qos body");
    st.unknown_fields += f.unknown();
    return r;
  } catch (const json::exception& e) {
    violation(e.what());
  }
}

std::string encode_header(const BatchHeader& h) {
  ojson j;
  j["type"] = "HEADER";
  j["schema"] = h.schema;
  j["gateway_id"] = h.gateway_id;
  j["window_start"] = to_seconds(h.window_start);
  j["records"] = h.records;
  return dump_line(j);
}

BatchHeader decode_header(std::string_view line) {
  while (!line.empty() && (line.back() == '\n' || line.back() == '\r')) line.remove_suffix(1);
  try {
    const json j = json::parse(line);
    if (!j.is_object() || j.value("type", "") != "HEADER")
      throw ShdrError(ShdrError::Code::BadHeader, "first line is not a batch header");
    BatchHeader h;
    h.schema = j.at("schema").get<int>();
    h.gateway_id = j.at("gateway_id").get<std::string>();
    h.window_start = from_seconds(j.at("window_start").get<double>());
    h.records = j.at("records").get<std::uint64_t>();
    if (h.schema < 1 || h.schema > kShdrSchemaVersion)
      throw ShdrError(ShdrError::Code::BadHeader, "unsupported schema " + std::to_string(h.schema));
    if (h.gateway_id.empty()) throw ShdrError(ShdrError::Code::BadHeader, "empty gateway_id");
    return h;
  } catch (const json::exception& e) {
    throw ShdrError(ShdrError::Code::BadHeader, std::string("bad batch header: ") + e.what());
  }
}

std::string batch_file_name(std::string_view gateway_id, Micros window_start) {
  Micros epoch = window_start / kMicrosPerSecond;
  if (window_start < 0 && window_start % kMicrosPerSecond != 0) --epoch;
  return "shdr-" + std::string(gateway_id) + "-" + std::to_string(epoch) + ".log";
}

BatchSummary write_batch_lines(const std::vector<std::string>& lines, const BatchHeader& header,
                               const std::filesystem::path& path, const BatchWriteHooks& hooks) {
  if (lines.empty()) return {};
  namespace fs = std::filesystem;
  const fs::path tmp = path.string() + ".tmp";
  BatchSummary summary;
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ShdrError(ShdrError::Code::IoError, "cannot create " + tmp.string());
    BatchHeader h = header;
    h.records = lines.size();
    const std::string head = encode_header(h);
    out << head;
    summary.bytes += head.size();
    for (const auto& line : lines) {
      out << line;
      if (line.empty() || line.back() != '\n') out << '\n';
      summary.bytes += line.size();
    }
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw ShdrError(ShdrError::Code::IoError, "write failed for " + tmp.string());
    }
  }
  if (hooks.before_rename) hooks.before_rename(tmp);
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw ShdrError(ShdrError::Code::IoError, "rename to " + path.string() + " failed");
  }
  summary.count = lines.size();
  return summary;
}

BatchSummary write_batch_file(const std::vector<ShdrRecord>& records, const BatchHeader& header,
                              const std::filesystem::path& path, const BatchWriteHooks& hooks) {
  std::vector<std::string> lines;
  lines.reserve(records.size());
  for (const auto& r : records) lines.push_back(encode(r));
  return write_batch_lines(lines, header, path, hooks);
}

BatchContents read_batch(std::string_view body) {
  BatchContents out;
  const auto first_nl = body.find('\n');
  out.header = decode_header(body.substr(0, first_nl));
  if (first_nl == std::string_view::npos) return out;
  std::size_t pos = first_nl + 1;
  while (pos < body.size()) {
    auto nl = body.find('\n', pos);
    if (nl == std::string_view::npos) nl = body.size();
    const std::string_view line = body.substr(pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) continue;
    try {
      out.records.push_back(decode(line, &out.stats));
    } catch (const ShdrError& e) {
      if (e.code() == ShdrError::Code::MalformedLine) ++out.stats.malformed;
      else ++out.stats.schema_violations;
    }
  }
  return out;
}

}  // namespace shgw
