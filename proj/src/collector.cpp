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

#include "shgw/collector.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>

#include "httplib.h"
#include "json.hpp"
#include "shgw/reporter.hpp"

namespace shgw {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

Micros wall_micros() {
  return std::chrono::duration_cast<std::chrono::microseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

bool safe_filename(const std::string& name) {
  return !name.empty() && name.size() <= 255 && name != "." && name != ".." &&
         name.find_first_of("/\\") == std::string::npos && name.find('\0') == std::string::npos;
}

std::string strip_newline(std::string s) {
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
  return s;
}

std::string compact_policy(const PolicyDocument& doc) { return json::parse(doc.to_json()).dump(); }

std::vector<std::string> read_lines(const fs::path& path) {
  std::vector<std::string> lines;
  std::ifstream in(path);
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) lines.push_back(std::move(line));
  }
  return lines;
}

std::optional<std::int64_t> parse_int(std::string_view s) {
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace

const std::vector<std::string>& aggregate_dimensions() {
  static const std::vector<std::string> dims{"device_type", "device_brand", "application", "service",
                                             "location",    "provider",     "subscriber"};
  return dims;
}

std::string dimension_label(const ShdrRecord& r, std::string_view dimension) {
  const auto& l = r.labels;
  std::string label;
  if (dimension == "device_type") label = to_string(l.device_type);
  else if (dimension == "device_brand") label = l.device_brand;
  else if (dimension == "application") label = l.application;
  else if (dimension == "service") label = to_string(l.service);
  else if (dimension == "location") label = l.location.subnet_tag;
  else if (dimension == "provider") label = l.provider;
  else if (dimension == "subscriber") label = l.subscriber.subscriber_id;
  else throw CollectorError(CollectorError::Code::UnknownDimension, "unknown dimension '" + std::string(dimension) + "'");
  return label.empty() ? std::string(kUnknownApp) : label;
}

std::string aggregate_csv(const std::vector<AggregateRow>& rows) {
  std::ostringstream out;
  out << "label,sessions,bytes,share\n";
  out << std::setprecision(17);
  for (const auto& row : rows) {
    std::string label = row.label;
    if (label.find_first_of(",\"\n") != std::string::npos) {
      std::string quoted = "\"";
      for (char c : label) quoted += c == '"' ? std::string("\"\"") : std::string(1, c);
      label = quoted + "\"";
    }
    out << label << ',' << row.sessions << ',' << row.bytes << ',' << row.share << '\n';
  }
  return out.str();
}

// --- store -----------------------------------------------------------------

CollectorStore::CollectorStore(fs::path dir) : dir_(std::move(dir)) {
  if (dir_.empty()) return;
  std::error_code ec;
  fs::create_directories(dir_ / "batches", ec);
  if (ec) throw CollectorError(CollectorError::Code::IoError, "cannot create " + dir_.string() + ": " + ec.message());
  replay();
}

void CollectorStore::append_line(const fs::path& file, std::string_view line) {
  std::ofstream out(file, std::ios::app | std::ios::binary);
  out << line;
  if (line.empty() || line.back() != '\n') out << '\n';
  out.flush();
  if (!out) throw CollectorError(CollectorError::Code::IoError, "append failed: " + file.string());
}

fs::path CollectorStore::record_log_for(Micros arrival) const {
  const std::time_t secs = static_cast<std::time_t>(arrival / kMicrosPerSecond);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "records-%Y%m%d.log", &tm);
  return dir_ / buf;
}

void CollectorStore::replay() {
  std::vector<fs::path> logs;
  for (const auto& e : fs::directory_iterator(dir_)) {
    const auto name = e.path().filename().string();
    if (name.rfind("records-", 0) == 0 && e.path().extension() == ".log") logs.push_back(e.path());
  }
  std::sort(logs.begin(), logs.end());
  for (const auto& log : logs) {
    for (const auto& line : read_lines(log)) {
      try {
        records_.push_back(decode(line));
      } catch (const ShdrError& err) {
        std::cerr << "collector: skipping bad stored line in " << log << ": " << err.what() << "\n";
      }
    }
  }
  for (const auto& line : read_lines(dir_ / "batches.log")) {
    try {
      const json j = json::parse(line);
      BatchMeta m{j.at("filename"),   j.at("gateway_id"), j.at("window_start"),
                  j.at("arrival"),    j.at("records"),    j.at("malformed")};
      auto& gw = gateways_[m.gateway_id];
      gw.last_seen = std::max(gw.last_seen, m.arrival);
      batches_[m.filename] = std::move(m);
    } catch (const json::exception&) {
      std::cerr << "collector: skipping bad batch index line\n";
    }
  }
  for (const auto& line : read_lines(dir_ / "alerts.log")) {
    const auto sp = line.find(' ');
    const auto arrival = parse_int(std::string_view(line).substr(0, sp));
    if (sp == std::string::npos || !arrival) continue;
    try {
      alerts_.push_back({*arrival, decode(std::string_view(line).substr(sp + 1))});
    } catch (const ShdrError&) {
    }
  }
  for (const auto& line : read_lines(dir_ / "policies.log")) {
    try {
      policies_.push_back(parse_policy(line));
    } catch (const PolicyError& e) {
      std::cerr << "collector: skipping stored policy: " << e.what() << "\n";
    }
  }
}

void CollectorStore::append_records_locked(const std::vector<ShdrRecord>& recs, Micros arrival) {
  if (!dir_.empty() && !recs.empty()) {
    std::string blob;
    for (const auto& r : recs) blob += encode(r);
    append_line(record_log_for(arrival), blob);
  }
  records_.insert(records_.end(), recs.begin(), recs.end());
}

IngestResult CollectorStore::ingest_batch(const std::string& filename, std::string_view body) {
  if (!safe_filename(filename))
    throw CollectorError(CollectorError::Code::BadHeader, "invalid batch filename '" + filename + "'");
  BatchContents contents;
  try {
    contents = read_batch(body);
  } catch (const ShdrError& e) {
    throw CollectorError(CollectorError::Code::BadHeader, e.what());
  }
  std::unique_lock lock(mu_);
  if (batches_.count(filename)) {
    ++duplicates_;
    return {IngestOutcome::Duplicate, 0, 0};
  }
  const Micros arrival = wall_micros();
  BatchMeta meta{filename,
                 contents.header.gateway_id,
                 contents.header.window_start,
                 arrival,
                 contents.records.size(),
                 contents.stats.malformed + contents.stats.schema_violations};
  if (!dir_.empty()) {
    const fs::path final_path = dir_ / "batches" / filename;
    {
      std::ofstream out(final_path, std::ios::binary | std::ios::trunc);
      out.write(body.data(), static_cast<std::streamsize>(body.size()));
      if (!out) throw CollectorError(CollectorError::Code::IoError, "cannot store " + final_path.string());
    }
    append_records_locked(contents.records, arrival);
    json idx = {{"filename", meta.filename}, {"gateway_id", meta.gateway_id},
                {"window_start", meta.window_start}, {"arrival", meta.arrival},
                {"records", meta.records}, {"malformed", meta.malformed}};
    append_line(dir_ / "batches.log", idx.dump());
  } else {
    append_records_locked(contents.records, arrival);
  }
  auto& gw = gateways_[meta.gateway_id];
  gw.last_seen = std::max(gw.last_seen, arrival);
  batches_[filename] = meta;
  return {IngestOutcome::New, meta.records, meta.malformed};
}

RecordType CollectorStore::ingest_realtime(std::string_view body) {
  while (!body.empty() && (body.back() == '\n' || body.back() == '\r')) body.remove_suffix(1);
  if (body.empty() || body.find('\n') != std::string_view::npos)
    throw CollectorError(CollectorError::Code::MalformedLine, "realtime body must be exactly one record");
  ShdrRecord rec;
  try {
    rec = decode(body);
  } catch (const ShdrError& e) {
    throw CollectorError(CollectorError::Code::MalformedLine, e.what());
  }
  std::unique_lock lock(mu_);
  Micros arrival = wall_micros();
  if (!alerts_.empty()) arrival = std::max(arrival, alerts_.back().arrival);
  append_records_locked({rec}, arrival);
  if (rec.record_type == RecordType::Alert) {
    if (!dir_.empty()) append_line(dir_ / "alerts.log", std::to_string(arrival) + " " + strip_newline(encode(rec)));
    alerts_.push_back({arrival, rec});
  }
  auto& gw = gateways_[rec.gateway_id];
  gw.last_seen = std::max(gw.last_seen, arrival);
  return rec.record_type;
}

std::optional<PolicyDocument> CollectorStore::serve_policy(const std::string& gateway_id, std::int64_t have_version) {
  std::unique_lock lock(mu_);
  auto& gw = gateways_[gateway_id];
  gw.last_seen = std::max(gw.last_seen, wall_micros());
  if (policies_.empty() || policies_.back().version <= have_version) {
    gw.policy_version_acked = have_version;
    return std::nullopt;
  }
  gw.policy_version_acked = policies_.back().version;
  return policies_.back();
}

void CollectorStore::push_policy(const PolicyDocument& doc) {
  std::unique_lock lock(mu_);
  if (!policies_.empty() && doc.version <= policies_.back().version) {
    throw CollectorError(CollectorError::Code::StaleVersion,
                         "policy v" + std::to_string(doc.version) + " is not newer than stored v" +
                             std::to_string(policies_.back().version));
  }
  if (!dir_.empty()) append_line(dir_ / "policies.log", compact_policy(doc));
  policies_.push_back(doc);
}

std::optional<PolicyDocument> CollectorStore::latest_policy() const {
  std::shared_lock lock(mu_);
  if (policies_.empty()) return std::nullopt;
  return policies_.back();
}

std::vector<AggregateRow> CollectorStore::aggregate(std::string_view dimension, Micros from, Micros to) const {
  if (std::find(aggregate_dimensions().begin(), aggregate_dimensions().end(), dimension) ==
      aggregate_dimensions().end()) {
    throw CollectorError(CollectorError::Code::UnknownDimension, "unknown dimension '" + std::string(dimension) + "'");
  }
  std::map<std::string, AggregateRow> groups;
  std::uint64_t total = 0;
  {
    std::shared_lock lock(mu_);
    for (const auto& r : records_) {
      if (r.record_type == RecordType::Qos || r.ts_first < from || r.ts_first >= to) continue;
      auto& row = groups[dimension_label(r, dimension)];
      ++row.sessions;
      row.bytes += r.byte_count_up + r.byte_count_down;
      ++total;
    }
  }
  std::vector<AggregateRow> rows;
  rows.reserve(groups.size());
  for (auto& [label, row] : groups) {
    row.label = label;
    row.share = static_cast<double>(row.sessions) / static_cast<double>(total);
    rows.push_back(std::move(row));
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const AggregateRow& a, const AggregateRow& b) { return a.sessions > b.sessions; });
  return rows;
}

std::size_t CollectorStore::record_count() const {
  std::shared_lock lock(mu_);
  return records_.size();
}

std::vector<ShdrRecord> CollectorStore::records() const {
  std::shared_lock lock(mu_);
  return records_;
}

std::vector<AlertEntry> CollectorStore::alerts() const {
  std::shared_lock lock(mu_);
  return alerts_;
}

std::vector<BatchMeta> CollectorStore::batches() const {
  std::shared_lock lock(mu_);
  std::vector<BatchMeta> out;
  for (const auto& [name, meta] : batches_) out.push_back(meta);
  std::sort(out.begin(), out.end(), [](const BatchMeta& a, const BatchMeta& b) { return a.arrival < b.arrival; });
  return out;
}

std::optional<GatewayStatus> CollectorStore::gateway_status(const std::string& gateway_id) const {
  std::shared_lock lock(mu_);
  auto it = gateways_.find(gateway_id);
  if (it == gateways_.end()) return std::nullopt;
  return it->second;
}

std::uint64_t CollectorStore::duplicate_uploads() const {
  std::shared_lock lock(mu_);
  return duplicates_;
}

std::string CollectorStore::status_json() const {
  std::shared_lock lock(mu_);
  nlohmann::ordered_json j;
  j["records"] = records_.size();
  j["batches"] = batches_.size();
  j["alerts"] = alerts_.size();
  j["duplicate_uploads"] = duplicates_;
  j["policy_version"] = policies_.empty() ? 0 : policies_.back().version;
  auto& gws = j["gateways"] = nlohmann::ordered_json::object();
  for (const auto& [id, gw] : gateways_) {
    gws[id] = {{"last_seen", to_seconds(gw.last_seen)}, {"policy_version_acked", gw.policy_version_acked}};
  }
  return j.dump(2) + "\n";
}

// --- server ----------------------------------------------------------------

struct CollectorServer::Impl {
  httplib::Server svr;
};

CollectorServer::CollectorServer(CollectorStore& store) : impl_(std::make_unique<Impl>()), store_(store) {
  auto& svr = impl_->svr;
  auto injected_failure = [this](httplib::Response& res) {
    int n = fail_next_.load();
    while (n > 0 && !fail_next_.compare_exchange_weak(n, n - 1)) {
    }
    if (n <= 0) return false;
    res.status = 503;
    res.set_content("injected failure\n", "text/plain");
    return true;
  };

  auto batch = [this, injected_failure](const httplib::Request& req, httplib::Response& res) {
    if (injected_failure(res)) return;
    const std::string filename = req.get_header_value(std::string(kFilenameHeader));
    try {
      const auto result = store_.ingest_batch(filename, req.body);
      json j = {{"outcome", result.outcome == IngestOutcome::New ? "new" : "duplicate"},
                {"appended", result.appended},
                {"malformed", result.malformed}};
      res.set_content(j.dump() + "\n", "application/json");
    } catch (const CollectorError& e) {
      res.status = e.code() == CollectorError::Code::IoError ? 500 : 400;
      res.set_content(std::string(e.what()) + "\n", "text/plain");
    }
  };
  auto realtime = [this, injected_failure](const httplib::Request& req, httplib::Response& res) {
    if (injected_failure(res)) return;
    try {
      const RecordType t = store_.ingest_realtime(req.body);
      res.set_content(std::string("{\"accepted\":\"") + std::string(to_string(t)) + "\"}\n", "application/json");
    } catch (const CollectorError& e) {
      res.status = e.code() == CollectorError::Code::IoError ? 500 : 400;
      res.set_content(std::string(e.what()) + "\n", "text/plain");
    }
  };
  auto put_policy = [this](const httplib::Request& req, httplib::Response& res) {
    try {
      const PolicyDocument doc = parse_policy(req.body);
      store_.push_policy(doc);
      res.set_header("X-Policy-Version", std::to_string(doc.version));
      res.set_content("{\"version\":" + std::to_string(doc.version) + "}\n", "application/json");
    } catch (const PolicyError& e) {
      res.status = 400;
      res.set_content(std::string(e.what()) + "\n", "text/plain");
    } catch (const CollectorError& e) {
      res.status = e.code() == CollectorError::Code::StaleVersion ? 409 : 500;
      res.set_content(std::string(e.what()) + "\n", "text/plain");
    }
  };

  svr.Post(std::string(kBatchPath), batch);
  svr.Put(std::string(kBatchPath), batch);
  svr.Post(std::string(kRealtimePath), realtime);
  svr.Put(std::string(kRealtimePath), realtime);
  svr.Post("/policy", put_policy);
  svr.Put("/policy", put_policy);

  svr.Get("/policy", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string gateway = req.has_param("gateway_id") ? req.get_param_value("gateway_id") : "";
    std::string have_text = req.has_param("have_version") ? req.get_param_value("have_version")
                                                          : req.get_header_value("X-Policy-Version");
    if (have_text.empty()) have_text = "0";
    const auto have = parse_int(have_text);
    if (!have) {
      res.status = 400;
      res.set_content("have_version must be an integer\n", "text/plain");
      return;
    }
    const auto doc = store_.serve_policy(gateway, *have);
    if (!doc) {
      res.status = 304;
      res.set_header("X-Policy-Version", std::to_string(*have));
      return;
    }
    res.set_header("X-Policy-Version", std::to_string(doc->version));
    res.set_content(doc->to_json() + "\n", "application/json");
  });

  svr.Get("/aggregate", [this](const httplib::Request& req, httplib::Response& res) {
    auto seconds_param = [&](const char* name, double fallback) {
      return req.has_param(name) ? std::stod(req.get_param_value(name)) : fallback;
    };
    try {
      const double from = seconds_param("from", -1e12);
      const double to = seconds_param("to", 1e12);
      const auto rows = store_.aggregate(req.get_param_value("dimension"), from_seconds(from), from_seconds(to));
      res.set_content(aggregate_csv(rows), "text/csv");
    } catch (const CollectorError& e) {
      res.status = 400;
      res.set_content(std::string(e.what()) + "\n", "text/plain");
    } catch (const std::logic_error&) {
      res.status = 400;
      res.set_content("from/to must be numbers of seconds\n", "text/plain");
    }
  });

  svr.Get("/status", [this](const httplib::Request&, httplib::Response& res) {
    res.set_content(store_.status_json(), "application/json");
  });
}

CollectorServer::~CollectorServer() { stop(); }

int CollectorServer::start(const std::string& host, int port) {
  auto& svr = impl_->svr;
  host_ = host;
  port_ = port == 0 ? svr.bind_to_any_port(host) : (svr.bind_to_port(host, port) ? port : -1);
  if (port_ <= 0) throw CollectorError(CollectorError::Code::IoError, "cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([&svr] { svr.listen_after_bind(); });
  svr.wait_until_ready();
  return port_;
}

void CollectorServer::run(const std::string& host, int port) {
  host_ = host;
  port_ = port;
  if (!impl_->svr.listen(host, port))
    throw CollectorError(CollectorError::Code::IoError, "cannot listen on " + host + ":" + std::to_string(port));
}

void CollectorServer::stop() {
  impl_->svr.stop();
  if (thread_.joinable()) thread_.join();
}

std::string CollectorServer::base_url() const { return "http://" + host_ + ":" + std::to_string(port_); }

// --- clients ---------------------------------------------------------------

PolicyFetch fetch_policy(const std::string& base_url, const std::string& gateway_id, std::int64_t have_version) {
  httplib::Client cli(base_url);
  cli.set_connection_timeout(std::chrono::seconds(2));
  cli.set_read_timeout(std::chrono::seconds(5));
  const httplib::Params params{{"gateway_id", gateway_id}, {"have_version", std::to_string(have_version)}};
  const httplib::Headers headers{{"X-Policy-Version", std::to_string(have_version)}};
  auto res = cli.Get("/policy", params, headers);
  PolicyFetch out;
  if (!res) {
    out.error = httplib::to_string(res.error());
    return out;
  }
  out.status = res->status;
  if (res->status == 200) {
    try {
      out.document = parse_policy(res->body);
    } catch (const PolicyError& e) {
      out.error = e.what();
    }
  } else if (res->status != 304) {
    out.error = res->body;
  }
  return out;
}

int push_policy(const std::string& base_url, std::string_view document, std::string* error) {
  httplib::Client cli(base_url);
  cli.set_connection_timeout(std::chrono::seconds(2));
  auto res = cli.Put("/policy", document.data(), document.size(), "application/json");
  if (!res) {
    if (error) *error = httplib::to_string(res.error());
    return 0;
  }
  if (error && res->status >= 300) *error = res->body;
  return res->status;
}

}  // namespace shgw
