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

#include "shgw/policy.hpp"

#include <charconv>

#include "json.hpp"

namespace shgw {

namespace {

using nlohmann::json;

[[noreturn]] void fail(PolicyError::Code code, const std::string& what) {
  throw PolicyError(code, "policy: " + what);
}

bool host_matches(std::string_view host, std::string_view suffix) {
  if (suffix.empty() || host.size() < suffix.size()) return false;
  if (!iequals(host.substr(host.size() - suffix.size()), suffix)) return false;
  return host.size() == suffix.size() || host[host.size() - suffix.size() - 1] == '.';
}

std::vector<std::string> string_list(const json& v, const char* key) {
  if (!v.is_array()) fail(PolicyError::Code::SyntaxError, std::string(key) + " must be a list");
  std::vector<std::string> out;
  for (const auto& e : v) {
    if (!e.is_string()) fail(PolicyError::Code::SyntaxError, std::string(key) + " entries must be strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

ProbeTarget parse_target(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos || colon == 0) {
    fail(PolicyError::Code::SyntaxError, "probe target must be host:port, got '" + text + "'");
  }
  unsigned port = 0;
  const char* b = text.data() + colon + 1;
  const char* e = text.data() + text.size();
  auto [p, ec] = std::from_chars(b, e, port);
  if (ec != std::errc{} || p != e || port == 0 || port > 65535)
    fail(PolicyError::Code::RangeViolation, "probe port out of range in '" + text + "'");
  return {text.substr(0, colon), static_cast<std::uint16_t>(port)};
}

}  // namespace

std::string_view to_string(ReportMethod m) { return m == ReportMethod::Put ? "PUT" : "POST"; }

PolicyDocument default_policy() { return PolicyDocument{}; }

PolicyDocument parse_policy(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(PolicyError::Code::SyntaxError, e.what());
  }
  if (!j.is_object()) fail(PolicyError::Code::SyntaxError, "document must be an object");

  PolicyDocument p = default_policy();
  bool has_version = false;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "version") {
        if (!v.is_number_integer()) fail(PolicyError::Code::SyntaxError, "version must be an integer");
        p.version = v.get<std::int64_t>();
        has_version = true;
      } else if (key == "cleanse_ext_blocklist") {
        p.cleanse_ext_blocklist.clear();
        for (auto& ext : string_list(v, "cleanse_ext_blocklist")) p.cleanse_ext_blocklist.push_back(to_lower(ext));
      } else if (key == "cleanse_host_blocklist") {
        p.cleanse_host_blocklist = string_list(v, "cleanse_host_blocklist");
      } else if (key == "cleanse_ad_patterns") {
        p.cleanse_ad_patterns = string_list(v, "cleanse_ad_patterns");
      } else if (key == "delay_sampling_rate") {
        if (!v.is_number()) fail(PolicyError::Code::SyntaxError, "delay_sampling_rate must be a number");
        p.delay_sampling_rate = v.get<double>();
      } else if (key == "batch_interval") {
        if (!v.is_number()) fail(PolicyError::Code::SyntaxError, "batch_interval must be a number");
        p.batch_interval = v.get<double>();
      } else if (key == "batch_max_records") {
        if (!v.is_number_integer()) fail(PolicyError::Code::SyntaxError, "batch_max_records must be an integer");
        if (v.get<std::int64_t>() <= 0) fail(PolicyError::Code::RangeViolation, "batch_max_records must be > 0");
        p.batch_max_records = v.get<std::uint64_t>();
      } else if (key == "realtime_alert_apps") {
        p.realtime_alert_apps.clear();
        for (auto& app : string_list(v, "realtime_alert_apps")) p.realtime_alert_apps.insert(app);
      } else if (key == "report_method") {
        if (!v.is_string()) fail(PolicyError::Code::SyntaxError, "report_method must be a string");
        const auto m = v.get<std::string>();
        if (iequals(m, "POST")) p.report_method = ReportMethod::Post;
        else if (iequals(m, "PUT")) p.report_method = ReportMethod::Put;
        else fail(PolicyError::Code::RangeViolation, "report_method must be POST or PUT");
      } else if (key == "probe_allowlist") {
        p.probe_allowlist.clear();
        for (auto& t : string_list(v, "probe_allowlist")) p.probe_allowlist.push_back(parse_target(t));
      } else if (key == "signature_db_version_required") {
        if (!v.is_number_integer()) fail(PolicyError::Code::SyntaxError, "signature_db_version_required must be an integer");
        p.signature_db_version_required = v.get<std::int64_t>();
      } else {
        fail(PolicyError::Code::UnknownKey, "unknown key '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    fail(PolicyError::Code::SyntaxError, e.what());
  }
  if (!has_version) fail(PolicyError::Code::SyntaxError, "missing required key 'version'");
  if (p.version < 1) fail(PolicyError::Code::RangeViolation, "version must be >= 1");
  if (!(p.delay_sampling_rate >= 0.0 && p.delay_sampling_rate <= 1.0))
    fail(PolicyError::Code::RangeViolation, "delay_sampling_rate must be within [0, 1]");
  if (!(p.batch_interval > 0.0)) fail(PolicyError::Code::RangeViolation, "batch_interval must be > 0");
  return p;
}

std::string PolicyDocument::to_json() const {
  nlohmann::ordered_json j;
  j["version"] = version;
  j["cleanse_ext_blocklist"] = cleanse_ext_blocklist;
  j["cleanse_host_blocklist"] = cleanse_host_blocklist;
  j["cleanse_ad_patterns"] = cleanse_ad_patterns;
  j["delay_sampling_rate"] = delay_sampling_rate;
  j["batch_interval"] = batch_interval;
  j["batch_max_records"] = batch_max_records;
  j["realtime_alert_apps"] = std::vector<std::string>(realtime_alert_apps.begin(), realtime_alert_apps.end());
  j["report_method"] = to_string(report_method);
  std::vector<std::string> targets;
  for (const auto& t : probe_allowlist) targets.push_back(t.host + ":" + std::to_string(t.port));
  j["probe_allowlist"] = targets;
  j["signature_db_version_required"] = signature_db_version_required;
  return j.dump(2);
}

FilterDecision evaluate_filter(const PolicyDocument& p, const ShdrRecord& r) {
  if (r.record_type == RecordType::Alert || !r.http) return {};
  const std::string ext = url_extension(r.http->url);
  if (!ext.empty()) {
    for (const auto& blocked : p.cleanse_ext_blocklist) {
      if (ext == blocked) return {false, "ext:" + blocked};
    }
  }
  const std::string_view host = std::string_view(r.http->host).substr(0, r.http->host.find(':'));
  for (const auto& suffix : p.cleanse_host_blocklist) {
    if (host_matches(host, suffix)) return {false, "host:" + suffix};
  }
  for (const auto& pattern : p.cleanse_ad_patterns) {
    if (!pattern.empty() && r.http->url.find(pattern) != std::string::npos) return {false, "ad:" + pattern};
  }
  return {};
}

const PolicyDocument& apply_update(const PolicyDocument& current, const PolicyDocument& incoming) {
  if (incoming.version <= current.version) {
    throw PolicyError(PolicyError::Code::StaleVersion,
                      "policy v" + std::to_string(incoming.version) + " is not newer than active v" +
                          std::to_string(current.version));
  }
  return incoming;
}

PolicyEngine::PolicyEngine(PolicyDocument initial)
    : active_(std::make_shared<const PolicyDocument>(std::move(initial))) {}

std::shared_ptr<const PolicyDocument> PolicyEngine::snapshot() const {
  std::lock_guard lock(mu_);
  return active_;
}

bool PolicyEngine::update(PolicyDocument incoming) {
  std::lock_guard lock(mu_);
  try {
    apply_update(*active_, incoming);
  } catch (const PolicyError&) {
    ++stale_;
    return false;
  }
  active_ = std::make_shared<const PolicyDocument>(std::move(incoming));
  local_minor_ = 0;
  return true;
}

void PolicyEngine::adjust_locally(const std::function<void(PolicyDocument&)>& mutate) {
  std::lock_guard lock(mu_);
  PolicyDocument next = *active_;
  const std::int64_t version = next.version;
  mutate(next);
  next.version = version;
  active_ = std::make_shared<const PolicyDocument>(std::move(next));
  ++local_minor_;
}

std::uint64_t PolicyEngine::local_minor() const {
  std::lock_guard lock(mu_);
  return local_minor_;
}

std::uint64_t PolicyEngine::stale_updates() const {
  std::lock_guard lock(mu_);
  return stale_;
}

}  // namespace shgw
