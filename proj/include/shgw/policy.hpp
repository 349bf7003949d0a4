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
#include <functional>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "shgw/shdr.hpp"

namespace shgw {

enum class ReportMethod { Post, Put };

std::string_view to_string(ReportMethod m);

struct ProbeTarget {
  std::string host;
  std::uint16_t port = 0;
  bool operator==(const ProbeTarget&) const = default;
};

/// Cloud-issued cleansing, sampling and reporting configuration.
struct PolicyDocument {
  std::int64_t version = 0;
  std::vector<std::string> cleanse_ext_blocklist{"js", "css", "png", "jpg", "jpeg", "gif", "ico"};
  std::vector<std::string> cleanse_host_blocklist;
  std::vector<std::string> cleanse_ad_patterns;
  double delay_sampling_rate = 1.0;
  double batch_interval = 60.0;  // seconds
  std::uint64_t batch_max_records = 5000;
  AlertSet realtime_alert_apps{"smoke_alarm"};
  ReportMethod report_method = ReportMethod::Post;
  std::vector<ProbeTarget> probe_allowlist;
  std::int64_t signature_db_version_required = 0;

  std::string to_json() const;
  bool operator==(const PolicyDocument&) const = default;
};

/// Policy in force before the first cloud contact.
PolicyDocument default_policy();

class PolicyError : public std::runtime_error {
 public:
  enum class Code { SyntaxError, UnknownKey, RangeViolation, StaleVersion };
  PolicyError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

/// Validates a JSON policy document; absent keys take default values and
/// unknown keys are rejected.
PolicyDocument parse_policy(std::string_view text);

struct FilterDecision {
  bool keep = true;
  std::string reason;  // rule id for DROP: "ext:<ext>", "host:<suffix>" or "ad:<pattern>"
};

FilterDecision evaluate_filter(const PolicyDocument& p, const ShdrRecord& r);

/// Returns `incoming` when its version is newer; otherwise throws
/// PolicyError(StaleVersion) and the caller keeps `current`.
const PolicyDocument& apply_update(const PolicyDocument& current, const PolicyDocument& incoming);

/// Holds the active policy as an immutable snapshot. Readers take one
/// snapshot per record; updates swap the pointer atomically.
class PolicyEngine {
 public:
  explicit PolicyEngine(PolicyDocument initial = default_policy());

  std::shared_ptr<const PolicyDocument> snapshot() const;

  /// Installs `incoming` when its version is newer. Returns false (and counts
  /// a stale event) otherwise.
  bool update(PolicyDocument incoming);

  /// Gateway-side adjustment: mutates a copy of the active policy and bumps
  /// the local minor counter. The cloud version number is unchanged, so any
  /// newer cloud policy still replaces it.
  void adjust_locally(const std::function<void(PolicyDocument&)>& mutate);

  std::int64_t version() const { return snapshot()->version; }
  std::uint64_t local_minor() const;
  std::uint64_t stale_updates() const;

 private:
  mutable std::mutex mu_;
  std::shared_ptr<const PolicyDocument> active_;
  std::uint64_t local_minor_ = 0;
  std::uint64_t stale_ = 0;
};

}  // namespace shgw
