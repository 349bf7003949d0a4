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

// Independent recomputations shared by unit tests and the acceptance run.
// None of these call into the code paths they are used to check.

#include <algorithm>
#include <cctype>
#include <map>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include "shgw/decision_tree.hpp"
#include "shgw/http.hpp"
#include "shgw/mda.hpp"
#include "shgw/policy.hpp"
#include "shgw/shdr.hpp"

namespace testkit {

inline std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

/// Single-pass cleansing filter: the DROP reason, or "" for KEEP.
inline std::string reference_filter(const shgw::PolicyDocument& p, const shgw::ShdrRecord& r) {
  if (r.record_type == shgw::RecordType::Alert || !r.http) return "";
  const std::string& url = r.http->url;
  std::string path;
  for (char c : url) {
    if (c == '?' || c == '#') break;
    path += c;
  }
  const auto slash = path.find_last_of('/');
  const std::string last = path.substr(slash == std::string::npos ? 0 : slash + 1);
  std::string ext;
  if (const auto dot = last.find_last_of('.'); dot != std::string::npos) ext = lower(last.substr(dot + 1));
  for (const auto& e : p.cleanse_ext_blocklist)
    if (!ext.empty() && e == ext) return "ext:" + e;
  std::string host = lower(r.http->host);
  if (const auto colon = host.find(':'); colon != std::string::npos) host.resize(colon);
  for (const auto& s : p.cleanse_host_blocklist) {
    const std::string suffix = lower(s);
    if (host == suffix) return "host:" + s;
    if (host.size() > suffix.size() && host.compare(host.size() - suffix.size(), suffix.size(), suffix) == 0 &&
        host[host.size() - suffix.size() - 1] == '.')
      return "host:" + s;
  }
  for (const auto& a : p.cleanse_ad_patterns)
    if (!a.empty() && url.find(a) != std::string::npos) return "ad:" + a;
  return "";
}

inline double gini_of(const std::map<std::string, std::size_t>& counts, std::size_t n) {
  if (n == 0) return 0;
  double sum_sq = 0;
  for (const auto& [label, c] : counts) {
    const double p = static_cast<double>(c) / static_cast<double>(n);
    sum_sq += p * p;
  }
  return 1.0 - sum_sq;
}

struct OracleSplit {
  int feature = -1;  // -1: the node should be a leaf
  double threshold = 0;
};

/// Exhaustive split search: every feature, every midpoint between adjacent
/// distinct values, counts recomputed from scratch for each candidate.
inline OracleSplit oracle_split(const std::vector<shgw::TrainingSample>& rows, const shgw::TreeParams& p,
                                std::size_t depth) {
  std::map<std::string, std::size_t> all;
  for (const auto& r : rows) ++all[r.label];
  const double parent = gini_of(all, rows.size());
  if (depth >= p.max_depth || parent == 0 || rows.size() < 2 * p.min_leaf) return {};
  OracleSplit best;
  double best_impurity = 0;
  for (std::size_t f = 0; f < shgw::SessionFeatures::kCount; ++f) {
    std::set<double> values;
    for (const auto& r : rows) values.insert(r.features.as_array()[f]);
    const std::vector<double> sorted(values.begin(), values.end());
    for (std::size_t k = 0; k + 1 < sorted.size(); ++k) {
      const double t = sorted[k] + (sorted[k + 1] - sorted[k]) / 2;
      std::map<std::string, std::size_t> left, right;
      std::size_t nl = 0, nr = 0;
      for (const auto& r : rows) {
        if (r.features.as_array()[f] <= t) {
          ++left[r.label];
          ++nl;
        } else {
          ++right[r.label];
          ++nr;
        }
      }
      if (nl < p.min_leaf || nr < p.min_leaf) continue;
      const double imp = (static_cast<double>(nl) * gini_of(left, nl) + static_cast<double>(nr) * gini_of(right, nr)) /
                         static_cast<double>(rows.size());
      if (best.feature < 0 || imp < best_impurity) {
        best = {static_cast<int>(f), t};
        best_impurity = imp;
      }
    }
  }
  if (best.feature >= 0 && !(best_impurity < parent - 1e-12)) return {};
  return best;
}

inline bool host_matches(std::string host, const std::string& suffix) {
  if (const auto colon = host.find(':'); colon != std::string::npos) host.resize(colon);
  return host == suffix ||
         (host.size() > suffix.size() && host.ends_with(suffix) && host[host.size() - suffix.size() - 1] == '.');
}

/// Names of signature rules that no truth record exercises with the label
/// the rule assigns. Empty means full coverage.
inline std::vector<std::string> uncovered_rules(const shgw::SignatureDb& db,
                                                const std::vector<shgw::ShdrRecord>& truth) {
  using namespace shgw;
  std::vector<std::string> missing;
  auto any = [&](auto pred) { return std::any_of(truth.begin(), truth.end(), pred); };
  for (const auto& [key, service] : db.port_map) {
    if (!any([&](const ShdrRecord& t) {
          return t.transport == key.first && (t.dst_port == key.second || t.src_port == key.second) &&
                 t.labels.service == service;
        }))
      missing.push_back("port " + std::to_string(key.second));
  }
  for (const auto& [ext, app] : db.ext_map) {
    if (!any([&](const ShdrRecord& t) {
          return t.http && url_extension(t.http->url) == ext && t.labels.application == app;
        }))
      missing.push_back("extension " + ext);
  }
  for (const auto& rule : db.host_patterns) {
    std::set<std::string> actions;
    bool seen = false;
    for (const auto& t : truth) {
      if (!t.http || !host_matches(t.http->host, rule.suffix)) continue;
      seen |= t.labels.application == rule.application;
      actions.insert(t.labels.action);
    }
    if (!seen) missing.push_back("host " + rule.suffix);
    for (const auto& a : rule.actions)
      if (!actions.count(a.action)) missing.push_back("action " + a.action);
  }
  for (const auto& set : db.ip_sets) {
    if (!any([&](const ShdrRecord& t) {
          return t.labels.application == set.application &&
                 std::any_of(set.members.begin(), set.members.end(), [&](const Cidr& m) { return m.contains(t.dst_ip); });
        }))
      missing.push_back("address set " + set.name);
  }
  for (std::size_t i = 0; i < db.ua_patterns.size(); ++i) {
    const bool seen = any([&](const ShdrRecord& t) {
      if (!t.http) return false;
      for (std::size_t j = 0; j < db.ua_patterns.size(); ++j) {
        const auto& r = db.ua_patterns[j];
        const bool hit = r.kind == UaRule::Kind::Regex ? std::regex_match(t.http->user_agent, r.compiled)
                                                       : t.http->user_agent.find(r.pattern) != std::string::npos;
        if (hit) return j == i && t.labels.device_type == r.device_type;
      }
      return false;
    });
    if (!seen) missing.push_back("user agent " + db.ua_patterns[i].pattern);
  }
  for (const auto& [oui, rule] : db.mac_oui) {
    if (!any([&](const ShdrRecord& t) {
          return t.src_mac[0] == oui[0] && t.src_mac[1] == oui[1] && t.src_mac[2] == oui[2];
        }))
      missing.push_back("vendor prefix " + std::to_string(oui[0]) + ":" + std::to_string(oui[1]) + ":" +
                        std::to_string(oui[2]));
  }
  for (const auto& rule : db.fixed_len_rules) {
    if (!any([&](const ShdrRecord& t) { return t.labels.application == rule.application; }))
      missing.push_back("fixed length " + rule.application);
  }
  for (const auto& s : db.context.subnets) {
    if (!any([&](const ShdrRecord& t) { return s.subnet.contains(t.src_ip); })) missing.push_back("subnet " + s.tag);
  }
  return missing;
}

}  // namespace testkit
