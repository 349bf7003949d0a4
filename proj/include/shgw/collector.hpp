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

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "shgw/policy.hpp"
#include "shgw/shdr.hpp"

namespace shgw {

class CollectorError : public std::runtime_error {
 public:
  enum class Code { BadHeader, MalformedLine, UnknownDimension, StaleVersion, IoError };
  CollectorError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

enum class IngestOutcome { New, Duplicate };

struct IngestResult {
  IngestOutcome outcome = IngestOutcome::New;
  std::uint64_t appended = 0;
  std::uint64_t malformed = 0;
};

struct BatchMeta {
  std::string filename;
  std::string gateway_id;
  Micros window_start = 0;
  Micros arrival = 0;  // wall clock, microseconds since epoch
  std::uint64_t records = 0;
  std::uint64_t malformed = 0;
};

struct AlertEntry {
  Micros arrival = 0;
  ShdrRecord record;
};

struct GatewayStatus {
  Micros last_seen = 0;
  std::int64_t policy_version_acked = 0;
};

struct AggregateRow {
  std::string label;
  std::uint64_t sessions = 0;
  std::uint64_t bytes = 0;
  double share = 0;  // fraction of sessions in range
};

/// Dimensions accepted by aggregate().
const std::vector<std::string>& aggregate_dimensions();

/// Label of `r` under `dimension`; throws CollectorError(UnknownDimension).
std::string dimension_label(const ShdrRecord& r, std::string_view dimension);

/// Renders rows as `label,sessions,bytes,share` CSV with a header line.
std::string aggregate_csv(const std::vector<AggregateRow>& rows);

/// Mock cloud state. With a non-empty directory every mutation is appended
/// to files there and replayed on construction; otherwise it is memory-only.
class CollectorStore {
 public:
  explicit CollectorStore(std::filesystem::path dir = {});

  /// Throws CollectorError(BadHeader) when the first line is not a batch header.
  IngestResult ingest_batch(const std::string& filename, std::string_view body);
  /// Throws CollectorError(MalformedLine); nothing is stored on failure.
  RecordType ingest_realtime(std::string_view body);

  /// Latest policy when newer than `have_version`; records the gateway ack.
  std::optional<PolicyDocument> serve_policy(const std::string& gateway_id, std::int64_t have_version);
  /// Appends an operator policy; throws CollectorError(StaleVersion) unless
  /// its version exceeds the latest stored one.
  void push_policy(const PolicyDocument& doc);
  std::optional<PolicyDocument> latest_policy() const;

  /// Groups SESSION and ALERT records with ts_first in [from, to).
  std::vector<AggregateRow> aggregate(std::string_view dimension, Micros from, Micros to) const;

  std::size_t record_count() const;
  std::vector<ShdrRecord> records() const;
  std::vector<AlertEntry> alerts() const;
  std::vector<BatchMeta> batches() const;
  std::optional<GatewayStatus> gateway_status(const std::string& gateway_id) const;
  std::uint64_t duplicate_uploads() const;
  std::string status_json() const;

 private:
  void replay();
  void append_line(const std::filesystem::path& file, std::string_view line);
  std::filesystem::path record_log_for(Micros arrival) const;
  void append_records_locked(const std::vector<ShdrRecord>& recs, Micros arrival);

  std::filesystem::path dir_;
  mutable std::shared_mutex mu_;
  std::vector<ShdrRecord> records_;
  std::map<std::string, BatchMeta> batches_;
  std::vector<AlertEntry> alerts_;
  std::vector<PolicyDocument> policies_;
  std::map<std::string, GatewayStatus> gateways_;
  std::uint64_t duplicates_ = 0;
};

/// HTTP front end for a CollectorStore.
class CollectorServer {
 public:
  explicit CollectorServer(CollectorStore& store);
  ~CollectorServer();

  CollectorServer(const CollectorServer&) = delete;
  CollectorServer& operator=(const CollectorServer&) = delete;

  /// Binds and serves on a background thread. Port 0 picks a free port.
  /// Returns the bound port; throws CollectorError(IoError) on bind failure.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  /// Serves on the calling thread until stop().
  void run(const std::string& host, int port);
  void stop();
  /// Test hook: the next `n` requests to /shdr/* answer 503.
  void fail_next(int n) { fail_next_ = n; }
  std::string base_url() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  CollectorStore& store_;
  std::thread thread_;
  std::atomic<int> fail_next_{0};
  int port_ = 0;
  std::string host_;
};

struct PolicyFetch {
  int status = 0;
  std::optional<PolicyDocument> document;  // set on 200
  std::string error;
};

/// Gateway side of the policy loop: GET /policy with have_version.
PolicyFetch fetch_policy(const std::string& base_url, const std::string& gateway_id, std::int64_t have_version);

/// Operator side: uploads a policy document. Returns the HTTP status (0 when
/// unreachable) and fills `error` with the response body on failure.
int push_policy(const std::string& base_url, std::string_view document, std::string* error = nullptr);

}  // namespace shgw
