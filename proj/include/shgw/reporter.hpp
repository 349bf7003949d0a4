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

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "shgw/policy.hpp"
#include "shgw/shdr.hpp"

namespace shgw {

inline constexpr std::string_view kBatchPath = "/shdr/batch";
inline constexpr std::string_view kRealtimePath = "/shdr/realtime";
inline constexpr std::string_view kFilenameHeader = "X-Shdr-Filename";

struct UploadResult {
  int status = 0;  // 0 when no HTTP response was received
  std::string error;
  bool ok() const { return status >= 200 && status < 300; }
};

/// Delivery channel to the collector. Implementations must be callable from
/// one thread at a time.
class UploadTransport {
 public:
  virtual ~UploadTransport() = default;
  virtual UploadResult send(ReportMethod method, std::string_view path, std::string_view body,
                            std::string_view filename, std::chrono::milliseconds timeout) = 0;
};

/// HTTP transport over cpp-httplib. `base_url` is `http://host:port`.
std::unique_ptr<UploadTransport> make_http_transport(const std::string& base_url);

using SteadyTime = std::chrono::steady_clock::time_point;

struct ReporterConfig {
  std::size_t batch_capacity = 10'000;
  std::size_t realtime_capacity = 256;
  std::filesystem::path spool_dir = "shdr-out";  // holds pending/ and archive/
  std::string gateway_id = "gw0";
  std::chrono::milliseconds backoff_base{2000};
  std::chrono::milliseconds backoff_cap{5 * 60 * 1000};
  double backoff_jitter = 0.1;  // +/- fraction of the nominal delay
  int realtime_attempts = 3;
  std::chrono::milliseconds realtime_timeout{1000};
  std::chrono::milliseconds batch_timeout{5000};
  std::uint64_t seed = 1;
};

enum class SubmitOutcome { Accepted, DroppedOldest };

struct ReporterStats {
  std::uint64_t submitted = 0;
  std::uint64_t delivered = 0;  // records acknowledged by the collector or archived offline
  std::uint64_t dropped = 0;
  std::uint64_t dropped_realtime = 0;
  std::uint64_t persist_failures = 0;
  std::uint64_t sent_batches = 0;
  std::uint64_t sent_realtime = 0;
  std::uint64_t spilled = 0;
  std::uint64_t retries = 0;
  std::uint64_t batch_files = 0;
  std::uint64_t buffered = 0;       // records still in memory
  std::uint64_t pending_files = 0;  // files awaiting upload
  std::uint64_t pending_records = 0;
};

struct RetryState {
  std::uint32_t attempts = 0;
  std::optional<SteadyTime> next_retry;
};

/// Batch and real-time SHDR delivery. `submit` and `seal_batch` run on the
/// classification stage and never block on the network; `pump` (or the
/// worker started by `start`) performs all uploads.
class Reporter {
 public:
  /// Without a transport the reporter is offline: sealed batches go straight
  /// to the archive directory and ALERT records are written into batches.
  Reporter(ReporterConfig cfg, std::unique_ptr<UploadTransport> transport);
  ~Reporter();

  Reporter(const Reporter&) = delete;
  Reporter& operator=(const Reporter&) = delete;

  /// Encodes `r` and queues it. Never blocks on the network.
  SubmitOutcome submit(const ShdrRecord& r);

  /// Writes the current batch buffer to a pending file named after
  /// `window_start`. Returns the path, or nothing for an empty buffer.
  std::optional<std::filesystem::path> seal_batch(Micros window_start);

  /// One delivery round: drains realtime records first, then uploads pending
  /// files if the batch endpoint is not backing off.
  void pump(SteadyTime now);

  void set_method(ReportMethod m);

  /// Runs pump on a background thread whenever work arrives or a retry is due.
  void start();
  /// Stops the worker; undelivered files stay in the pending directory.
  void stop();
  /// Waits until the realtime queue and pending files are empty or the
  /// deadline passes. Pumps inline when no worker is running. Returns true
  /// when nothing is left to deliver.
  bool wait_idle(std::chrono::milliseconds timeout);

  ReporterStats stats() const;
  RetryState batch_retry() const;
  std::vector<ShdrRecord> buffered_records() const;
  std::size_t approx_bytes() const;

  std::filesystem::path pending_dir() const { return cfg_.spool_dir / "pending"; }
  std::filesystem::path archive_dir() const { return cfg_.spool_dir / "archive"; }

 private:
  struct Entry {
    std::string line;  // encoded record
    RecordType type = RecordType::Session;
    std::size_t footprint() const { return sizeof(Entry) + line.capacity(); }
  };
  struct PendingFile {
    std::filesystem::path path;
    std::uint64_t records = 0;
  };

  void drop_oldest_batch_locked();
  std::filesystem::path unique_name_locked(Micros window_start);
  std::chrono::milliseconds backoff_delay_locked(std::uint32_t attempts);
  void recover_pending();
  void send_realtime_round();
  void upload_pending_round(SteadyTime now);
  bool has_due_work_locked(SteadyTime now) const;
  void worker_loop();

  ReporterConfig cfg_;
  std::unique_ptr<UploadTransport> transport_;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Entry> batch_;
  std::deque<Entry> realtime_;
  std::deque<PendingFile> pending_;
  std::map<Micros, std::uint32_t> names_used_;
  RetryState retry_;
  ReporterStats stats_;
  ReportMethod method_ = ReportMethod::Post;
  std::mt19937_64 rng_;
  std::size_t buffered_bytes_ = 0;
  bool in_flight_ = false;

  std::mutex send_mu_;  // serializes transport use between pump callers
  std::thread worker_;
  bool stopping_ = false;
};

}  // namespace shgw
