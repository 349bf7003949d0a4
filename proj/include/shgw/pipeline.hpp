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
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "shgw/capture.hpp"
#include "shgw/decision_tree.hpp"
#include "shgw/flow.hpp"
#include "shgw/mda.hpp"
#include "shgw/policy.hpp"
#include "shgw/qos.hpp"
#include "shgw/reporter.hpp"
#include "shgw/shdr.hpp"

namespace shgw {

/// Fixed-capacity blocking FIFO. push blocks while full; pop blocks while
/// empty and returns nothing once closed and drained.
template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity == 0 ? 1 : capacity) {}

  /// Returns false when the queue was closed.
  bool push(T item) {
    std::unique_lock lock(mu_);
    if (items_.size() >= capacity_) ++full_waits_;
    not_full_.wait(lock, [&] { return items_.size() < capacity_ || closed_; });
    if (closed_) return false;
    items_.push_back(std::move(item));
    high_water_ = std::max(high_water_, items_.size());
    not_empty_.notify_one();
    return true;
  }

  std::optional<T> pop() {
    std::unique_lock lock(mu_);
    not_empty_.wait(lock, [&] { return !items_.empty() || closed_; });
    if (items_.empty()) return std::nullopt;
    T item = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return item;
  }

  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    not_full_.notify_all();
    not_empty_.notify_all();
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return items_.size();
  }
  std::size_t capacity() const { return capacity_; }
  std::size_t high_water() const {
    std::lock_guard lock(mu_);
    return high_water_;
  }
  std::uint64_t full_waits() const {
    std::lock_guard lock(mu_);
    return full_waits_;
  }

 private:
  const std::size_t capacity_;
  mutable std::mutex mu_;
  std::condition_variable not_full_;
  std::condition_variable not_empty_;
  std::deque<T> items_;
  std::size_t high_water_ = 0;
  std::uint64_t full_waits_ = 0;
  bool closed_ = false;
};

struct PipelineConfig {
  std::string gateway_id = "gw0";
  std::size_t queue_packets = 4096;  // capture -> processing capacity, in packets
  std::size_t chunk_packets = 64;    // packets per hand-off
  FlowTableConfig flow;
  Micros idle_timeout = kDefaultIdleTimeout;
  Micros expire_interval = 200'000;          // capture time between idle sweeps
  QosConfig qos;
  bool emit_qos_records = true;
  ReporterConfig reporter;
  std::string collector_url;  // empty: offline
  std::chrono::milliseconds policy_poll_interval{30'000};
  std::chrono::milliseconds drain_timeout{30'000};
  bool pace = false;  // release packets at capture-clock speed
  std::chrono::milliseconds sample_interval{6'000};
  std::shared_ptr<const DecisionTreeModel> model;
  bool keep_records = false;  // retain submitted records and QoS snapshots in the report
  /// Called on the processing thread for every built session record, before
  /// the cleansing decision is applied.
  std::function<void(const ShdrRecord&, const FilterDecision&)> on_record;
};

struct StageCounters {
  std::uint64_t frames = 0;
  std::uint64_t packets = 0;
  std::uint64_t sessions = 0;
  std::uint64_t http_sessions = 0;
  std::uint64_t records_built = 0;
  std::uint64_t records_cleansed = 0;
  std::uint64_t records_submitted = 0;
  std::uint64_t alerts = 0;
  std::uint64_t qos_records = 0;
  std::uint64_t batches_sealed = 0;
  std::uint64_t flow_evictions = 0;
  std::uint64_t queue_high_water = 0;  // packets
  std::uint64_t backpressure_waits = 0;
  std::uint64_t policy_polls = 0;
  std::uint64_t policy_updates = 0;
  std::uint64_t policy_poll_errors = 0;
};

struct ResourceSample {
  double wall_seconds = 0;
  std::uint64_t sessions = 0;
  std::size_t state_bytes = 0;
  std::size_t rss_bytes = 0;
  double cpu_seconds = 0;
};

struct LagStats {
  Micros p50 = 0;
  Micros p99 = 0;
  Micros max = 0;
};

struct VersionSpan {
  std::uint64_t records = 0;
  SteadyTime first_emit{};
  SteadyTime last_emit{};
};

struct PipelineReport {
  StageCounters counters;
  CaptureCounters capture;
  ReporterStats reporter;
  double wall_seconds = 0;
  Micros capture_span = 0;  // last - first packet timestamp
  std::size_t peak_state_bytes = 0;
  std::size_t baseline_rss_bytes = 0;
  std::size_t peak_rss_bytes = 0;
  std::optional<LagStats> lag;  // paced runs only
  std::vector<ResourceSample> samples;
  std::map<std::int64_t, VersionSpan> versions;  // policy version -> records stamped with it
  std::vector<ShdrRecord> records;               // keep_records only
  std::vector<QosSnapshot> qos;                  // keep_records only
};

/// Resident set size of this process, from /proc.
std::size_t resident_bytes();
double cpu_seconds();

/// The gateway engine: capture -> flow -> classify -> qos -> policy -> report.
class Gateway {
 public:
  Gateway(PipelineConfig cfg, const SignatureDb& db, PolicyEngine& policy);
  ~Gateway();

  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  /// Runs to completion over `source`, then seals and (when online) delivers
  /// everything that is left.
  PipelineReport run(std::unique_ptr<FrameSource> source);

  /// Polls the collector once; returns true when a newer policy was adopted.
  bool poll_policy_once();

 private:
  struct Processor;

  void poll_loop();

  PipelineConfig cfg_;
  const SignatureDb& db_;
  PolicyEngine& policy_;
  std::unique_ptr<Reporter> reporter_;

  std::mutex poll_mu_;
  std::condition_variable poll_cv_;
  bool poll_stop_ = false;
  StageCounters poll_counters_;
};

}  // namespace shgw
