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

#include "shgw/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iostream>
#include <thread>

#include <sys/resource.h>
#include <unistd.h>

#include "shgw/collector.hpp"

namespace shgw {

namespace {

using Clock = std::chrono::steady_clock;

std::size_t packet_bytes(const Packet& p) { return sizeof(Packet) + p.payload.capacity(); }

/// Millisecond-bucket latency histogram with an exact maximum.
class LagHistogram {
 public:
  void add(Micros lag) {
    lag = std::max<Micros>(lag, 0);
    const std::size_t bucket = std::min<std::size_t>(static_cast<std::size_t>(lag / 1000), kBuckets - 1);
    ++counts_[bucket];
    ++total_;
    max_ = std::max(max_, lag);
  }
  bool empty() const { return total_ == 0; }
  /// Upper edge of the bucket holding the q-quantile, capped at the maximum.
  Micros quantile(double q) const {
    const auto rank = static_cast<std::uint64_t>(std::ceil(q * static_cast<double>(total_)));
    std::uint64_t seen = 0;
    for (std::size_t i = 0; i < kBuckets; ++i) {
      seen += counts_[i];
      if (seen >= std::max<std::uint64_t>(rank, 1)) return std::min<Micros>((static_cast<Micros>(i) + 1) * 1000, max_);
    }
    return max_;
  }
  Micros max() const { return max_; }

 private:
  static constexpr std::size_t kBuckets = 60'001;
  std::vector<std::uint64_t> counts_ = std::vector<std::uint64_t>(kBuckets, 0);
  std::uint64_t total_ = 0;
  Micros max_ = 0;
};

}  // namespace

std::size_t resident_bytes() {
  std::ifstream in("/proc/self/statm");
  std::size_t pages = 0, resident = 0;
  if (!(in >> pages >> resident)) return 0;
  return resident * static_cast<std::size_t>(sysconf(_SC_PAGESIZE));
}

double cpu_seconds() {
  rusage ru{};
  if (getrusage(RUSAGE_SELF, &ru) != 0) return 0;
  auto secs = [](const timeval& tv) { return static_cast<double>(tv.tv_sec) + static_cast<double>(tv.tv_usec) / 1e6; };
  return secs(ru.ru_utime) + secs(ru.ru_stime);
}

// Processing-thread state for one run.
struct Gateway::Processor {
  Gateway& gw;
  PipelineReport& report;
  FlowTable flows;
  QosMonitor qos;
  std::shared_ptr<const PolicyDocument> applied;  // last policy whose settings were pushed down
  std::optional<std::int64_t> batch_window;
  Micros batch_start = 0;
  std::uint64_t batch_records = 0;
  std::optional<Micros> last_expire;

  Processor(Gateway& g, PipelineReport& r) : gw(g), report(r), flows(g.cfg_.flow), qos(g.cfg_.qos) {}

  const PolicyDocument& policy() {
    auto snap = gw.policy_.snapshot();
    if (snap != applied) {
      qos.set_sampling_rate(snap->delay_sampling_rate);
      gw.reporter_->set_method(snap->report_method);
      applied = std::move(snap);
    }
    return *applied;
  }

  Micros batch_len() {
    return std::max<Micros>(1, static_cast<Micros>(policy().batch_interval * kMicrosPerSecond));
  }

  void seal() {
    if (!batch_window) return;
    if (gw.reporter_->seal_batch(batch_start)) ++report.counters.batches_sealed;
    batch_records = 0;
  }

  void advance_batch(Micros now) {
    const Micros len = batch_len();
    std::int64_t idx = now / len;
    if (now < 0 && now % len != 0) --idx;
    if (batch_window && idx == *batch_window) return;
    if (batch_window) seal();
    batch_window = idx;
    batch_start = idx * len;
  }

  void submit(const ShdrRecord& rec) {
    auto& span = report.versions[rec.policy_version];
    const SteadyTime now = Clock::now();
    if (span.records++ == 0) span.first_emit = now;
    span.last_emit = now;
    gw.reporter_->submit(rec);
    ++report.counters.records_submitted;
    if (gw.cfg_.keep_records) report.records.push_back(rec);
    const bool realtime = rec.record_type == RecordType::Alert && !gw.cfg_.collector_url.empty();
    if (!realtime && ++batch_records >= policy().batch_max_records) seal();
  }

  void on_session(const Session& s) {
    auto& c = report.counters;
    ++c.sessions;
    if (s.http_info()) ++c.http_sessions;
    const AwarenessLabels labels = classify_all(s, gw.db_, gw.cfg_.model.get());
    qos.on_session(s, labels);
    const PolicyDocument& p = policy();
    const ShdrRecord rec = build_record(s, labels, p.version, gw.cfg_.gateway_id, p.realtime_alert_apps);
    ++c.records_built;
    const FilterDecision decision = evaluate_filter(p, rec);
    if (gw.cfg_.on_record) gw.cfg_.on_record(rec, decision);
    if (!decision.keep) {
      ++c.records_cleansed;
      return;
    }
    if (rec.record_type == RecordType::Alert) ++c.alerts;
    submit(rec);
  }

  void on_sessions(std::vector<Session> sessions) {
    for (const auto& s : sessions) on_session(s);
  }

  void emit_qos(std::vector<QosSnapshot> snaps) {
    for (auto& snap : snaps) {
      if (gw.cfg_.emit_qos_records) {
        submit(build_qos_record(snap, policy().version, gw.cfg_.gateway_id));
        ++report.counters.qos_records;
      }
      if (gw.cfg_.keep_records) report.qos.push_back(std::move(snap));
    }
  }

  void on_packet(const Packet& pkt) {
    ++report.counters.packets;
    advance_batch(pkt.ts);
    const Session& s = flows.upsert(pkt);
    qos.record_traffic(pkt, s);
    on_sessions(flows.take_closed());
    if (!last_expire || pkt.ts - *last_expire >= gw.cfg_.expire_interval) {
      last_expire = pkt.ts;
      on_sessions(flows.expire(pkt.ts, gw.cfg_.idle_timeout));
      emit_qos(qos.close_ready(pkt.ts, flows));
    }
  }

  void finish() {
    on_sessions(flows.take_closed());
    on_sessions(flows.drain());
    emit_qos(qos.close_all());
    seal();
    report.counters.flow_evictions = flows.evictions();
  }

  std::size_t state_bytes(std::size_t queued) const {
    return flows.approx_bytes() + queued + gw.reporter_->approx_bytes() + qos.approx_bytes();
  }
};

Gateway::Gateway(PipelineConfig cfg, const SignatureDb& db, PolicyEngine& policy)
    : cfg_(std::move(cfg)), db_(db), policy_(policy) {
  cfg_.reporter.gateway_id = cfg_.gateway_id;
  cfg_.qos.delay_sampling_rate = policy_.snapshot()->delay_sampling_rate;
  reporter_ = std::make_unique<Reporter>(
      cfg_.reporter, cfg_.collector_url.empty() ? nullptr : make_http_transport(cfg_.collector_url));
}

Gateway::~Gateway() {
  {
    std::lock_guard lock(poll_mu_);
    poll_stop_ = true;
  }
  poll_cv_.notify_all();
  reporter_->stop();
}

bool Gateway::poll_policy_once() {
  if (cfg_.collector_url.empty()) return false;
  const PolicyFetch fetched = fetch_policy(cfg_.collector_url, cfg_.gateway_id, policy_.version());
  bool adopted = false;
  if (fetched.status == 200 && fetched.document) adopted = policy_.update(*fetched.document);
  std::lock_guard lock(poll_mu_);
  ++poll_counters_.policy_polls;
  if (adopted) ++poll_counters_.policy_updates;
  if (fetched.status != 200 && fetched.status != 304) {
    ++poll_counters_.policy_poll_errors;
    std::cerr << "policy poll failed: " << (fetched.error.empty() ? std::to_string(fetched.status) : fetched.error)
              << "\n";
  }
  return adopted;
}

void Gateway::poll_loop() {
  std::unique_lock lock(poll_mu_);
  while (!poll_cv_.wait_for(lock, cfg_.policy_poll_interval, [&] { return poll_stop_; })) {
    lock.unlock();
    poll_policy_once();
    lock.lock();
  }
}

PipelineReport Gateway::run(std::unique_ptr<FrameSource> source) {
  PipelineReport report;
  report.baseline_rss_bytes = resident_bytes();
  report.peak_rss_bytes = report.baseline_rss_bytes;
  const bool online = !cfg_.collector_url.empty();
  {
    std::lock_guard lock(poll_mu_);
    poll_stop_ = false;
    poll_counters_ = {};
  }
  if (online) reporter_->start();
  // Records are stamped from the first packet on, so learn the cloud policy first.
  if (online && cfg_.policy_poll_interval.count() > 0) poll_policy_once();
  std::thread poller;
  if (online && cfg_.policy_poll_interval.count() > 0) poller = std::thread([this] { poll_loop(); });

  const std::size_t chunk = std::max<std::size_t>(1, cfg_.chunk_packets);
  BoundedQueue<std::vector<Packet>> queue(std::max<std::size_t>(1, cfg_.queue_packets / chunk));
  std::atomic<std::size_t> queued_bytes{0};
  std::atomic<Micros> first_ts{0};
  std::atomic<bool> have_first{false};
  const SteadyTime started = Clock::now();
  CaptureCounters capture_counters;
  std::exception_ptr capture_error;
  Micros last_ts = 0;

  std::thread capture([&] {
    try {
      PacketReader reader(std::move(source));
      std::vector<Packet> pending;
      std::size_t pending_bytes = 0;
      auto flush = [&] {
        if (pending.empty()) return true;
        queued_bytes += pending_bytes;
        pending_bytes = 0;
        return queue.push(std::exchange(pending, {}));
      };
      while (auto pkt = reader.next_packet()) {
        if (!have_first.load(std::memory_order_relaxed)) {
          first_ts = pkt->ts;
          have_first = true;
        }
        if (cfg_.pace) {
          const auto due = started + std::chrono::microseconds(pkt->ts - first_ts.load());
          if (due > Clock::now() + std::chrono::milliseconds(1)) {
            if (!flush()) break;
            std::this_thread::sleep_until(due);
          }
        }
        pending_bytes += packet_bytes(*pkt);
        pending.push_back(std::move(*pkt));
        if (pending.size() >= chunk && !flush()) break;
      }
      flush();
      capture_counters = reader.counters();
    } catch (...) {
      capture_error = std::current_exception();
    }
    queue.close();
  });

  Processor proc(*this, report);
  LagHistogram lag;
  std::optional<Micros> first_seen;
  auto next_sample = started + cfg_.sample_interval;
  std::uint64_t since_state_check = 0;
  auto sample = [&](SteadyTime now) {
    ResourceSample s;
    s.wall_seconds = std::chrono::duration<double>(now - started).count();
    s.sessions = report.counters.sessions;
    s.state_bytes = proc.state_bytes(queued_bytes.load());
    s.rss_bytes = resident_bytes();
    s.cpu_seconds = cpu_seconds();
    report.peak_state_bytes = std::max(report.peak_state_bytes, s.state_bytes);
    report.peak_rss_bytes = std::max(report.peak_rss_bytes, s.rss_bytes);
    report.samples.push_back(s);
  };

  std::exception_ptr processing_error;
  try {
    while (auto packets = queue.pop()) {
      std::size_t bytes = 0;
      for (const auto& p : *packets) bytes += packet_bytes(p);
      const std::size_t queued_now = queued_bytes.load();
      for (const auto& pkt : *packets) {
        if (cfg_.pace) {
          const auto due = started + std::chrono::microseconds(pkt.ts - first_ts.load());
          lag.add(std::chrono::duration_cast<std::chrono::microseconds>(Clock::now() - due).count());
        }
        if (!first_seen) first_seen = pkt.ts;
        last_ts = pkt.ts;
        proc.on_packet(pkt);
      }
      queued_bytes -= bytes;
      since_state_check += packets->size();
      if (since_state_check >= 4096) {
        since_state_check = 0;
        report.peak_state_bytes = std::max(report.peak_state_bytes, proc.state_bytes(queued_now));
      }
      const SteadyTime now = Clock::now();
      if (now >= next_sample) {
        sample(now);
        next_sample += cfg_.sample_interval;
      }
    }
    proc.finish();
  } catch (...) {
    processing_error = std::current_exception();
    queue.close();
  }
  capture.join();

  sample(Clock::now());
  if (online) reporter_->wait_idle(cfg_.drain_timeout);
  if (poller.joinable()) {
    {
      std::lock_guard lock(poll_mu_);
      poll_stop_ = true;
    }
    poll_cv_.notify_all();
    poller.join();
  }
  reporter_->stop();
  if (processing_error) std::rethrow_exception(processing_error);
  if (capture_error) std::rethrow_exception(capture_error);

  report.wall_seconds = std::chrono::duration<double>(Clock::now() - started).count();
  report.capture = capture_counters;
  report.counters.frames = capture_counters.records;
  report.counters.queue_high_water = queue.high_water() * chunk;
  report.counters.backpressure_waits = queue.full_waits();
  {
    std::lock_guard lock(poll_mu_);
    report.counters.policy_polls = poll_counters_.policy_polls;
    report.counters.policy_updates = poll_counters_.policy_updates;
    report.counters.policy_poll_errors = poll_counters_.policy_poll_errors;
  }
  report.reporter = reporter_->stats();
  if (first_seen) report.capture_span = last_ts - *first_seen;
  if (!lag.empty()) report.lag = LagStats{lag.quantile(0.5), lag.quantile(0.99), lag.max()};
  return report;
}

}  // namespace shgw
