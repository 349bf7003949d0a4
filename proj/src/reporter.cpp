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

#include "shgw/reporter.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

#include "httplib.h"

namespace shgw {

namespace fs = std::filesystem;

namespace {

class HttpTransport final : public UploadTransport {
 public:
  explicit HttpTransport(std::string base_url) : base_url_(std::move(base_url)) {
    while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
  }

  UploadResult send(ReportMethod method, std::string_view path, std::string_view body,
                    std::string_view filename, std::chrono::milliseconds timeout) override {
    httplib::Client cli(base_url_);
    cli.set_connection_timeout(timeout);
    cli.set_read_timeout(timeout);
    cli.set_write_timeout(timeout);
    httplib::Headers headers;
    if (!filename.empty()) headers.emplace(std::string(kFilenameHeader), std::string(filename));
    const std::string p(path);
    const char* type = "application/x-ndjson";
    auto res = method == ReportMethod::Put ? cli.Put(p, headers, body.data(), body.size(), type)
                                           : cli.Post(p, headers, body.data(), body.size(), type);
    if (!res) return {0, httplib::to_string(res.error())};
    return {res->status, res->status >= 300 ? res->body : std::string{}};
  }

 private:
  std::string base_url_;
};

std::optional<std::string> slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::unique_ptr<UploadTransport> make_http_transport(const std::string& base_url) {
  return std::make_unique<HttpTransport>(base_url);
}

Reporter::Reporter(ReporterConfig cfg, std::unique_ptr<UploadTransport> transport)
    : cfg_(std::move(cfg)), transport_(std::move(transport)), rng_(cfg_.seed) {
  if (cfg_.batch_capacity == 0) cfg_.batch_capacity = 1;
  if (cfg_.realtime_capacity == 0) cfg_.realtime_capacity = 1;
  fs::create_directories(archive_dir());
  if (transport_) {
    fs::create_directories(pending_dir());
    recover_pending();
  }
}

Reporter::~Reporter() { stop(); }

void Reporter::recover_pending() {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(pending_dir())) {
    if (entry.is_regular_file() && entry.path().extension() == ".log") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& path : files) {
    std::uint64_t records = 0;
    std::ifstream in(path);
    std::string first;
    if (std::getline(in, first)) {
      try {
        records = decode_header(first).records;
      } catch (const ShdrError&) {
        std::cerr << "reporter: unreadable header in " << path << ", uploading as-is\n";
      }
    }
    pending_.push_back({path, records});
  }
}

SubmitOutcome Reporter::submit(const ShdrRecord& r) {
  Entry e{encode(r), r.record_type};
  std::lock_guard lock(mu_);
  ++stats_.submitted;
  const std::size_t bytes = e.footprint();
  if (e.type == RecordType::Alert && transport_) {
    SubmitOutcome out = SubmitOutcome::Accepted;
    if (realtime_.size() >= cfg_.realtime_capacity) {
      buffered_bytes_ -= std::min(buffered_bytes_, realtime_.front().footprint());
      realtime_.pop_front();
      ++stats_.dropped;
      ++stats_.dropped_realtime;
      std::cerr << "reporter: realtime buffer full, dropped oldest ALERT\n";
      out = SubmitOutcome::DroppedOldest;
    }
    realtime_.push_back(std::move(e));
    buffered_bytes_ += bytes;
    cv_.notify_all();
    return out;
  }
  SubmitOutcome out = SubmitOutcome::Accepted;
  if (batch_.size() >= cfg_.batch_capacity) {
    drop_oldest_batch_locked();
    out = SubmitOutcome::DroppedOldest;
  }
  batch_.push_back(std::move(e));
  buffered_bytes_ += bytes;
  return out;
}

void Reporter::drop_oldest_batch_locked() {
  // Prefer the oldest non-alert record; spilled alerts go last.
  auto victim = std::find_if(batch_.begin(), batch_.end(),
                             [](const Entry& e) { return e.type != RecordType::Alert; });
  if (victim == batch_.end()) victim = batch_.begin();
  buffered_bytes_ -= std::min(buffered_bytes_, victim->footprint());
  batch_.erase(victim);
  ++stats_.dropped;
}

fs::path Reporter::unique_name_locked(Micros window_start) {
  const std::string base = batch_file_name(cfg_.gateway_id, window_start);
  const std::string stem = base.substr(0, base.size() - 4);  // strip ".log"
  auto taken = [&](const std::string& name) {
    return fs::exists(pending_dir() / name) || fs::exists(archive_dir() / name);
  };
  std::uint32_t& seq = names_used_[window_start];
  std::string name = seq == 0 ? base : stem + "-" + std::to_string(seq) + ".log";
  while (taken(name)) name = stem + "-" + std::to_string(++seq) + ".log";
  ++seq;
  return name;
}

std::optional<fs::path> Reporter::seal_batch(Micros window_start) {
  std::vector<std::string> records;
  fs::path name;
  {
    std::lock_guard lock(mu_);
    if (batch_.empty()) return std::nullopt;
    records.reserve(batch_.size());
    for (auto& e : batch_) records.push_back(std::move(e.line));
    batch_.clear();
    buffered_bytes_ = 0;
    for (const auto& e : realtime_) buffered_bytes_ += e.footprint();
    name = unique_name_locked(window_start);
  }
  const BatchHeader header{kShdrSchemaVersion, cfg_.gateway_id, window_start, records.size()};
  const fs::path dir = transport_ ? pending_dir() : archive_dir();
  const fs::path path = dir / name;
  try {
    write_batch_lines(records, header, path);
  } catch (const ShdrError& e) {
    std::lock_guard lock(mu_);
    ++stats_.persist_failures;
    stats_.dropped += records.size();
    std::cerr << "reporter: " << e.what() << "\n";
    return std::nullopt;
  }
  std::lock_guard lock(mu_);
  ++stats_.batch_files;
  if (!transport_) {
    stats_.delivered += records.size();
  } else {
    pending_.push_back({path, records.size()});
    cv_.notify_all();
  }
  return path;
}

void Reporter::set_method(ReportMethod m) {
  std::lock_guard lock(mu_);
  method_ = m;
}

std::chrono::milliseconds Reporter::backoff_delay_locked(std::uint32_t attempts) {
  using std::chrono::milliseconds;
  const std::uint32_t shift = std::min<std::uint32_t>(attempts > 0 ? attempts - 1 : 0, 30);
  const double nominal =
      std::min<double>(static_cast<double>(cfg_.backoff_base.count()) * static_cast<double>(1ULL << shift),
                       static_cast<double>(cfg_.backoff_cap.count()));
  std::uniform_real_distribution<double> jitter(-cfg_.backoff_jitter, cfg_.backoff_jitter);
  const double delay = std::min(nominal * (1.0 + jitter(rng_)), static_cast<double>(cfg_.backoff_cap.count()));
  return milliseconds(static_cast<std::int64_t>(std::max(0.0, delay)));
}

void Reporter::send_realtime_round() {
  if (!transport_) return;
  for (;;) {
    Entry rec;
    ReportMethod method;
    {
      std::lock_guard lock(mu_);
      if (realtime_.empty()) return;
      rec = std::move(realtime_.front());
      realtime_.pop_front();
      buffered_bytes_ -= std::min(buffered_bytes_, rec.footprint());
      method = method_;
      in_flight_ = true;
    }
    const std::string& body = rec.line;
    bool ok = false;
    int attempts = 0;
    for (; attempts < cfg_.realtime_attempts && !ok; ++attempts) {
      ok = transport_->send(method, kRealtimePath, body, {}, cfg_.realtime_timeout).ok();
    }
    std::lock_guard lock(mu_);
    in_flight_ = false;
    stats_.retries += static_cast<std::uint64_t>(attempts - 1);
    if (ok) {
      ++stats_.sent_realtime;
      ++stats_.delivered;
      continue;
    }
    ++stats_.spilled;
    if (batch_.size() >= cfg_.batch_capacity) drop_oldest_batch_locked();
    buffered_bytes_ += rec.footprint();
    batch_.push_back(std::move(rec));
  }
}

void Reporter::upload_pending_round(SteadyTime now) {
  if (!transport_) return;
  for (;;) {
    send_realtime_round();
    PendingFile file;
    ReportMethod method;
    {
      std::lock_guard lock(mu_);
      if (pending_.empty()) return;
      if (retry_.next_retry && now < *retry_.next_retry) return;
      file = pending_.front();
      method = method_;
      in_flight_ = true;
    }
    const auto body = slurp(file.path);
    if (!body) {
      std::lock_guard lock(mu_);
      in_flight_ = false;
      pending_.pop_front();
      ++stats_.persist_failures;
      stats_.dropped += file.records;
      std::cerr << "reporter: pending file vanished: " << file.path << "\n";
      continue;
    }
    const UploadResult res =
        transport_->send(method, kBatchPath, *body, file.path.filename().string(), cfg_.batch_timeout);
    std::lock_guard lock(mu_);
    in_flight_ = false;
    if (!res.ok()) {
      ++retry_.attempts;
      ++stats_.retries;
      retry_.next_retry = now + backoff_delay_locked(retry_.attempts);
      return;
    }
    std::error_code ec;
    fs::rename(file.path, archive_dir() / file.path.filename(), ec);
    if (ec) std::cerr << "reporter: archive move failed for " << file.path << ": " << ec.message() << "\n";
    pending_.pop_front();
    retry_ = {};
    ++stats_.sent_batches;
    stats_.delivered += file.records;
  }
}

void Reporter::pump(SteadyTime now) {
  std::lock_guard send(send_mu_);
  upload_pending_round(now);
  cv_.notify_all();
}

bool Reporter::has_due_work_locked(SteadyTime now) const {
  if (!transport_) return false;
  if (!realtime_.empty()) return true;
  return !pending_.empty() && (!retry_.next_retry || now >= *retry_.next_retry);
}

void Reporter::start() {
  std::lock_guard lock(mu_);
  if (worker_.joinable()) return;
  stopping_ = false;
  worker_ = std::thread([this] { worker_loop(); });
}

void Reporter::stop() {
  {
    std::lock_guard lock(mu_);
    stopping_ = true;
  }
  cv_.notify_all();
  if (worker_.joinable()) worker_.join();
}

void Reporter::worker_loop() {
  std::unique_lock lock(mu_);
  while (!stopping_) {
    const auto now = std::chrono::steady_clock::now();
    if (has_due_work_locked(now)) {
      lock.unlock();
      pump(now);
      lock.lock();
      continue;
    }
    if (!pending_.empty() && retry_.next_retry) {
      cv_.wait_until(lock, *retry_.next_retry);
    } else {
      cv_.wait(lock);
    }
  }
}

bool Reporter::wait_idle(std::chrono::milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  for (;;) {
    bool threaded;
    {
      std::lock_guard lock(mu_);
      if (realtime_.empty() && pending_.empty() && !in_flight_) return true;
      threaded = worker_.joinable();
    }
    const auto now = std::chrono::steady_clock::now();
    if (now >= deadline) return false;
    if (!threaded) pump(now);
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
}

ReporterStats Reporter::stats() const {
  std::lock_guard lock(mu_);
  ReporterStats s = stats_;
  s.buffered = batch_.size() + realtime_.size();
  s.pending_files = pending_.size();
  s.pending_records = 0;
  for (const auto& f : pending_) s.pending_records += f.records;
  return s;
}

RetryState Reporter::batch_retry() const {
  std::lock_guard lock(mu_);
  return retry_;
}

std::vector<ShdrRecord> Reporter::buffered_records() const {
  std::lock_guard lock(mu_);
  std::vector<ShdrRecord> out;
  out.reserve(batch_.size());
  for (const auto& e : batch_) out.push_back(decode(e.line));
  return out;
}

std::size_t Reporter::approx_bytes() const {
  std::lock_guard lock(mu_);
  return buffered_bytes_;
}

}  // namespace shgw
