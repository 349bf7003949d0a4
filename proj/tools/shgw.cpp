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

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include <unistd.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "shgw/collector.hpp"
#include "shgw/decision_tree.hpp"
#include "shgw/pipeline.hpp"
#include "shgw/trafficgen.hpp"

#ifndef SHGW_DEFAULT_SIGNATURES
#define SHGW_DEFAULT_SIGNATURES "data/signatures.json"
#endif

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace shgw;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void require_file(const fs::path& path, const std::string& flag) {
  if (!fs::is_regular_file(path)) throw UsageError(flag + ": no such file: " + path.string());
}

/// The environment variable wins over the flag so deployments can redirect
/// every invocation at once.
std::string collector_url(const std::string& flag_value) {
  if (const char* env = std::getenv("SHGW_COLLECTOR_URL"); env && *env) return env;
  return flag_value;
}

json counters_json(const StageCounters& c) {
  return {{"frames", c.frames},
          {"packets", c.packets},
          {"sessions", c.sessions},
          {"http_sessions", c.http_sessions},
          {"records_built", c.records_built},
          {"records_cleansed", c.records_cleansed},
          {"records_submitted", c.records_submitted},
          {"alerts", c.alerts},
          {"qos_records", c.qos_records},
          {"batches_sealed", c.batches_sealed},
          {"flow_evictions", c.flow_evictions},
          {"queue_high_water", c.queue_high_water},
          {"backpressure_waits", c.backpressure_waits},
          {"policy_polls", c.policy_polls},
          {"policy_updates", c.policy_updates},
          {"policy_poll_errors", c.policy_poll_errors}};
}

json capture_json(const CaptureCounters& c) {
  return {{"records", c.records},
          {"returned", c.returned},
          {"skipped_non_ipv4", c.skipped_non_ipv4},
          {"skipped_ipv6", c.skipped_ipv6},
          {"skipped_fragment", c.skipped_fragment},
          {"skipped_truncated", c.skipped_truncated},
          {"skipped_bytes", c.skipped_bytes},
          {"ts_clamped", c.ts_clamped}};
}

json reporter_json(const ReporterStats& s) {
  return {{"submitted", s.submitted},
          {"delivered", s.delivered},
          {"dropped", s.dropped},
          {"dropped_realtime", s.dropped_realtime},
          {"persist_failures", s.persist_failures},
          {"sent_batches", s.sent_batches},
          {"sent_realtime", s.sent_realtime},
          {"spilled", s.spilled},
          {"retries", s.retries},
          {"batch_files", s.batch_files},
          {"buffered", s.buffered},
          {"pending_files", s.pending_files},
          {"pending_records", s.pending_records}};
}

void print_counters(const PipelineReport& r) {
  const auto& c = r.counters;
  std::cout << "stage counters\n"
            << "  capture   frames=" << c.frames << " packets=" << c.packets
            << " skipped=" << r.capture.skipped() << "\n"
            << "  flow      sessions=" << c.sessions << " evictions=" << c.flow_evictions << "\n"
            << "  http      sessions=" << c.http_sessions << "\n"
            << "  policy    built=" << c.records_built << " cleansed=" << c.records_cleansed << "\n"
            << "  reporter  submitted=" << r.reporter.submitted << " delivered=" << r.reporter.delivered
            << " dropped=" << r.reporter.dropped << " alerts=" << c.alerts << " qos=" << c.qos_records
            << " batches=" << c.batches_sealed << "\n"
            << "  queue     high_water=" << c.queue_high_water << " backpressure_waits=" << c.backpressure_waits
            << "\n";
}

// --- analyze -----------------------------------------------------------------

struct AnalyzeOptions {
  std::string pcap;
  std::string signatures;
  std::string policy;
  std::string collector;
  std::string out = "shdr-out";
  std::string truth;
  std::string model;
  std::string gateway_id = "gw0";
  std::size_t queue_packets = 4096;
  double poll_interval = 30;
  double drain_timeout = 30;
};

struct DimensionScore {
  std::uint64_t correct = 0;
  std::uint64_t total = 0;
};

using Extractor = std::string (*)(const AwarenessLabels&);

const std::vector<std::pair<std::string, Extractor>>& scored_dimensions() {
  static const std::vector<std::pair<std::string, Extractor>> dims = {
      {"service", [](const AwarenessLabels& l) { return std::string(to_string(l.service)); }},
      {"application", [](const AwarenessLabels& l) { return l.application; }},
      {"device_type", [](const AwarenessLabels& l) { return std::string(to_string(l.device_type)); }},
      {"device_brand", [](const AwarenessLabels& l) { return l.device_brand; }},
      {"provider", [](const AwarenessLabels& l) { return l.provider; }},
      {"location", [](const AwarenessLabels& l) { return l.location.subnet_tag; }},
      {"subscriber", [](const AwarenessLabels& l) { return l.subscriber.subscriber_id; }},
  };
  return dims;
}

int run_analyze(const AnalyzeOptions& o) {
  require_file(o.pcap, "--pcap");
  require_file(o.signatures, "--signatures");
  if (!o.policy.empty()) require_file(o.policy, "--policy");
  if (!o.truth.empty()) require_file(o.truth, "--truth");
  if (!o.model.empty()) require_file(o.model, "--model");

  const SignatureDb db = SignatureDb::load(o.signatures);
  PolicyEngine engine(o.policy.empty() ? default_policy() : parse_policy(read_file(o.policy)));

  PipelineConfig cfg;
  cfg.gateway_id = o.gateway_id;
  cfg.collector_url = collector_url(o.collector);
  cfg.reporter.spool_dir = o.out;
  cfg.queue_packets = o.queue_packets;
  cfg.policy_poll_interval = std::chrono::milliseconds(static_cast<std::int64_t>(o.poll_interval * 1000));
  cfg.drain_timeout = std::chrono::milliseconds(static_cast<std::int64_t>(o.drain_timeout * 1000));
  if (!o.model.empty())
    cfg.model = std::make_shared<const DecisionTreeModel>(DecisionTreeModel::from_json(read_file(o.model)));

  std::map<SessionId, AwarenessLabels> observed;
  if (!o.truth.empty()) {
    cfg.on_record = [&](const ShdrRecord& r, const FilterDecision&) { observed[session_id(r)] = r.labels; };
  }

  fs::create_directories(o.out);
  Gateway gateway(cfg, db, engine);
  const PipelineReport report = gateway.run(std::make_unique<PcapFrameSource>(o.pcap));

  json summary;
  summary["pcap"] = o.pcap;
  summary["collector"] = cfg.collector_url;
  summary["wall_seconds"] = report.wall_seconds;
  summary["capture_span_us"] = report.capture_span;
  summary["counters"] = counters_json(report.counters);
  summary["capture"] = capture_json(report.capture);
  summary["reporter"] = reporter_json(report.reporter);
  summary["peak_state_bytes"] = report.peak_state_bytes;
  json versions = json::object();
  for (const auto& [v, span] : report.versions) versions[std::to_string(v)] = span.records;
  summary["records_by_policy_version"] = versions;

  print_counters(report);

  int status = kExitOk;
  if (!o.truth.empty()) {
    const auto truth = read_truth(o.truth);
    std::map<std::string, DimensionScore> scores;
    std::uint64_t unmatched = 0;
    for (const auto& t : truth) {
      const auto found = observed.find(session_id(t));
      if (found == observed.end()) ++unmatched;
      for (const auto& [name, get] : scored_dimensions()) {
        auto& s = scores[name];
        ++s.total;
        if (found != observed.end() && get(found->second) == get(t.labels)) ++s.correct;
      }
    }
    std::cout << "\naccuracy against " << truth.size() << " labeled sessions (" << unmatched
              << " unmatched)\n";
    std::cout << std::left << std::setw(14) << "dimension" << std::right << std::setw(10) << "correct"
              << std::setw(10) << "total" << std::setw(11) << "accuracy" << "\n";
    json acc = json::object();
    for (const auto& [name, get] : scored_dimensions()) {
      const auto& s = scores[name];
      const double pct = s.total ? 100.0 * static_cast<double>(s.correct) / static_cast<double>(s.total) : 0.0;
      std::cout << std::left << std::setw(14) << name << std::right << std::setw(10) << s.correct
                << std::setw(10) << s.total << std::setw(10) << std::fixed << std::setprecision(2) << pct
                << "%\n";
      acc[name] = {{"correct", s.correct}, {"total", s.total}};
    }
    summary["accuracy"] = acc;
    summary["truth_unmatched"] = unmatched;
  }

  if (!cfg.collector_url.empty() && (report.reporter.pending_files > 0 || report.reporter.buffered > 0)) {
    std::cerr << "warning: " << report.reporter.pending_records << " records still pending delivery in "
              << (fs::path(o.out) / "pending").string() << "\n";
  }
  std::ofstream(fs::path(o.out) / "summary.json") << summary.dump(2) << "\n";
  return status;
}

// --- bench -------------------------------------------------------------------

struct BenchOptions {
  double rate = 0;
  double duration = 0;
  std::uint64_t seed = 1;
  bool no_pace = false;
  std::string signatures = SHGW_DEFAULT_SIGNATURES;
  std::string collector;
  std::string out;
  std::string json_out;
  double sample_interval = 6;
  std::size_t queue_packets = 4096;
};

int run_bench(const BenchOptions& o) {
  if (!(o.rate > 0)) throw UsageError("--rate must be > 0");
  if (!(o.duration > 0)) throw UsageError("--duration must be > 0");
  require_file(o.signatures, "--signatures");

  const SignatureDb db = SignatureDb::load(o.signatures);
  PolicyEngine engine;
  const bool temp_spool = o.out.empty();
  const fs::path spool = temp_spool ? fs::temp_directory_path() / ("shgw-bench-" + std::to_string(::getpid()))
                                    : fs::path(o.out);

  PipelineConfig cfg;
  cfg.gateway_id = "bench";
  cfg.pace = !o.no_pace;
  cfg.collector_url = collector_url(o.collector);
  cfg.reporter.spool_dir = spool;
  cfg.queue_packets = o.queue_packets;
  cfg.sample_interval = std::chrono::milliseconds(static_cast<std::int64_t>(o.sample_interval * 1000));

  LoadSpec spec;
  spec.rate = o.rate;
  spec.duration = o.duration;
  spec.seed = o.seed;
  auto source = std::make_unique<LoadFrameSource>(spec);
  const std::uint64_t offered = source->sessions_total();

  std::cout << "bench: " << offered << " GET sessions at " << o.rate << "/s over " << o.duration << " s ("
            << (cfg.pace ? "paced" : "unpaced") << ")\n";
  const double cpu_before = cpu_seconds();
  PipelineReport report;
  {
    Gateway gateway(cfg, db, engine);
    report = gateway.run(std::move(source));
  }
  const double cpu_used = cpu_seconds() - cpu_before;
  if (temp_spool) {
    std::error_code ec;
    fs::remove_all(spool, ec);
  }

  const auto& c = report.counters;
  const double wall_rate = report.wall_seconds > 0 ? static_cast<double>(c.http_sessions) / report.wall_seconds : 0;
  // Paced: arrivals are spread over the requested duration, so the rate the
  // pipeline sustained is what it completed per second of offered load.
  const double sustained = cfg.pace ? static_cast<double>(c.http_sessions) / o.duration : wall_rate;
  const std::size_t rss_added =
      report.peak_rss_bytes > report.baseline_rss_bytes ? report.peak_rss_bytes - report.baseline_rss_bytes : 0;

  std::cout << std::fixed << std::setprecision(1) << "\nsamples (every " << o.sample_interval << " s)\n"
            << "  wall_s   sessions   state_KiB    rss_MiB   cpu_s\n";
  for (const auto& s : report.samples) {
    std::cout << std::setw(8) << s.wall_seconds << std::setw(11) << s.sessions << std::setw(12)
              << static_cast<double>(s.state_bytes) / 1024.0 << std::setw(11)
              << static_cast<double>(s.rss_bytes) / (1024.0 * 1024.0) << std::setw(8) << s.cpu_seconds << "\n";
  }
  std::cout << "\nsessions processed   " << c.sessions << " of " << offered << "\n"
            << "sustained GET/s      " << sustained << "\n"
            << "wall-clock GET/s     " << wall_rate << "\n"
            << "wall seconds         " << report.wall_seconds << "\n"
            << "cpu utilization      " << (report.wall_seconds > 0 ? 100.0 * cpu_used / report.wall_seconds : 0)
            << "%\n"
            << "peak state           " << static_cast<double>(report.peak_state_bytes) / (1024.0 * 1024.0)
            << " MiB\n"
            << "peak added RSS       " << static_cast<double>(rss_added) / (1024.0 * 1024.0) << " MiB\n";
  if (report.lag) {
    std::cout << "processing lag       p50=" << static_cast<double>(report.lag->p50) / 1000.0
              << " ms p99=" << static_cast<double>(report.lag->p99) / 1000.0
              << " ms max=" << static_cast<double>(report.lag->max) / 1000.0 << " ms\n";
  }
  print_counters(report);

  if (!o.json_out.empty()) {
    json j;
    j["rate"] = o.rate;
    j["duration"] = o.duration;
    j["seed"] = o.seed;
    j["paced"] = cfg.pace;
    j["sessions_offered"] = offered;
    j["sessions_processed"] = c.sessions;
    j["http_sessions"] = c.http_sessions;
    j["sustained_gets_per_s"] = sustained;
    j["wall_gets_per_s"] = wall_rate;
    j["wall_seconds"] = report.wall_seconds;
    j["cpu_seconds"] = cpu_used;
    j["peak_state_bytes"] = report.peak_state_bytes;
    j["baseline_rss_bytes"] = report.baseline_rss_bytes;
    j["peak_rss_bytes"] = report.peak_rss_bytes;
    if (report.lag) {
      j["lag_us"] = {{"p50", report.lag->p50}, {"p99", report.lag->p99}, {"max", report.lag->max}};
    }
    json samples = json::array();
    for (const auto& s : report.samples) {
      samples.push_back({{"wall_seconds", s.wall_seconds},
                         {"sessions", s.sessions},
                         {"state_bytes", s.state_bytes},
                         {"rss_bytes", s.rss_bytes},
                         {"cpu_seconds", s.cpu_seconds}});
    }
    j["samples"] = samples;
    j["counters"] = counters_json(c);
    j["reporter"] = reporter_json(report.reporter);
    std::ofstream(o.json_out) << j.dump(2) << "\n";
  }
  return kExitOk;
}

// --- collector serve -----------------------------------------------------------

int run_collector(const std::string& host, int port, const std::string& data_dir) {
  sigset_t stop_signals;
  sigemptyset(&stop_signals);
  sigaddset(&stop_signals, SIGINT);
  sigaddset(&stop_signals, SIGTERM);
  // Block before the server thread exists so it inherits the mask.
  pthread_sigmask(SIG_BLOCK, &stop_signals, nullptr);

  CollectorStore store(data_dir);
  CollectorServer server(store);
  const int bound = server.start(host, port);
  std::cout << "collector listening on http://" << host << ":" << bound << std::endl;
  int sig = 0;
  sigwait(&stop_signals, &sig);
  server.stop();
  std::cout << "collector stopped (" << store.record_count() << " records)" << std::endl;
  return kExitOk;
}

// --- gen -----------------------------------------------------------------------

struct GenCorpusOptions {
  std::string scenario;
  std::uint64_t sessions = 10'000;
  std::string mix = "default";
  std::uint64_t blocked_pct = 70;
  std::uint64_t seed = 1;
  std::string pcap;
  std::string truth;
};

int run_gen_corpus(const GenCorpusOptions& o) {
  ScenarioSpec spec;
  if (!o.scenario.empty()) {
    require_file(o.scenario, "--scenario");
    spec = ScenarioSpec::load(o.scenario);
  } else if (o.mix == "default") {
    spec = ScenarioSpec::default_mix(o.sessions);
  } else if (o.mix == "encrypted") {
    spec = ScenarioSpec::encrypted_pair(o.sessions / 2);
  } else if (o.mix == "cleansing") {
    spec = ScenarioSpec::cleansing_mix(o.sessions, o.blocked_pct);
  } else {
    throw UsageError("--mix must be default, encrypted or cleansing");
  }
  const Corpus corpus = generate_corpus(spec, o.seed);
  const fs::path truth = o.truth.empty() ? fs::path(o.pcap).replace_extension(".truth") : fs::path(o.truth);
  write_pcap(corpus.frames, o.pcap);
  write_truth(corpus.truth, truth);
  std::cout << "wrote " << corpus.frames.size() << " frames to " << o.pcap << " and " << corpus.truth.size()
            << " sessions to " << truth.string() << "\n";
  return kExitOk;
}

int run_gen_load(double rate, double duration, std::uint64_t seed, const std::string& pcap) {
  if (!(rate > 0)) throw UsageError("--rate must be > 0");
  if (!(duration > 0)) throw UsageError("--duration must be > 0");
  LoadSpec spec;
  spec.rate = rate;
  spec.duration = duration;
  spec.seed = seed;
  LoadFrameSource source(spec);
  std::ofstream out(pcap, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + pcap);
  PcapWriter writer(out);
  while (auto f = source.next_frame()) writer.write(f->ts, f->data, f->orig_len);
  std::cout << "wrote " << source.sessions_total() << " sessions (" << writer.records() << " frames) to " << pcap
            << "\n";
  return kExitOk;
}

// --- policy push ---------------------------------------------------------------

int run_policy_push(const std::string& file, const std::string& url_flag) {
  require_file(file, "--file");
  const std::string url = collector_url(url_flag);
  if (url.empty()) throw UsageError("--collector or SHGW_COLLECTOR_URL is required");
  const std::string text = read_file(file);
  const PolicyDocument doc = parse_policy(text);
  std::string error;
  const int status = push_policy(url, text, &error);
  if (status >= 200 && status < 300) {
    std::cout << "policy version " << doc.version << " accepted by " << url << "\n";
    return kExitOk;
  }
  std::cerr << "policy push failed (" << (status == 0 ? std::string("unreachable") : std::to_string(status))
            << "): " << error << "\n";
  return kExitRuntime;
}

// --- train -----------------------------------------------------------------------

int run_train(const std::string& pcap, const std::string& truth_path, const std::string& out, TreeParams params) {
  require_file(pcap, "--pcap");
  require_file(truth_path, "--truth");
  std::map<SessionId, std::string> labels;
  for (const auto& t : read_truth(truth_path)) {
    if (t.labels.service == ServiceType::ProprietaryIot) labels[session_id(t)] = t.labels.application;
  }
  std::vector<TrainingSample> samples;
  auto collect = [&](const std::vector<Session>& sessions) {
    for (const auto& s : sessions) {
      const SessionId id{s.initiator.ip, s.initiator.port, s.responder.ip, s.responder.port, s.transport, s.first_ts};
      if (auto it = labels.find(id); it != labels.end()) samples.push_back({features(s), it->second});
    }
  };
  PacketReader reader = open_capture(pcap);
  FlowTable flows;
  while (auto pkt = reader.next_packet()) {
    flows.upsert(*pkt);
    collect(flows.take_closed());
    collect(flows.expire(pkt->ts));
  }
  collect(flows.take_closed());
  collect(flows.drain());

  const DecisionTreeModel model = train_encrypted_model(samples, params);
  std::ofstream(out) << model.to_json() << "\n";
  std::cout << "trained on " << samples.size() << " sessions: " << model.nodes.size() << " nodes, depth "
            << model.depth() << ", classes";
  for (const auto& c : model.class_labels) std::cout << " " << c;
  std::cout << "\nwrote " << out << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"shgw: smart home gateway traffic awareness"};
  app.require_subcommand(1);

  AnalyzeOptions analyze;
  auto* analyze_cmd = app.add_subcommand("analyze", "Run the full pipeline over a pcap trace");
  analyze_cmd->add_option("--pcap", analyze.pcap, "Input trace")->required();
  analyze_cmd->add_option("--signatures", analyze.signatures, "Signature database")->required();
  analyze_cmd->add_option("--policy", analyze.policy, "Initial policy document");
  analyze_cmd->add_option("--collector", analyze.collector, "Collector base URL (SHGW_COLLECTOR_URL overrides)");
  analyze_cmd->add_option("--out", analyze.out, "Output directory for batch files and summary.json")
      ->capture_default_str();
  analyze_cmd->add_option("--truth", analyze.truth, "Ground-truth sidecar; prints an accuracy table");
  analyze_cmd->add_option("--model", analyze.model, "Decision tree for encrypted sessions");
  analyze_cmd->add_option("--gateway-id", analyze.gateway_id)->capture_default_str();
  analyze_cmd->add_option("--queue-packets", analyze.queue_packets, "Capture queue capacity")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  analyze_cmd->add_option("--poll-interval", analyze.poll_interval, "Policy poll interval, seconds")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  analyze_cmd->add_option("--drain-timeout", analyze.drain_timeout, "Seconds to wait for delivery at exit")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);

  BenchOptions bench;
  auto* bench_cmd = app.add_subcommand("bench", "Feed generated GET load through the pipeline");
  bench_cmd->add_option("--rate", bench.rate, "GET sessions per second")->required();
  bench_cmd->add_option("--duration", bench.duration, "Seconds of load")->required();
  bench_cmd->add_option("--seed", bench.seed)->capture_default_str();
  bench_cmd->add_flag("--no-pace", bench.no_pace, "Replay as fast as possible");
  bench_cmd->add_option("--signatures", bench.signatures)->capture_default_str();
  bench_cmd->add_option("--collector", bench.collector, "Upload to a collector instead of writing locally");
  bench_cmd->add_option("--out", bench.out, "Keep batch files here (default: temporary, removed)");
  bench_cmd->add_option("--json", bench.json_out, "Write the report as JSON");
  bench_cmd->add_option("--sample-interval", bench.sample_interval, "Resource sampling period, seconds")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  bench_cmd->add_option("--queue-packets", bench.queue_packets)->capture_default_str()->check(CLI::PositiveNumber);

  std::string host = "127.0.0.1";
  int port = 8080;
  std::string data_dir = "collector-data";
  auto* collector_cmd = app.add_subcommand("collector", "Cloud-side collector");
  collector_cmd->require_subcommand(1);
  auto* serve_cmd = collector_cmd->add_subcommand("serve", "Serve ingest, policy and aggregate endpoints");
  serve_cmd->add_option("--host", host)->capture_default_str();
  serve_cmd->add_option("--port", port, "0 picks a free port")->capture_default_str()->check(CLI::Range(0, 65535));
  serve_cmd->add_option("--data", data_dir, "Persistence directory")->capture_default_str();

  GenCorpusOptions corpus;
  double load_rate = 0, load_duration = 0;
  std::uint64_t load_seed = 1;
  std::string load_pcap;
  auto* gen_cmd = app.add_subcommand("gen", "Generate synthetic traffic");
  gen_cmd->require_subcommand(1);
  auto* corpus_cmd = gen_cmd->add_subcommand("corpus", "Labeled smart-home corpus plus .truth sidecar");
  corpus_cmd->add_option("--pcap", corpus.pcap, "Output trace")->required();
  corpus_cmd->add_option("--truth", corpus.truth, "Output truth file (default: trace path with a .truth extension)");
  corpus_cmd->add_option("--scenario", corpus.scenario, "Scenario JSON with per-profile counts");
  corpus_cmd->add_option("--sessions", corpus.sessions, "Size of a built-in mix")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  corpus_cmd->add_option("--mix", corpus.mix, "default, encrypted or cleansing")->capture_default_str();
  corpus_cmd->add_option("--blocked-pct", corpus.blocked_pct, "Cleansing mix: blocklisted share")
      ->capture_default_str()
      ->check(CLI::Range(0, 100));
  corpus_cmd->add_option("--seed", corpus.seed)->capture_default_str();
  auto* load_cmd = gen_cmd->add_subcommand("load", "Single-GET load trace");
  load_cmd->add_option("--rate", load_rate)->required();
  load_cmd->add_option("--duration", load_duration)->required();
  load_cmd->add_option("--seed", load_seed)->capture_default_str();
  load_cmd->add_option("--pcap", load_pcap, "Output trace")->required();

  std::string policy_file, policy_collector;
  auto* policy_cmd = app.add_subcommand("policy", "Policy administration");
  policy_cmd->require_subcommand(1);
  auto* push_cmd = policy_cmd->add_subcommand("push", "Upload a policy document to the collector");
  push_cmd->add_option("--file", policy_file, "Policy JSON")->required();
  push_cmd->add_option("--collector", policy_collector, "Collector base URL (SHGW_COLLECTOR_URL overrides)");

  std::string train_pcap, train_truth, train_out = "model.json";
  TreeParams tree;
  auto* train_cmd = app.add_subcommand("train", "Fit the encrypted-session decision tree");
  train_cmd->add_option("--pcap", train_pcap)->required();
  train_cmd->add_option("--truth", train_truth)->required();
  train_cmd->add_option("--out", train_out)->capture_default_str();
  train_cmd->add_option("--max-depth", tree.max_depth)->capture_default_str();
  train_cmd->add_option("--min-leaf", tree.min_leaf)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*analyze_cmd) return run_analyze(analyze);
    if (*bench_cmd) return run_bench(bench);
    if (*serve_cmd) return run_collector(host, port, data_dir);
    if (*corpus_cmd) return run_gen_corpus(corpus);
    if (*load_cmd) return run_gen_load(load_rate, load_duration, load_seed, load_pcap);
    if (*push_cmd) return run_policy_push(policy_file, policy_collector);
    if (*train_cmd) return run_train(train_pcap, train_truth, train_out, tree);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
