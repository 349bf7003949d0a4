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

#include <doctest.h>

#include <csignal>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

#include "httplib.h"
#include "json.hpp"
#include "shgw/collector.hpp"
#include "support.hpp"

namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string output;
};

/// Runs the CLI through the shell with stderr folded into stdout.
Outcome cli(const std::string& args) {
  const std::string cmd = std::string(SHGW_CLI) + " " + args + " 2>&1";
  Outcome out;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe);
  char buf[4096];
  while (const std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) out.output.append(buf, n);
  const int status = ::pclose(pipe);
  out.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::map<std::string, std::string> files_in(const fs::path& dir) {
  std::map<std::string, std::string> out;
  if (fs::exists(dir))
    for (const auto& e : fs::directory_iterator(dir)) out[e.path().filename().string()] = slurp(e.path());
  return out;
}

const std::string kSignatures = SHGW_DATA_DIR "/signatures.json";

/// `collector serve` as a child process; the bound port is read from its banner.
class ServedCollector {
 public:
  explicit ServedCollector(const fs::path& data) {
    int fds[2];
    REQUIRE(::pipe(fds) == 0);
    pid_ = ::fork();
    REQUIRE(pid_ >= 0);
    if (pid_ == 0) {
      ::dup2(fds[1], STDOUT_FILENO);
      ::close(fds[0]);
      ::close(fds[1]);
      const std::string dir = data.string();
      ::execl(SHGW_CLI, SHGW_CLI, "collector", "serve", "--port", "0", "--data", dir.c_str(),
              static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(fds[1]);
    out_ = ::fdopen(fds[0], "r");
    char line[256] = {};
    REQUIRE(std::fgets(line, sizeof line, out_));
    const std::string banner(line);
    const auto colon = banner.rfind(':');
    REQUIRE(colon != std::string::npos);
    url_ = "http://127.0.0.1:" + std::to_string(std::stoi(banner.substr(colon + 1)));
  }
  ~ServedCollector() {
    if (pid_ > 0) stop();
    if (out_) std::fclose(out_);
  }
  const std::string& url() const { return url_; }

  /// Sends SIGTERM and returns the exit status.
  int stop() {
    ::kill(pid_, SIGTERM);
    int status = 0;
    ::waitpid(pid_, &status, 0);
    pid_ = -1;
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

 private:
  pid_t pid_ = -1;
  FILE* out_ = nullptr;
  std::string url_;
};

nlohmann::json get_json(const std::string& base, const std::string& path) {
  httplib::Client http(base);
  auto res = http.Get(path);
  REQUIRE(res);
  return nlohmann::json::parse(res->body);
}

}  // namespace

TEST_CASE("usage errors exit 2") {
  CHECK(cli("").code == 2);
  CHECK(cli("frobnicate").code == 2);
  CHECK(cli("analyze --signatures " + kSignatures).code == 2);
  const auto missing = cli("analyze --pcap /nonexistent.pcap --signatures " + kSignatures);
  CHECK(missing.code == 2);
  CHECK(missing.output.find("--pcap") != std::string::npos);
  CHECK(cli("bench --rate 0 --duration 5").code == 2);
  CHECK(cli("bench --rate 100 --duration -1").code == 2);
  CHECK(cli("gen corpus --pcap /tmp/x.pcap --mix bogus").code == 2);
  CHECK(cli("gen load --rate 0 --duration 1 --pcap /tmp/x.pcap").code == 2);
  testkit::TempDir dir;
  std::ofstream(dir / "p.json") << R"({"version": 2})";
  CHECK(cli("policy push --file " + (dir / "p.json").string()).code == 2);
}

TEST_CASE("runtime failures exit 1") {
  testkit::TempDir dir;
  std::ofstream(dir / "junk.pcap") << "this is not a capture file at all";
  CHECK(cli("analyze --pcap " + (dir / "junk.pcap").string() + " --signatures " + kSignatures + " --out " +
             (dir / "out").string())
            .code == 1);
  std::ofstream(dir / "bad.json") << R"({"version": 1, "ports": 7})";
  CHECK(cli("gen corpus --pcap " + (dir / "c.pcap").string() + " --sessions 20").code == 0);
  CHECK(cli("analyze --pcap " + (dir / "c.pcap").string() + " --signatures " + (dir / "bad.json").string()).code ==
        1);
  std::ofstream(dir / "p.json") << R"({"version": 2})";
  const auto unreachable = cli("policy push --file " + (dir / "p.json").string() + " --collector http://127.0.0.1:1");
  CHECK(unreachable.code == 1);
  CHECK(unreachable.output.find("unreachable") != std::string::npos);
  std::ofstream(dir / "broken.json") << R"({"version": )";
  CHECK(cli("policy push --file " + (dir / "broken.json").string() + " --collector http://127.0.0.1:1").code == 1);
}

TEST_CASE("analyze with truth prints an accuracy table; output is deterministic and local") {
  testkit::TempDir dir;
  const auto pcap = (dir / "c.pcap").string();
  REQUIRE(cli("gen corpus --pcap " + pcap + " --sessions 1500 --seed 3").code == 0);
  CHECK(fs::exists(dir / "c.truth"));
  auto analyze = [&](const std::string& out) {
    return cli("analyze --pcap " + pcap + " --signatures " + kSignatures + " --truth " + (dir / "c.truth").string() +
                " --out " + (dir / out).string());
  };
  const auto first = analyze("a");
  CHECK(first.code == 0);
  for (const char* dim : {"service", "application", "device_type", "provider"}) {
    const auto at = first.output.find(std::string("\n") + dim + " ");
    REQUIRE(at != std::string::npos);
    const auto line = first.output.substr(at + 1, first.output.find('\n', at + 1) - at - 1);
    CHECK_MESSAGE(line.find("100.00%") != std::string::npos, line);
  }
  CHECK(analyze("b").code == 0);
  const auto archive = files_in(dir / "a" / "archive");
  CHECK_FALSE(archive.empty());
  CHECK(archive == files_in(dir / "b" / "archive"));
  CHECK(files_in(dir / "a" / "pending").empty());
  const auto summary = nlohmann::json::parse(slurp(dir / "a" / "summary.json"));
  CHECK(summary["counters"]["sessions"] == 1500);
  CHECK(summary["accuracy"]["application"]["correct"] == 1500);
}

TEST_CASE("bench reports identical counts for the same seed") {
  testkit::TempDir dir;
  auto bench = [&](const std::string& name) {
    const auto r = cli("bench --rate 2000 --duration 2 --no-pace --sample-interval 0.5 --json " +
                        (dir / name).string());
    CHECK(r.code == 0);
    return nlohmann::json::parse(slurp(dir / name));
  };
  const auto a = bench("a.json"), b = bench("b.json");
  CHECK(a["sessions_processed"] == 4000);
  CHECK(a["http_sessions"] == 4000);
  CHECK(a["sessions_processed"] == b["sessions_processed"]);
  CHECK(a["counters"]["records_submitted"] == b["counters"]["records_submitted"]);
  CHECK(a["reporter"]["dropped"] == 0);
  CHECK_FALSE(a["samples"].empty());
}

TEST_CASE("gen load writes the requested number of sessions") {
  testkit::TempDir dir;
  const auto r = cli("gen load --rate 50 --duration 2 --pcap " + (dir / "l.pcap").string());
  CHECK(r.code == 0);
  CHECK(r.output.find("wrote 100 sessions") != std::string::npos);
  shgw::PacketReader reader = shgw::open_capture(dir / "l.pcap");
  std::size_t gets = 0;
  while (auto p = reader.next_packet())
    if (p->payload_view().rfind("GET ", 0) == 0) ++gets;
  CHECK(gets == 100);
}

TEST_CASE("served collector: analyze uploads, policy push is adopted, SIGTERM exits 0") {
  testkit::TempDir dir;
  const auto pcap = (dir / "c.pcap").string();
  REQUIRE(cli("gen corpus --pcap " + pcap + " --sessions 400").code == 0);
  ServedCollector collector(dir / "cloud");

  std::ofstream(dir / "v7.json") << R"({"version": 7, "batch_interval": 30})";
  const auto push = cli("policy push --file " + (dir / "v7.json").string() + " --collector " + collector.url());
  CHECK(push.code == 0);
  CHECK(cli("policy push --file " + (dir / "v7.json").string() + " --collector " + collector.url()).code == 1);

  const auto run = cli("analyze --pcap " + pcap + " --signatures " + kSignatures + " --collector " + collector.url() +
                        " --out " + (dir / "out").string());
  CHECK(run.code == 0);
  const auto summary = nlohmann::json::parse(slurp(dir / "out" / "summary.json"));
  const auto delivered = summary["reporter"]["delivered"].get<std::uint64_t>();
  CHECK(delivered == summary["counters"]["records_submitted"].get<std::uint64_t>());
  CHECK(summary["records_by_policy_version"].contains("7"));
  CHECK(summary["records_by_policy_version"].size() == 1);
  const auto status = get_json(collector.url(), "/status");
  CHECK(status["records"] == delivered);

  // The environment variable overrides a wrong flag value.
  ::setenv("SHGW_COLLECTOR_URL", collector.url().c_str(), 1);
  const auto redirected = cli("analyze --pcap " + pcap + " --signatures " + kSignatures +
                               " --collector http://127.0.0.1:1 --gateway-id gw-env --out " + (dir / "out2").string());
  ::unsetenv("SHGW_COLLECTOR_URL");
  CHECK(redirected.code == 0);
  CHECK(get_json(collector.url(), "/status")["records"] == 2 * delivered);

  CHECK(collector.stop() == 0);
  shgw::CollectorStore replayed(dir / "cloud");
  CHECK(replayed.record_count() == 2 * delivered);
  CHECK(replayed.latest_policy()->version == 7);
}

TEST_CASE("train fits a tree that labels a fresh encrypted corpus") {
  testkit::TempDir dir;
  const auto train_pcap = (dir / "train.pcap").string(), test_pcap = (dir / "test.pcap").string();
  REQUIRE(cli("gen corpus --mix encrypted --sessions 400 --seed 1 --pcap " + train_pcap).code == 0);
  REQUIRE(cli("gen corpus --mix encrypted --sessions 200 --seed 2 --pcap " + test_pcap).code == 0);
  const auto model = (dir / "tree.json").string();
  const auto trained = cli("train --pcap " + train_pcap + " --truth " + (dir / "train.truth").string() +
                            " --out " + model);
  CHECK(trained.code == 0);
  CHECK(trained.output.find("trained on 400 sessions") != std::string::npos);
  const auto run = cli("analyze --pcap " + test_pcap + " --signatures " + kSignatures + " --model " + model +
                        " --truth " + (dir / "test.truth").string() + " --out " + (dir / "out").string());
  CHECK(run.code == 0);
  const auto summary = nlohmann::json::parse(slurp(dir / "out" / "summary.json"));
  CHECK(summary["accuracy"]["application"]["correct"] == 200);
}
