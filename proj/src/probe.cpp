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

#include "shgw/probe.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <numeric>

namespace shgw {

namespace {

class Fd {
 public:
  explicit Fd(int fd) : fd_(fd) {}
  ~Fd() {
    if (fd_ >= 0) ::close(fd_);
  }
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  int get() const { return fd_; }

 private:
  int fd_;
};

sockaddr_in resolve(const ProbeTarget& target) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const int rc = ::getaddrinfo(target.host.c_str(), nullptr, &hints, &res);
  if (rc != 0 || !res) {
    throw ProbeError(ProbeError::Code::ResolveFailed, "cannot resolve " + target.host + ": " + gai_strerror(rc));
  }
  sockaddr_in addr = *reinterpret_cast<sockaddr_in*>(res->ai_addr);
  ::freeaddrinfo(res);
  addr.sin_port = htons(target.port);
  return addr;
}

// Returns the connect time, or nothing on timeout or refusal.
std::optional<Micros> probe_once(const sockaddr_in& addr, std::chrono::milliseconds timeout) {
  Fd fd(::socket(AF_INET, SOCK_STREAM | SOCK_NONBLOCK | SOCK_CLOEXEC, 0));
  if (fd.get() < 0) return std::nullopt;
  const auto start = std::chrono::steady_clock::now();
  int rc = ::connect(fd.get(), reinterpret_cast<const sockaddr*>(&addr), sizeof addr);
  if (rc != 0 && errno != EINPROGRESS) return std::nullopt;
  if (rc != 0) {
    pollfd p{fd.get(), POLLOUT, 0};
    const auto deadline = start + timeout;
    for (;;) {
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) return std::nullopt;
      rc = ::poll(&p, 1, static_cast<int>(left.count()));
      if (rc > 0) break;
      if (rc == 0) return std::nullopt;
      if (errno != EINTR) return std::nullopt;
    }
    int err = 0;
    socklen_t len = sizeof err;
    if (::getsockopt(fd.get(), SOL_SOCKET, SO_ERROR, &err, &len) != 0 || err != 0) return std::nullopt;
  }
  const auto elapsed = std::chrono::steady_clock::now() - start;
  return std::max<Micros>(1, std::chrono::duration_cast<std::chrono::microseconds>(elapsed).count());
}

}  // namespace

ProbeResult active_probe(const PolicyDocument& policy, const ProbeTarget& target, int count,
                         std::chrono::milliseconds timeout) {
  if (std::find(policy.probe_allowlist.begin(), policy.probe_allowlist.end(), target) ==
      policy.probe_allowlist.end()) {
    throw ProbeError(ProbeError::Code::TargetNotAllowed,
                     "probe target " + target.host + ":" + std::to_string(target.port) + " is not allow-listed");
  }
  const sockaddr_in addr = resolve(target);
  ProbeResult out;
  int lost = 0;
  for (int i = 0; i < count; ++i) {
    if (auto rtt = probe_once(addr, timeout)) {
      out.samples.push_back(*rtt);
    } else {
      ++lost;
    }
  }
  out.loss = count > 0 ? static_cast<double>(lost) / count : 0.0;
  if (out.samples.empty()) return out;
  std::vector<Micros> sorted = out.samples;
  std::sort(sorted.begin(), sorted.end());
  RttStats st;
  st.min = sorted.front();
  st.mean = std::accumulate(sorted.begin(), sorted.end(), Micros{0}) / static_cast<Micros>(sorted.size());
  // Nearest-rank percentile.
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(sorted.size())));
  st.p95 = sorted[std::max<std::size_t>(rank, 1) - 1];
  out.rtt = st;
  return out;
}

}  // namespace shgw
