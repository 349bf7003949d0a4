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
#include <optional>
#include <stdexcept>
#include <vector>

#include "shgw/net.hpp"
#include "shgw/policy.hpp"

namespace shgw {

class ProbeError : public std::runtime_error {
 public:
  enum class Code { TargetNotAllowed, ResolveFailed };
  ProbeError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

struct RttStats {
  Micros min = 0;
  Micros mean = 0;
  Micros p95 = 0;
};

struct ProbeResult {
  std::optional<RttStats> rtt;  // absent when every probe timed out
  double loss = 0;              // timeouts / count
  std::vector<Micros> samples;
  bool all_timed_out() const { return !rtt; }
};

/// Times `count` TCP connection establishments to `target`. The target must
/// be in the policy allow-list; an empty allow-list disables probing.
ProbeResult active_probe(const PolicyDocument& policy, const ProbeTarget& target, int count,
                         std::chrono::milliseconds timeout);

}  // namespace shgw
