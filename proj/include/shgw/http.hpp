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

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

namespace shgw {

constexpr std::size_t kDefaultMaxScan = 8 * 1024;

struct HttpGetInfo {
  std::string method = "GET";
  std::string url;
  std::string host;
  std::string user_agent;
  std::string referer;
  bool complete = false;

  bool operator==(const HttpGetInfo&) const = default;
};

enum class HttpParseStatus { Complete, NotHttp, NeedMoreData, HeaderTooLarge };

struct HttpParseResult {
  HttpParseStatus status = HttpParseStatus::NotHttp;
  HttpGetInfo info;           // meaningful when status == Complete
  std::size_t head_length = 0;  // bytes consumed incl. the blank line
};

/// Parses a GET request head from the start of `prefix`. Never looks past
/// `max_scan` bytes. POST and every other method yield NotHttp.
HttpParseResult parse_get(std::string_view prefix, std::size_t max_scan = kDefaultMaxScan);

/// Per-session incremental state: concatenates initiator payloads in arrival
/// order and parses the first GET head. Later pipelined GETs are only counted.
class HttpStream {
 public:
  explicit HttpStream(std::size_t max_scan = kDefaultMaxScan) : max_scan_(max_scan) {}

  void feed(std::string_view payload);

  HttpParseStatus status() const { return status_; }
  bool done() const { return status_ != HttpParseStatus::NeedMoreData; }
  const HttpGetInfo* info() const {
    return status_ == HttpParseStatus::Complete ? &info_ : nullptr;
  }
  std::uint32_t extra_gets() const { return extra_gets_; }
  /// Heap bytes held by the reassembly buffer.
  std::size_t buffered_bytes() const { return buffer_.capacity() > sizeof(std::string) ? buffer_.capacity() : 0; }

 private:
  std::size_t max_scan_;
  std::string buffer_;
  HttpParseStatus status_ = HttpParseStatus::NeedMoreData;
  HttpGetInfo info_;
  std::uint32_t extra_gets_ = 0;
};

/// Lowercased filename extension of a URL path ("/a/b.SWF?x=1" -> "swf").
std::string url_extension(std::string_view url);

}  // namespace shgw
