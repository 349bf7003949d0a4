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

#include "shgw/http.hpp"

#include <algorithm>

#include "shgw/net.hpp"

namespace shgw {

namespace {

constexpr std::string_view kGet = "GET ";
constexpr std::string_view kCrlf = "\r\n";

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

bool starts_with_icase(std::string_view s, std::string_view prefix) {
  return s.size() >= prefix.size() && iequals(s.substr(0, prefix.size()), prefix);
}

}  // namespace

HttpParseResult parse_get(std::string_view prefix, std::size_t max_scan) {
  HttpParseResult result;
  const std::string_view window = prefix.substr(0, std::min(prefix.size(), max_scan));

  if (window.size() < kGet.size()) {
    result.status = kGet.substr(0, window.size()) == window ? HttpParseStatus::NeedMoreData
                                                              : HttpParseStatus::NotHttp;
    if (result.status == HttpParseStatus::NeedMoreData && prefix.size() >= max_scan)
      result.status = HttpParseStatus::HeaderTooLarge;
    return result;
  }
  if (window.substr(0, kGet.size()) != kGet) return result;  // NotHttp

  const auto end = window.find("\r\n\r\n");
  if (end == std::string_view::npos) {
    result.status = prefix.size() >= max_scan ? HttpParseStatus::HeaderTooLarge
                                              : HttpParseStatus::NeedMoreData;
    return result;
  }
  const std::string_view head = window.substr(0, end + 2);
  result.head_length = end + 4;

  // Request line: GET SP target SP HTTP/x.y
  const auto line_end = head.find(kCrlf);
  std::string_view line = head.substr(kGet.size(), line_end - kGet.size());
  const auto sp = line.find(' ');
  if (sp == std::string_view::npos || sp == 0) return result;
  std::string_view target = line.substr(0, sp);
  const std::string_view version = line.substr(sp + 1);
  if (version.substr(0, 5) != "HTTP/" || version.find(' ') != std::string_view::npos) return result;

  HttpGetInfo& info = result.info;
  if (starts_with_icase(target, "http://")) {
    std::string_view rest = target.substr(7);
    const auto slash = rest.find_first_of("/?");
    std::string_view authority = rest.substr(0, slash);
    if (const auto colon = authority.find(':'); colon != std::string_view::npos)
      authority = authority.substr(0, colon);
    info.host = std::string(authority);
    std::string path = slash == std::string_view::npos ? "/" : std::string(rest.substr(slash));
    if (path.front() == '?') path.insert(path.begin(), '/');
    info.url = std::move(path);
  } else {
    info.url = std::string(target);
  }

  bool host_header = false, ua = false, ref = false;
  std::size_t pos = line_end + 2;
  while (pos < head.size()) {
    const auto eol = head.find(kCrlf, pos);
    const std::string_view field = head.substr(pos, eol - pos);
    pos = eol + 2;
    const auto colon = field.find(':');
    if (colon == std::string_view::npos) continue;
    const std::string_view name = trim(field.substr(0, colon));
    const std::string_view value = trim(field.substr(colon + 1));
    if (!host_header && iequals(name, "host")) {
      info.host = std::string(value);
      host_header = true;
    } else if (!ua && iequals(name, "user-agent")) {
      info.user_agent = std::string(value);
      ua = true;
    } else if (!ref && iequals(name, "referer")) {
      info.referer = std::string(value);
      ref = true;
    }
  }
  if (info.url.empty()) return result;
  info.complete = true;
  result.status = HttpParseStatus::Complete;
  return result;
}

void HttpStream::feed(std::string_view payload) {
  if (payload.empty()) return;
  if (done()) {
    if (status_ == HttpParseStatus::Complete && payload.substr(0, kGet.size()) == kGet)
      ++extra_gets_;
    return;
  }
  const std::size_t room = max_scan_ - std::min(max_scan_, buffer_.size());
  buffer_.append(payload.substr(0, room));
  std::string_view view = buffer_;
  HttpParseResult r = parse_get(view, max_scan_);
  status_ = r.status;
  if (status_ == HttpParseStatus::Complete) {
    info_ = std::move(r.info);
    if (view.substr(r.head_length, kGet.size()) == kGet) ++extra_gets_;
  }
  if (done()) std::string().swap(buffer_);
}

std::string url_extension(std::string_view url) {
  url = url.substr(0, url.find_first_of("?#"));
  const auto slash = url.rfind('/');
  const std::string_view name = slash == std::string_view::npos ? url : url.substr(slash + 1);
  const auto dot = name.rfind('.');
  if (dot == std::string_view::npos || dot + 1 == name.size()) return {};
  return to_lower(name.substr(dot + 1));
}

}  // namespace shgw
