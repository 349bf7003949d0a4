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

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "shgw/flow.hpp"
#include "shgw/mda.hpp"
#include "shgw/net.hpp"
#include "shgw/qos.hpp"

namespace shgw {

inline constexpr int kShdrSchemaVersion = 1;

enum class RecordType { Session, Qos, Alert };

std::string_view to_string(RecordType t);
std::optional<RecordType> parse_record_type(std::string_view s);

struct HttpFields {
  std::string url;
  std::string host;
  std::string user_agent;
  std::string referer;
  bool operator==(const HttpFields&) const = default;
};

/// Smart Home Detail Record.
struct ShdrRecord {
  RecordType record_type = RecordType::Session;
  Micros ts_first = 0;
  Micros ts_last = 0;
  MacAddr src_mac{};
  MacAddr dst_mac{};
  Ipv4 src_ip;
  Ipv4 dst_ip;
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  Transport transport = Transport::OTHER;
  std::uint64_t byte_count_up = 0;
  std::uint64_t byte_count_down = 0;
  std::uint64_t pkt_count_up = 0;
  std::uint64_t pkt_count_down = 0;
  AwarenessLabels labels;
  std::optional<HttpFields> http;
  std::int64_t policy_version = 0;
  std::string gateway_id;
  std::optional<QosSnapshot> qos;  // QOS records only

  bool operator==(const ShdrRecord&) const = default;
};

/// Heap plus inline bytes held by a record, for memory accounting.
std::size_t approx_footprint(const ShdrRecord& r);

using AlertSet = std::set<std::string, std::less<>>;

/// Projects an expired, classified session into a record. Sessions whose
/// application is in `alert_apps` become ALERT records.
ShdrRecord build_record(const Session& s, const AwarenessLabels& labels, std::int64_t policy_version,
                        const std::string& gateway_id, const AlertSet& alert_apps);

ShdrRecord build_qos_record(const QosSnapshot& snap, std::int64_t policy_version,
                            const std::string& gateway_id);

class ShdrError : public std::runtime_error {
 public:
  enum class Code { MalformedLine, SchemaViolation, BadHeader, IoError };
  ShdrError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

struct DecodeStats {
  std::uint64_t unknown_fields = 0;
  std::uint64_t malformed = 0;
  std::uint64_t schema_violations = 0;
};

/// One newline-terminated JSON object with a fixed field order.
std::string encode(const ShdrRecord& r);

/// Inverse of encode. Unknown fields are skipped and counted in `stats`.
/// Throws ShdrError (MalformedLine or SchemaViolation).
ShdrRecord decode(std::string_view line, DecodeStats* stats = nullptr);

struct BatchHeader {
  int schema = kShdrSchemaVersion;
  std::string gateway_id;
  Micros window_start = 0;
  std::uint64_t records = 0;
  bool operator==(const BatchHeader&) const = default;
};

std::string encode_header(const BatchHeader& h);
BatchHeader decode_header(std::string_view line);

/// `shdr-<gateway_id>-<window_start_epoch>.log`
std::string batch_file_name(std::string_view gateway_id, Micros window_start);

struct BatchSummary {
  std::uint64_t count = 0;
  std::uint64_t bytes = 0;
};

struct BatchWriteHooks {
  // Runs after the temporary file is complete and before the rename.
  std::function<void(const std::filesystem::path& tmp)> before_rename;
};

/// Writes header + records to `path` via a temporary file and an atomic
/// rename. Writes nothing for an empty batch. Throws ShdrError(IoError).
BatchSummary write_batch_file(const std::vector<ShdrRecord>& records, const BatchHeader& header,
                              const std::filesystem::path& path, const BatchWriteHooks& hooks = {});

/// Same as write_batch_file for records that are already encoded.
BatchSummary write_batch_lines(const std::vector<std::string>& lines, const BatchHeader& header,
                               const std::filesystem::path& path, const BatchWriteHooks& hooks = {});

struct BatchContents {
  BatchHeader header;
  std::vector<ShdrRecord> records;
  DecodeStats stats;
};

/// Parses a whole batch body. Bad record lines are counted, never fatal; a
/// bad header line throws ShdrError(BadHeader).
BatchContents read_batch(std::string_view body);

}  // namespace shgw
