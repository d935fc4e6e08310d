// Copyright (c) the dnsverdict authors. All rights reserved.
// Licensed under the Apache 2.0 License.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dnsverdict/record.hpp"

namespace dnsverdict::probe {

struct HttpPage {
  int status = 0;  // 100..599
  std::vector<std::pair<std::string, std::string>> headers;
  std::vector<std::uint8_t> body;
  bool body_truncated = false;

  bool operator==(const HttpPage&) const = default;
};

struct FetchResult {
  ResolutionPair pair;
  std::optional<HttpPage> http;
  std::optional<HttpPage> https_page;
  // DER certificates, leaf first, exactly as presented. Present iff the
  // TLS handshake completed; no validation happens here.
  std::optional<std::vector<std::vector<std::uint8_t>>> chain;
  std::optional<std::string> http_error;
  std::optional<std::string> https_error;
  std::int64_t fetched_at = 0;

  bool operator==(const FetchResult&) const = default;
};

struct FetchLimits {
  double timeout_secs = 10.0;
  size_t max_body_bytes = 512 * 1024;
  int max_concurrency = 8;
  double per_ip_rate = 0.0;  // requests per second per IP; <=0 means unlimited
};

// One port-level request. fetch_pair fills host (and sni for 443) with the
// pair's domain; transports must not substitute their own values.
struct ProbeRequest {
  IpAddr ip;
  int port = 80;
  std::string host;  // Host header value
  std::string sni;   // empty for plain HTTP
  double timeout_secs = 10.0;
  size_t max_body_bytes = 512 * 1024;
};

struct HttpOutcome {
  std::optional<HttpPage> page;
  std::optional<std::string> error;
};

struct TlsOutcome {
  std::vector<std::vector<std::uint8_t>> chain;  // empty when the handshake failed
  std::optional<HttpPage> page;
  std::optional<std::string> error;
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpOutcome get_http(const ProbeRequest& req) = 0;
  virtual TlsOutcome get_https(const ProbeRequest& req) = 0;
};

FetchResult fetch_pair(const ResolutionPair& pair, Transport& transport, const FetchLimits& limits,
                       std::int64_t now_unix);

struct FetchAllStats {
  size_t duplicate_pairs = 0;
};

// Bounded worker pool; results come back in input order.
std::vector<FetchResult> fetch_all(std::span<const ResolutionPair> pairs, Transport& transport,
                                   const FetchLimits& limits, std::int64_t now_unix,
                                   FetchAllStats* stats = nullptr);

// Fetch archive: one record per line, chains as base64 DER lists, so a
// classify run can replay fetches offline.
void write_archive(std::ostream& out, std::span<const FetchResult> results);
std::vector<FetchResult> read_archive(std::istream& in);

}  // namespace dnsverdict::probe
