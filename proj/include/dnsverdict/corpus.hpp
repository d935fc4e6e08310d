// Copyright (c) the dnsverdict authors. All rights reserved.
// Licensed under the Apache 2.0 License.
#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "dnsverdict/certval.hpp"
#include "dnsverdict/probe.hpp"
#include "dnsverdict/record.hpp"

namespace dnsverdict::corpus {

// Order matters: the first matching rule names the exclusion.
enum class ExclusionReason { ALL_TIMEOUT, ALL_NONZERO_RCODE, ALL_EMPTY, ALL_PRIVATE, SAME_IP_SET };

struct ExclusionRecord {
  IpAddr resolver_ip;
  ExclusionReason reason;

  bool operator==(const ExclusionRecord&) const = default;
};

struct ParseStats {
  size_t total_lines = 0;  // non-blank lines
  size_t parsed = 0;
  size_t malformed = 0;
  size_t first_malformed_line = 0;  // 1-based, 0 when none
};

// Newline-delimited records; malformed lines are skipped and counted, but
// more than 10% malformed aborts with the first offending line number.
std::vector<DnsResponse> parse_snapshot(std::istream& in, ParseStats* stats = nullptr);
void write_snapshot(std::ostream& out, std::span<const DnsResponse> responses);

struct FilterResult {
  std::vector<DnsResponse> kept;
  std::vector<ExclusionRecord> excluded;
};

// Drops test resolvers whose entire answer behavior is noise. Resolvers with
// any control response are exempt. Kept responses preserve input order.
FilterResult filter_resolvers(const std::vector<DnsResponse>& responses);

// Unique (domain, ip) pairs in first-seen order. Private IPs included; the
// classifier deals with them.
std::vector<ResolutionPair> dedup_pairs(const std::vector<DnsResponse>& responses);

struct ControlSet {
  std::map<std::string, std::set<IpAddr>> control_ips;
  std::map<std::string, std::set<std::string>> control_http_hashes;
  std::map<std::string, std::set<std::string>> control_cert_hashes;
  std::map<std::string, std::set<std::int64_t>> control_asns;
  std::map<std::string, std::set<std::string>> control_as_names;
  std::map<std::string, std::set<std::string>> control_cdns;
  std::map<std::string, std::set<certval::CertSignature>> invalid_control_certs;

  bool covers(const std::string& domain) const { return control_ips.contains(domain); }
};

struct ControlBuildResult {
  ControlSet control;
  // Domains seen in the snapshot that no control response covers.
  std::vector<std::string> uncovered_domains;
};

// Control answers + metadata fill the per-domain sets; control fetches are
// assessed (reference time = each fetch's fetched_at unless the policy pins
// one, tolerances from policy) and the failing ones feed
// invalid_control_certs. Fetches for IPs outside the control answers are
// ignored so no test data leaks in.
ControlBuildResult build_control_set(const std::vector<DnsResponse>& responses,
                                     const IpMetadataTable& metadata,
                                     const std::vector<probe::FetchResult>& control_fetches,
                                     const certval::CertPolicy& policy);

std::string to_string(ExclusionReason r);
std::optional<ExclusionReason> exclusion_reason_from_string(std::string_view s);

}  // namespace dnsverdict::corpus
