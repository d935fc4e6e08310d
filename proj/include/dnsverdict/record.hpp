// Copyright (c) the dnsverdict authors. All rights reserved.
// Licensed under the Apache 2.0 License.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dnsverdict/ip.hpp"

namespace dnsverdict {

// One resolver's answer for one domain.
struct DnsResponse {
  IpAddr resolver_ip;
  std::string resolver_country;  // 2-letter code
  std::string domain;            // lowercase FQDN, no trailing dot
  int rcode = 0;                 // 0..23, or -1 for timeout/no answer
  std::vector<IpAddr> answers;
  std::optional<std::string> error;
  std::int64_t timestamp = 0;
  bool is_control = false;

  bool operator==(const DnsResponse&) const = default;
};

struct ResolutionPair {
  std::string domain;
  IpAddr ip;

  auto operator<=>(const ResolutionPair&) const = default;
};

// Per-IP auxiliary data (AS, PTR, CDN, content hashes). Stands in for the
// online lookups a live deployment would do; any field may be absent.
struct IpMetadata {
  std::optional<std::int64_t> asn;
  std::optional<std::string> as_name;
  std::optional<std::string> ptr;
  std::optional<std::string> cdn;
  std::optional<std::string> http_hash;
  std::optional<std::string> cert_hash;

  bool operator==(const IpMetadata&) const = default;
};

class IpMetadataTable {
 public:
  const IpMetadata* lookup(const IpAddr& ip) const;
  void put(const IpAddr& ip, IpMetadata meta);
  size_t size() const { return rows_.size(); }
  const std::map<IpAddr, IpMetadata>& rows() const { return rows_; }

  // One record per line: {"ip": ..., "asn": ..., "as_name": ..., "ptr": ...,
  // "cdn": ..., "http_hash": ..., "cert_hash": ...}.
  static IpMetadataTable load(std::istream& in);
  void save(std::ostream& out) const;

  bool operator==(const IpMetadataTable&) const = default;

 private:
  std::map<IpAddr, IpMetadata> rows_;
};

}  // namespace dnsverdict
