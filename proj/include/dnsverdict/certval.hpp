// Copyright (c) the dnsverdict authors. All rights reserved.
// Licensed under the Apache 2.0 License.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

struct x509_st;  // OpenSSL X509, kept out of this header

namespace dnsverdict::certval {

struct ParsedCert {
  bool parse_ok = false;
  std::optional<std::string> subject_cn;
  std::vector<std::string> sans;     // DNS names only, lowercase
  std::string subject;               // RDN summary, e.g. "CN=example.com,O=Acme"
  std::string issuer;
  std::int64_t not_before = 0;
  std::int64_t not_after = 0;
  bool is_ca = false;
  std::string fingerprint;           // sha256 hex over raw DER
  std::vector<std::uint8_t> raw;
  std::shared_ptr<x509_st> handle;   // null when parse failed
};

enum class InvalidReason { UNTRUSTED_ROOT, HOSTNAME_MISMATCH, EXPIRED, PARSE_ERROR, OTHER };

struct CertSignature {
  std::string leaf_fingerprint;
  InvalidReason invalid_reason;

  auto operator<=>(const CertSignature&) const = default;
};

constexpr std::int64_t kDefaultExpiryToleranceSecs = 432000;  // 5 days

struct CertPolicy {
  std::vector<ParsedCert> root_store;
  std::int64_t expiry_tolerance_secs = kDefaultExpiryToleranceSecs;
  bool deprecated_root_tolerance = true;
  std::int64_t reference_time = 0;
};

enum class Tolerance { EXPIRY, DEPRECATED_ROOT };

enum class CertCase { VALID, UNTRUSTED_MATCHED, TRUSTED_MISMATCHED, UNTRUSTED_MISMATCHED, PARSE_ERROR };

// First defect found by strict validation. NONE when the path verified.
enum class TrustFailure {
  NONE,
  EMPTY_CHAIN,
  PARSE_ERROR,
  EXPIRED,
  NOT_YET_VALID,
  BAD_SIGNATURE,
  NAME_CHAIN,
  NOT_CA,
  NO_PATH,
};

struct TrustResult {
  bool trusted = false;
  std::set<Tolerance> tolerances;
  std::string detail;
  TrustFailure failure = TrustFailure::NONE;
};

struct CertAssessment {
  CertCase cert_case = CertCase::PARSE_ERROR;
  bool trusted = false;
  bool hostname_match = false;
  std::set<Tolerance> tolerances_applied;
  std::string detail;
  TrustFailure trust_failure = TrustFailure::NONE;
};

ParsedCert parse_cert(std::span<const std::uint8_t> der);
std::vector<ParsedCert> parse_chain(std::span<const std::vector<std::uint8_t>> raw_chain);

// Strict path validation of the chain exactly as presented (leaf first):
// adjacent name chaining, signature checks, validity windows at
// policy.reference_time, CA bit on issuers, and a terminal link into the
// root store. Tolerances per policy: EXPIRY accepts a path whose only
// defect is expiry strictly less than expiry_tolerance_secs before
// reference_time; DEPRECATED_ROOT accepts a failing chain whose proper
// leaf-anchored prefix validates strictly to a store root (the expired
// cross-sign pattern).
TrustResult verify_trust(std::span<const ParsedCert> chain, const CertPolicy& policy);

// RFC 6125: SAN DNS names, CN fallback only when no SANs are present;
// wildcard only as the complete leftmost label, matching exactly one
// non-empty label, with at least two labels remaining in the pattern.
bool match_hostname(const ParsedCert& leaf, std::string_view domain);
bool hostname_matches_pattern(std::string_view pattern, std::string_view domain);

CertAssessment assess(std::span<const std::vector<std::uint8_t>> raw_chain, std::string_view domain,
                      const CertPolicy& policy);
CertAssessment assess_parsed(std::span<const ParsedCert> chain, std::string_view domain,
                             const CertPolicy& policy);

// Identity of an invalid certificate for pool matching. Throws
// ContractViolation when the assessment is VALID.
CertSignature signature_of(const CertAssessment& assessment, const ParsedCert& leaf);

std::string to_string(CertCase c);
std::string to_string(InvalidReason r);
std::string to_string(Tolerance t);
std::optional<CertCase> cert_case_from_string(std::string_view s);
std::optional<InvalidReason> invalid_reason_from_string(std::string_view s);
std::optional<Tolerance> tolerance_from_string(std::string_view s);

// PEM helpers for root stores and fixtures.
std::vector<ParsedCert> load_pem_bundle(std::istream& in);
std::string to_pem(std::span<const std::uint8_t> der);

}  // namespace dnsverdict::certval
