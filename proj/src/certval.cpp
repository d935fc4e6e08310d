// Copyright (c) the dnsverdict authors. All rights reserved.
// Licensed under the Apache 2.0 License.
#include "dnsverdict/certval.hpp"

#include <openssl/asn1.h>
#include <openssl/bio.h>
#include <openssl/evp.h>
#include <openssl/pem.h>
#include <openssl/x509.h>
#include <openssl/x509v3.h>

#include <cstring>
#include <ctime>
#include <istream>
#include <sstream>

#include "dnsverdict/common.hpp"

namespace dnsverdict::certval {

namespace {

std::string name_to_string(X509_NAME* name) {
  if (!name) return {};
  BIO* bio = BIO_new(BIO_s_mem());
  X509_NAME_print_ex(bio, name, 0, XN_FLAG_RFC2253);
  char* data = nullptr;
  long n = BIO_get_mem_data(bio, &data);
  std::string out(data, static_cast<size_t>(n));
  BIO_free(bio);
  return out;
}

std::optional<std::int64_t> asn1_time_to_unix(const ASN1_TIME* t) {
  if (!t) return std::nullopt;
  std::tm tm{};
  if (ASN1_TIME_to_tm(t, &tm) != 1) return std::nullopt;
  return static_cast<std::int64_t>(timegm(&tm));
}

std::optional<std::string> first_cn(X509_NAME* name) {
  int idx = X509_NAME_get_index_by_NID(name, NID_commonName, -1);
  if (idx < 0) return std::nullopt;
  X509_NAME_ENTRY* entry = X509_NAME_get_entry(name, idx);
  ASN1_STRING* data = X509_NAME_ENTRY_get_data(entry);
  unsigned char* utf8 = nullptr;
  int n = ASN1_STRING_to_UTF8(&utf8, data);
  if (n < 0) return std::nullopt;
  std::string out(reinterpret_cast<char*>(utf8), static_cast<size_t>(n));
  OPENSSL_free(utf8);
  return out;
}

std::vector<std::string> dns_sans(X509* x) {
  std::vector<std::string> out;
  auto* names = static_cast<GENERAL_NAMES*>(X509_get_ext_d2i(x, NID_subject_alt_name, nullptr, nullptr));
  if (!names) return out;
  for (int i = 0; i < sk_GENERAL_NAME_num(names); ++i) {
    GENERAL_NAME* gn = sk_GENERAL_NAME_value(names, i);
    if (gn->type != GEN_DNS) continue;  // IP and other SAN forms carry no hostname claim here
    const unsigned char* p = ASN1_STRING_get0_data(gn->d.dNSName);
    int n = ASN1_STRING_length(gn->d.dNSName);
    if (p && n > 0) out.push_back(ascii_lower(std::string_view(reinterpret_cast<const char*>(p), n)));
  }
  GENERAL_NAMES_free(names);
  return out;
}

bool names_equal(X509_NAME* a, X509_NAME* b) { return X509_NAME_cmp(a, b) == 0; }

bool signed_by(X509* cert, X509* issuer) {
  EVP_PKEY* key = X509_get0_pubkey(issuer);
  if (!key) return false;
  return X509_verify(cert, key) == 1;
}

struct StrictOutcome {
  bool ok = false;
  TrustFailure failure = TrustFailure::NONE;
  std::string detail;
};

// Validates the chain exactly as presented. slack relaxes only expiry:
// a certificate counts as within its window when reference_time is at most
// not_after, or past it by strictly less than slack seconds.
StrictOutcome validate_strict(std::span<const ParsedCert> chain, const CertPolicy& policy,
                              std::int64_t slack) {
  const std::int64_t ref = policy.reference_time;

  auto window_ok = [&](const ParsedCert& c, TrustFailure& out_failure) {
    if (ref < c.not_before) {
      out_failure = TrustFailure::NOT_YET_VALID;
      return false;
    }
    if (ref > c.not_after && ref - c.not_after >= slack) {
      out_failure = TrustFailure::EXPIRED;
      return false;
    }
    return true;
  };

  for (size_t i = 0; i < chain.size(); ++i) {
    TrustFailure f = TrustFailure::NONE;
    if (!window_ok(chain[i], f)) {
      return {false, f,
              (f == TrustFailure::EXPIRED ? "expired at depth " : "not yet valid at depth ") +
                  std::to_string(i)};
    }
    if (i > 0 && !chain[i].is_ca) {
      return {false, TrustFailure::NOT_CA, "issuer at depth " + std::to_string(i) + " is not a CA"};
    }
  }

  for (size_t i = 0; i + 1 < chain.size(); ++i) {
    X509* child = chain[i].handle.get();
    X509* parent = chain[i + 1].handle.get();
    if (!names_equal(X509_get_issuer_name(child), X509_get_subject_name(parent))) {
      return {false, TrustFailure::NAME_CHAIN,
              "issuer/subject mismatch between depths " + std::to_string(i) + " and " +
                  std::to_string(i + 1)};
    }
    if (!signed_by(child, parent)) {
      return {false, TrustFailure::BAD_SIGNATURE,
              "signature check failed at depth " + std::to_string(i)};
    }
  }

  // Anchor the top of the chain in the store: either the top IS a store
  // root, or an in-window store CA directly signed it.
  const ParsedCert& top = chain.back();
  for (const ParsedCert& root : policy.root_store) {
    if (!root.parse_ok) continue;
    if (root.fingerprint == top.fingerprint) {
      return {true, TrustFailure::NONE, "anchored at store root " + root.subject};
    }
  }
  bool anchor_expired = false;
  for (const ParsedCert& root : policy.root_store) {
    if (!root.parse_ok || !root.is_ca) continue;
    if (!names_equal(X509_get_issuer_name(top.handle.get()), X509_get_subject_name(root.handle.get())))
      continue;
    if (!signed_by(top.handle.get(), root.handle.get())) continue;
    TrustFailure f = TrustFailure::NONE;
    if (!window_ok(root, f)) {
      // A root that anchors the path but is out of window is an expiry
      // defect of the path, not a missing path.
      if (f == TrustFailure::EXPIRED) anchor_expired = true;
      continue;
    }
    return {true, TrustFailure::NONE, "anchored under store root " + root.subject};
  }
  if (anchor_expired) {
    return {false, TrustFailure::EXPIRED, "anchoring store root expired for " + top.subject};
  }
  return {false, TrustFailure::NO_PATH, "no path to a policy root from " + top.subject};
}

}  // namespace

ParsedCert parse_cert(std::span<const std::uint8_t> der) {
  ParsedCert out;
  out.raw.assign(der.begin(), der.end());
  out.fingerprint = sha256_hex(der);
  const unsigned char* p = der.data();
  X509* x = d2i_X509(nullptr, &p, static_cast<long>(der.size()));
  if (!x || p != der.data() + der.size()) {
    // Reject trailing garbage as well as truncation.
    if (x) X509_free(x);
    out.parse_ok = false;
    return out;
  }
  out.handle = std::shared_ptr<x509_st>(x, X509_free);
  out.parse_ok = true;
  out.subject = name_to_string(X509_get_subject_name(x));
  out.issuer = name_to_string(X509_get_issuer_name(x));
  out.subject_cn = first_cn(X509_get_subject_name(x));
  out.sans = dns_sans(x);
  out.not_before = asn1_time_to_unix(X509_get0_notBefore(x)).value_or(0);
  out.not_after = asn1_time_to_unix(X509_get0_notAfter(x)).value_or(0);
  out.is_ca = X509_check_ca(x) != 0;
  return out;
}

std::vector<ParsedCert> parse_chain(std::span<const std::vector<std::uint8_t>> raw_chain) {
  std::vector<ParsedCert> out;
  out.reserve(raw_chain.size());
  for (const auto& der : raw_chain) out.push_back(parse_cert(der));
  return out;
}

TrustResult verify_trust(std::span<const ParsedCert> chain, const CertPolicy& policy) {
  if (chain.empty()) return {false, {}, "empty chain", TrustFailure::EMPTY_CHAIN};
  for (size_t i = 0; i < chain.size(); ++i) {
    if (!chain[i].parse_ok)
      return {false, {}, "unparseable certificate at depth " + std::to_string(i),
              TrustFailure::PARSE_ERROR};
  }

  StrictOutcome strict = validate_strict(chain, policy, 0);
  if (strict.ok) return {true, {}, strict.detail, TrustFailure::NONE};

  if (policy.expiry_tolerance_secs > 0 && strict.failure == TrustFailure::EXPIRED) {
    StrictOutcome relaxed = validate_strict(chain, policy, policy.expiry_tolerance_secs);
    if (relaxed.ok) {
      return {true, {Tolerance::EXPIRY}, "expired within tolerance; " + relaxed.detail,
              TrustFailure::NONE};
    }
  }

  if (policy.deprecated_root_tolerance && chain.size() >= 2) {
    // Expired-cross-sign pattern: some proper leaf-anchored prefix of the
    // presented chain stands on its own.
    for (size_t k = chain.size() - 1; k >= 1; --k) {
      StrictOutcome sub = validate_strict(chain.first(k), policy, 0);
      if (sub.ok) {
        return {true, {Tolerance::DEPRECATED_ROOT},
                "prefix of length " + std::to_string(k) + " verifies; " + sub.detail,
                TrustFailure::NONE};
      }
      if (policy.expiry_tolerance_secs > 0 && sub.failure == TrustFailure::EXPIRED) {
        StrictOutcome sub_relaxed = validate_strict(chain.first(k), policy, policy.expiry_tolerance_secs);
        if (sub_relaxed.ok) {
          return {true, {Tolerance::DEPRECATED_ROOT, Tolerance::EXPIRY},
                  "prefix of length " + std::to_string(k) + " verifies within expiry tolerance; " +
                      sub_relaxed.detail,
                  TrustFailure::NONE};
        }
      }
    }
  }

  return {false, {}, strict.detail, strict.failure};
}

CertAssessment assess_parsed(std::span<const ParsedCert> chain, std::string_view domain,
                             const CertPolicy& policy) {
  CertAssessment out;
  if (chain.empty()) {
    out.cert_case = CertCase::PARSE_ERROR;
    out.detail = "empty chain";
    out.trust_failure = TrustFailure::EMPTY_CHAIN;
    return out;
  }
  if (!chain[0].parse_ok) {
    out.cert_case = CertCase::PARSE_ERROR;
    out.detail = "unparseable leaf";
    out.trust_failure = TrustFailure::PARSE_ERROR;
    return out;
  }
  TrustResult trust = verify_trust(chain, policy);
  out.trusted = trust.trusted;
  out.tolerances_applied = trust.tolerances;
  out.trust_failure = trust.failure;
  out.hostname_match = match_hostname(chain[0], domain);
  out.detail = trust.detail + "; reference_time=" + std::to_string(policy.reference_time);
  if (out.trusted && out.hostname_match)
    out.cert_case = CertCase::VALID;
  else if (!out.trusted && out.hostname_match)
    out.cert_case = CertCase::UNTRUSTED_MATCHED;
  else if (out.trusted)
    out.cert_case = CertCase::TRUSTED_MISMATCHED;
  else
    out.cert_case = CertCase::UNTRUSTED_MISMATCHED;
  return out;
}

CertAssessment assess(std::span<const std::vector<std::uint8_t>> raw_chain, std::string_view domain,
                      const CertPolicy& policy) {
  std::vector<ParsedCert> chain = parse_chain(raw_chain);
  return assess_parsed(chain, domain, policy);
}

CertSignature signature_of(const CertAssessment& assessment, const ParsedCert& leaf) {
  if (assessment.cert_case == CertCase::VALID)
    throw ContractViolation("signature_of called on a VALID assessment");
  if (assessment.cert_case == CertCase::PARSE_ERROR)
    return {leaf.fingerprint, InvalidReason::PARSE_ERROR};
  if (assessment.trusted) return {leaf.fingerprint, InvalidReason::HOSTNAME_MISMATCH};
  // Untrusted: name the trust defect. A mismatched hostname on top of an
  // untrusted chain keeps the trust defect as its reason so control and
  // test sides agree for the same chain.
  switch (assessment.trust_failure) {
    case TrustFailure::EXPIRED:
      return {leaf.fingerprint, InvalidReason::EXPIRED};
    case TrustFailure::NO_PATH:
    case TrustFailure::BAD_SIGNATURE:
    case TrustFailure::NAME_CHAIN:
    case TrustFailure::NOT_CA:
      return {leaf.fingerprint, InvalidReason::UNTRUSTED_ROOT};
    case TrustFailure::PARSE_ERROR:
      return {leaf.fingerprint, InvalidReason::PARSE_ERROR};
    default:
      return {leaf.fingerprint, InvalidReason::OTHER};
  }
}

std::string to_string(CertCase c) {
  switch (c) {
    case CertCase::VALID: return "VALID";
    case CertCase::UNTRUSTED_MATCHED: return "UNTRUSTED_MATCHED";
    case CertCase::TRUSTED_MISMATCHED: return "TRUSTED_MISMATCHED";
    case CertCase::UNTRUSTED_MISMATCHED: return "UNTRUSTED_MISMATCHED";
    case CertCase::PARSE_ERROR: return "PARSE_ERROR";
  }
  return "?";
}

std::string to_string(InvalidReason r) {
  switch (r) {
    case InvalidReason::UNTRUSTED_ROOT: return "UNTRUSTED_ROOT";
    case InvalidReason::HOSTNAME_MISMATCH: return "HOSTNAME_MISMATCH";
    case InvalidReason::EXPIRED: return "EXPIRED";
    case InvalidReason::PARSE_ERROR: return "PARSE_ERROR";
    case InvalidReason::OTHER: return "OTHER";
  }
  return "?";
}

std::string to_string(Tolerance t) {
  switch (t) {
    case Tolerance::EXPIRY: return "EXPIRY";
    case Tolerance::DEPRECATED_ROOT: return "DEPRECATED_ROOT";
  }
  return "?";
}

std::optional<CertCase> cert_case_from_string(std::string_view s) {
  for (CertCase c : {CertCase::VALID, CertCase::UNTRUSTED_MATCHED, CertCase::TRUSTED_MISMATCHED,
                     CertCase::UNTRUSTED_MISMATCHED, CertCase::PARSE_ERROR})
    if (to_string(c) == s) return c;
  return std::nullopt;
}

std::optional<InvalidReason> invalid_reason_from_string(std::string_view s) {
  for (InvalidReason r : {InvalidReason::UNTRUSTED_ROOT, InvalidReason::HOSTNAME_MISMATCH,
                          InvalidReason::EXPIRED, InvalidReason::PARSE_ERROR, InvalidReason::OTHER})
    if (to_string(r) == s) return r;
  return std::nullopt;
}

std::optional<Tolerance> tolerance_from_string(std::string_view s) {
  for (Tolerance t : {Tolerance::EXPIRY, Tolerance::DEPRECATED_ROOT})
    if (to_string(t) == s) return t;
  return std::nullopt;
}

std::vector<ParsedCert> load_pem_bundle(std::istream& in) {
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string pem = ss.str();
  std::vector<ParsedCert> out;
  BIO* bio = BIO_new_mem_buf(pem.data(), static_cast<int>(pem.size()));
  while (true) {
    X509* x = PEM_read_bio_X509(bio, nullptr, nullptr, nullptr);
    if (!x) break;
    unsigned char* der = nullptr;
    int n = i2d_X509(x, &der);
    if (n > 0) {
      out.push_back(parse_cert(std::span<const std::uint8_t>(der, static_cast<size_t>(n))));
      OPENSSL_free(der);
    }
    X509_free(x);
  }
  BIO_free(bio);
  return out;
}

std::string to_pem(std::span<const std::uint8_t> der) {
  std::string b64 = base64_encode(der);
  std::string out = "-----BEGIN CERTIFICATE-----\n";
  for (size_t i = 0; i < b64.size(); i += 64) {
    out += b64.substr(i, 64);
    out += '\n';
  }
  out += "-----END CERTIFICATE-----\n";
  return out;
}

}  // namespace dnsverdict::certval
