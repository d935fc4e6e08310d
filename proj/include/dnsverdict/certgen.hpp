// Copyright (c) the dnsverdict authors. All rights reserved.
// Licensed under the Apache 2.0 License.
#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dnsverdict/common.hpp"

struct evp_pkey_st;
struct x509_st;

namespace dnsverdict::certgen {

// Synthetic CA material. Ed25519 keys come straight from generator bytes and
// Ed25519 signatures carry no nonce, so certificate bytes are a pure function
// of the generator state. Anything that must be reproducible leans on this.

struct Key {
  std::shared_ptr<evp_pkey_st> pkey;
};

Key make_key(Rng& rng);

struct CertSpec {
  std::string subject_cn;
  std::optional<std::string> subject_org;
  std::vector<std::string> dns_sans;
  std::vector<std::string> ip_sans;
  std::int64_t not_before = 0;
  std::int64_t not_after = 0;
  bool is_ca = false;
  std::uint64_t serial = 1;
};

struct IssuedCert {
  std::vector<std::uint8_t> der;
  Key key;                          // the certified key
  std::shared_ptr<x509_st> handle;
  std::string subject_cn;
};

// Self-signed when issuer is null; otherwise issuer names and signs.
IssuedCert issue(const CertSpec& spec, const IssuedCert* issuer, Key subject_key);

// Copy of the DER with the trailing signature byte flipped: still parseable,
// signature check fails.
std::vector<std::uint8_t> corrupt_signature(const std::vector<std::uint8_t>& der);

std::string key_to_pem(const Key& key);

}  // namespace dnsverdict::certgen
